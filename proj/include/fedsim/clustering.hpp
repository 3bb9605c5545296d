#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

/// Row i is the update of client client_ids[i]: its local parameters minus
/// the global parameters it started from.
struct UpdateMatrix {
  Eigen::MatrixXd rows;
  std::vector<int> client_ids;
};

/// One agglomeration step. Leaves are nodes 0..n-1; the cluster created by
/// merge m is node n + m. `a < b`.
struct Merge {
  Index a = 0;
  Index b = 0;
  double distance = 0.0;
  Index size = 0;
};

struct Dendrogram {
  std::vector<Merge> merges;
  Index leaf_count = 0;
};

struct ClusterAssignment {
  std::vector<int> labels;
  int num_clusters = 0;
  double threshold_used = 0.0;

  /// Row indices of each cluster, ascending.
  std::vector<std::vector<int>> members() const;
};

/// Throws SpecMismatchError when a client vector is bound to another spec.
/// Client ids default to 0..n-1.
UpdateMatrix compute_updates(std::span<const ParamVector> client_params, const ParamVector& global,
                             std::vector<int> client_ids = {});

/// Symmetric Euclidean distance matrix between the rows of `points`.
template <typename Derived>
Matrix<typename Derived::Scalar> pairwise_euclidean(const Eigen::MatrixBase<Derived>& points) {
  using Scalar = typename Derived::Scalar;
  const Index n = points.rows();
  if (n < 2) throw ClusterError("pairwise distances need at least 2 rows");
  Matrix<Scalar> d = Matrix<Scalar>::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const Scalar v = (points.row(i) - points.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  return d;
}

inline Eigen::MatrixXd pairwise_euclidean(const UpdateMatrix& updates) {
  return pairwise_euclidean(updates.rows);
}

/// Agglomerative Ward clustering on a Euclidean distance matrix with
/// Lance-Williams updates. Equal candidate distances go to the pair whose
/// smallest member leaves are lexicographically first.
Dendrogram ward_dendrogram(const Eigen::MatrixXd& distances);

/// Applies every merge at linkage distance <= max_distance. Labels are
/// numbered by first appearance over ascending leaf index.
ClusterAssignment cut_threshold(const Dendrogram& dendrogram, double max_distance);

}  // namespace fedsim
