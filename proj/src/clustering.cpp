#include "fedsim/clustering.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace fedsim {

std::vector<std::vector<int>> ClusterAssignment::members() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(num_clusters));
  for (std::size_t i = 0; i < labels.size(); ++i)
    out[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
  return out;
}

UpdateMatrix compute_updates(std::span<const ParamVector> client_params, const ParamVector& global,
                             std::vector<int> client_ids) {
  if (client_ids.empty()) {
    client_ids.resize(client_params.size());
    std::iota(client_ids.begin(), client_ids.end(), 0);
  }
  if (client_ids.size() != client_params.size())
    throw DimensionError("client id count does not match the parameter vectors");
  UpdateMatrix u;
  u.rows.resize(static_cast<Index>(client_params.size()), global.size());
  for (std::size_t i = 0; i < client_params.size(); ++i) {
    const auto& p = client_params[i];
    if (p.fingerprint != global.fingerprint || p.size() != global.size())
      throw SpecMismatchError("client " + std::to_string(client_ids[i]) +
                              " parameters are bound to a different model spec");
    u.rows.row(static_cast<Index>(i)) = (p.values - global.values).transpose();
  }
  u.client_ids = std::move(client_ids);
  return u;
}

Dendrogram ward_dendrogram(const Eigen::MatrixXd& distances) {
  const Index n = distances.rows();
  if (distances.cols() != n) throw ClusterError("distance matrix is not square");
  if (distances.hasNaN()) throw ClusterError("distance matrix contains NaN");

  // Slot i always holds the active cluster whose smallest leaf is i, so
  // scanning slots in order visits pairs in tie-break order.
  Eigen::MatrixXd d = distances;
  std::vector<bool> active(static_cast<std::size_t>(n), true);
  std::vector<Index> size(static_cast<std::size_t>(n), 1);
  std::vector<Index> node(static_cast<std::size_t>(n));
  std::iota(node.begin(), node.end(), Index{0});

  Dendrogram dend;
  dend.leaf_count = n;
  for (Index step = 0; step + 1 < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    Index s = -1;
    Index t = -1;
    for (Index i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (Index j = i + 1; j < n; ++j) {
        if (!active[static_cast<std::size_t>(j)]) continue;
        if (s < 0 || d(i, j) < best) {
          best = d(i, j);
          s = i;
          t = j;
        }
      }
    }
    const auto ss = static_cast<std::size_t>(s);
    const auto ts = static_cast<std::size_t>(t);
    const double ns = static_cast<double>(size[ss]);
    const double nt = static_cast<double>(size[ts]);
    const double dst2 = best * best;
    for (Index v = 0; v < n; ++v) {
      const auto vs = static_cast<std::size_t>(v);
      if (!active[vs] || v == s || v == t) continue;
      const double nv = static_cast<double>(size[vs]);
      const double num = (nv + ns) * d(v, s) * d(v, s) + (nv + nt) * d(v, t) * d(v, t) - nv * dst2;
      const double updated = std::sqrt(std::max(0.0, num / (nv + ns + nt)));
      d(v, s) = updated;
      d(s, v) = updated;
    }
    dend.merges.push_back({std::min(node[ss], node[ts]), std::max(node[ss], node[ts]), best,
                           size[ss] + size[ts]});
    size[ss] += size[ts];
    node[ss] = n + step;
    active[ts] = false;
  }
  return dend;
}

ClusterAssignment cut_threshold(const Dendrogram& dendrogram, double max_distance) {
  const Index n = dendrogram.leaf_count;
  // union-find over leaves; node_leaf maps any node id to a representative leaf
  std::vector<Index> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), Index{0});
  auto find = [&parent](Index x) {
    while (parent[static_cast<std::size_t>(x)] != x)
      x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    return x;
  };
  std::vector<Index> node_leaf(static_cast<std::size_t>(n) + dendrogram.merges.size());
  std::iota(node_leaf.begin(), node_leaf.begin() + n, Index{0});
  for (std::size_t m = 0; m < dendrogram.merges.size(); ++m) {
    const Merge& mg = dendrogram.merges[m];
    const Index la = node_leaf[static_cast<std::size_t>(mg.a)];
    const Index lb = node_leaf[static_cast<std::size_t>(mg.b)];
    node_leaf[static_cast<std::size_t>(n) + m] = la;
    if (mg.distance <= max_distance) parent[static_cast<std::size_t>(find(lb))] = find(la);
  }

  ClusterAssignment out;
  out.threshold_used = max_distance;
  out.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> label_of_root(static_cast<std::size_t>(n), -1);
  for (Index i = 0; i < n; ++i) {
    auto& lbl = label_of_root[static_cast<std::size_t>(find(i))];
    if (lbl < 0) lbl = out.num_clusters++;
    out.labels[static_cast<std::size_t>(i)] = lbl;
  }
  return out;
}

}  // namespace fedsim
