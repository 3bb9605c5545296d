#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "fedsim/clustering.hpp"

using namespace fedsim;

namespace {

using Partition = std::set<std::set<int>>;

Partition partition_of(const ClusterAssignment& a) {
  Partition p;
  for (const auto& m : a.members()) p.insert(std::set<int>(m.begin(), m.end()));
  return p;
}

Eigen::MatrixXd random_points(Index n, Index d, Rng& rng) {
  Eigen::MatrixXd x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) x(i, j) = rng.normal();
  return x;
}

struct OracleMerge {
  std::set<int> joined;
  double height;
};

// Greedy Ward by brute force: merge the pair of clusters whose union raises
// the total within-cluster sum of squares the least. Height = sqrt(2 * rise).
std::vector<OracleMerge> sse_oracle(const Eigen::MatrixXd& x) {
  std::vector<std::set<int>> clusters;
  for (int i = 0; i < x.rows(); ++i) clusters.push_back({i});
  auto sse = [&](const std::set<int>& c) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.cols());
    for (int i : c) mean += x.row(i);
    mean /= static_cast<double>(c.size());
    double s = 0;
    for (int i : c) s += (x.row(i) - mean).squaredNorm();
    return s;
  };
  std::vector<OracleMerge> out;
  while (clusters.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0;
    std::size_t bb = 0;
    for (std::size_t a = 0; a < clusters.size(); ++a)
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        std::set<int> u = clusters[a];
        u.insert(clusters[b].begin(), clusters[b].end());
        const double rise = sse(u) - sse(clusters[a]) - sse(clusters[b]);
        if (rise < best) {
          best = rise;
          ba = a;
          bb = b;
        }
      }
    std::set<int> u = clusters[ba];
    u.insert(clusters[bb].begin(), clusters[bb].end());
    out.push_back({u, std::sqrt(2.0 * best)});
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
    clusters[ba] = u;
  }
  return out;
}

// Leaf sets created by each merge of a dendrogram.
std::vector<std::set<int>> merged_sets(const Dendrogram& d) {
  std::vector<std::set<int>> nodes;
  for (Index i = 0; i < d.leaf_count; ++i) nodes.push_back({static_cast<int>(i)});
  std::vector<std::set<int>> out;
  for (const auto& m : d.merges) {
    std::set<int> u = nodes[static_cast<std::size_t>(m.a)];
    u.insert(nodes[static_cast<std::size_t>(m.b)].begin(), nodes[static_cast<std::size_t>(m.b)].end());
    nodes.push_back(u);
    out.push_back(u);
  }
  return out;
}

}  // namespace

TEST_CASE("updates are client minus global") {
  const ModelSpec s = ModelSpec::logistic(2, 2);
  ParamVector g = zero_params<double>(s);
  g.values << 1, 2, 3, 4, 5, 6;
  ParamVector c = g;
  c.values(2) += 0.5;
  c.values(5) -= 2.0;
  const std::vector<ParamVector> clients{c, g};
  const UpdateMatrix u = compute_updates(clients, g, {7, 3});
  CHECK(u.client_ids == std::vector<int>{7, 3});
  Eigen::RowVectorXd want = Eigen::RowVectorXd::Zero(6);
  want(2) = 0.5;
  want(5) = -2.0;
  CHECK(u.rows.row(0) == want);
  CHECK(u.rows.row(1).isZero(0.0));
  CHECK(compute_updates(clients, g).client_ids == std::vector<int>{0, 1});
}

TEST_CASE("updates ignore a common translation") {
  const ModelSpec s = ModelSpec::logistic(3, 2);
  Rng rng(4);
  ParamVector g = zero_params<double>(s);
  std::vector<ParamVector> clients(4, g);
  for (auto& c : clients) c.values = Eigen::VectorXd::NullaryExpr(8, [&] { return rng.normal(); });
  g.values = Eigen::VectorXd::NullaryExpr(8, [&] { return rng.normal(); });
  const UpdateMatrix base = compute_updates(clients, g);
  const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(8, -3, 4);
  for (auto& c : clients) c.values += v;
  g.values += v;
  CHECK((compute_updates(clients, g).rows - base.rows).norm() < 1e-13);
  for (auto& c : clients) c = g;
  CHECK(compute_updates(clients, g).rows.isZero(0.0));
}

TEST_CASE("update errors") {
  const ParamVector g = zero_params<double>(ModelSpec::logistic(2, 2));
  const ParamVector other = zero_params<double>(ModelSpec::logistic(2, 3));
  CHECK_THROWS_AS(compute_updates(std::vector<ParamVector>{g, other}, g), SpecMismatchError);
  CHECK_THROWS_AS(compute_updates(std::vector<ParamVector>{g}, g, {1, 2}), DimensionError);
}

TEST_CASE("pairwise distances") {
  Eigen::MatrixXd x(2, 2);
  x << 0, 0, 3, 4;
  const Eigen::MatrixXd d = pairwise_euclidean(x);
  CHECK(d(0, 1) == 5.0);
  CHECK(d(1, 0) == 5.0);
  CHECK(d(0, 0) == 0.0);

  CHECK(pairwise_euclidean(Eigen::MatrixXd::Ones(4, 3)).isZero(0.0));

  Rng rng(8);
  const Eigen::MatrixXd r = random_points(6, 5, rng);
  const Eigen::MatrixXd dr = pairwise_euclidean(r);
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 6; ++j) {
      double sq = 0;
      for (Index k = 0; k < 5; ++k) sq += (r(i, k) - r(j, k)) * (r(i, k) - r(j, k));
      CHECK(dr(i, j) == doctest::Approx(std::sqrt(sq)).epsilon(1e-12));
    }
  CHECK(dr == dr.transpose());

  const Eigen::MatrixXf rf = r.cast<float>();
  CHECK((pairwise_euclidean(rf).cast<double>() - dr).norm() < 1e-5);

  UpdateMatrix u{r, {0, 1, 2, 3, 4, 5}};
  CHECK(pairwise_euclidean(u) == dr);
  CHECK_THROWS_AS(pairwise_euclidean(Eigen::MatrixXd(1, 3)), ClusterError);
}

TEST_CASE("ward on two points") {
  Eigen::MatrixXd d(2, 2);
  d << 0, 5, 5, 0;
  const Dendrogram dend = ward_dendrogram(d);
  REQUIRE(dend.merges.size() == 1);
  CHECK(dend.merges[0].a == 0);
  CHECK(dend.merges[0].b == 1);
  CHECK(dend.merges[0].distance == 5.0);
  CHECK(dend.merges[0].size == 2);
}

TEST_CASE("ward on collinear points 0, 1, 10") {
  Eigen::MatrixXd x(3, 1);
  x << 0, 1, 10;
  const Dendrogram dend = ward_dendrogram(pairwise_euclidean(x));
  REQUIRE(dend.merges.size() == 2);
  CHECK(dend.merges[0].a == 0);
  CHECK(dend.merges[0].b == 1);
  CHECK(dend.merges[0].distance == doctest::Approx(1.0));
  CHECK(dend.merges[1].a == 2);
  CHECK(dend.merges[1].b == 3);
  CHECK(dend.merges[1].size == 3);
  // sqrt((2 * 10^2 + 2 * 9^2 - 1^2) / 3)
  CHECK(dend.merges[1].distance == doctest::Approx(std::sqrt(361.0 / 3.0)).epsilon(1e-14));
  CHECK(dend.merges[1].distance == doctest::Approx(10.9697).epsilon(1e-5));

  const ClusterAssignment cut = cut_threshold(dend, 5.0);
  CHECK(cut.num_clusters == 2);
  CHECK(cut.labels == std::vector<int>{0, 0, 1});
  CHECK(cut.threshold_used == 5.0);
  CHECK(cut_threshold(dend, 0.5).num_clusters == 3);
  CHECK(cut_threshold(dend, 100.0).num_clusters == 1);
  CHECK(cut_threshold(dend, std::numeric_limits<double>::infinity()).labels == std::vector<int>{0, 0, 0});
  // merges at exactly the threshold are applied
  CHECK(cut_threshold(dend, 1.0).num_clusters == 2);
}

TEST_CASE("ties go to the lexicographically first pair") {
  Eigen::MatrixXd d = Eigen::MatrixXd::Ones(4, 4);
  d.diagonal().setZero();
  const Dendrogram dend = ward_dendrogram(d);
  REQUIRE(dend.merges.size() == 3);
  CHECK(dend.merges[0].a == 0);
  CHECK(dend.merges[0].b == 1);
  CHECK(dend.merges[1].a == 2);
  CHECK(dend.merges[1].b == 4);
  CHECK(dend.merges[2].a == 3);
  CHECK(dend.merges[2].b == 5);
  for (const auto& m : dend.merges) CHECK(m.distance == doctest::Approx(1.0));
}

TEST_CASE("ward matches the sum-of-squares oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.below(5));
    const Eigen::MatrixXd x = random_points(n, 3, rng);
    const Dendrogram dend = ward_dendrogram(pairwise_euclidean(x));
    const auto want = sse_oracle(x);
    const auto got = merged_sets(dend);
    REQUIRE(got.size() == want.size());
    for (std::size_t m = 0; m < got.size(); ++m) {
      CHECK(got[m] == want[m].joined);
      CHECK(dend.merges[m].distance == doctest::Approx(want[m].height).epsilon(1e-9));
      CHECK(dend.merges[m].size == static_cast<Index>(want[m].joined.size()));
    }
  }
}

TEST_CASE("dendrogram structure and monotone heights") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 3 + static_cast<Index>(rng.below(30));
    const Dendrogram dend = ward_dendrogram(pairwise_euclidean(random_points(n, 4, rng)));
    CHECK(dend.leaf_count == n);
    REQUIRE(dend.merges.size() == static_cast<std::size_t>(n - 1));
    std::set<Index> children;
    for (std::size_t m = 0; m < dend.merges.size(); ++m) {
      const auto& mg = dend.merges[m];
      CHECK(mg.a < mg.b);
      CHECK(mg.b < n + static_cast<Index>(m));
      CHECK(children.insert(mg.a).second);
      CHECK(children.insert(mg.b).second);
      if (m > 0) CHECK(mg.distance >= dend.merges[m - 1].distance - 1e-12);
    }
    CHECK(dend.merges.back().size == n);
  }
}

TEST_CASE("cut labels are numbered by first appearance") {
  Eigen::MatrixXd x(5, 1);
  x << 10, 0, 10.5, 0.2, 20;
  const ClusterAssignment a = cut_threshold(ward_dendrogram(pairwise_euclidean(x)), 2.0);
  CHECK(a.labels == std::vector<int>{0, 1, 0, 1, 2});
  CHECK(a.members() == std::vector<std::vector<int>>{{0, 2}, {1, 3}, {4}});
}

TEST_CASE("permuting rows permutes the clusters") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::MatrixXd x = random_points(12, 3, rng);
    std::vector<int> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<int>(perm));
    Eigen::MatrixXd y(12, 3);
    for (int i = 0; i < 12; ++i) y.row(i) = x.row(perm[static_cast<std::size_t>(i)]);

    const double t = 1.5;
    const Partition px = partition_of(cut_threshold(ward_dendrogram(pairwise_euclidean(x)), t));
    Partition mapped;
    for (const auto& group : partition_of(cut_threshold(ward_dendrogram(pairwise_euclidean(y)), t))) {
      std::set<int> g;
      for (int i : group) g.insert(perm[static_cast<std::size_t>(i)]);
      mapped.insert(g);
    }
    CHECK(mapped == px);
  }
}

TEST_CASE("two distant blobs split cleanly") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const Index na = 2 + static_cast<Index>(rng.below(10));
    const Index nb = 2 + static_cast<Index>(rng.below(10));
    Eigen::MatrixXd x(na + nb, 4);
    for (Index i = 0; i < na + nb; ++i)
      for (Index j = 0; j < 4; ++j) x(i, j) = rng.uniform(-0.5, 0.5) + (i >= na && j == 0 ? 20.0 : 0.0);
    // interleave the blobs
    std::vector<Index> order(static_cast<std::size_t>(na + nb));
    std::iota(order.begin(), order.end(), Index{0});
    rng.shuffle(std::span<Index>(order));
    Eigen::MatrixXd shuffled(na + nb, 4);
    for (Index i = 0; i < na + nb; ++i) shuffled.row(i) = x.row(order[static_cast<std::size_t>(i)]);

    const Dendrogram dend = ward_dendrogram(pairwise_euclidean(shuffled));
    const double inner = dend.merges[dend.merges.size() - 2].distance;
    const double cross = dend.merges.back().distance;
    REQUIRE(inner < cross);
    for (double t : {inner, 0.5 * (inner + cross), std::nextafter(cross, 0.0)}) {
      const ClusterAssignment a = cut_threshold(dend, t);
      CHECK(a.num_clusters == 2);
      for (Index i = 0; i < na + nb; ++i)
        for (Index j = 0; j < na + nb; ++j) {
          const bool same_blob = (order[static_cast<std::size_t>(i)] >= na) == (order[static_cast<std::size_t>(j)] >= na);
          CHECK(same_blob == (a.labels[static_cast<std::size_t>(i)] == a.labels[static_cast<std::size_t>(j)]));
        }
    }
  }
}

TEST_CASE("ward input errors") {
  Eigen::MatrixXd d = Eigen::MatrixXd::Ones(3, 3);
  d(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ward_dendrogram(d), ClusterError);
  CHECK_THROWS_AS(ward_dendrogram(Eigen::MatrixXd::Ones(2, 3)), ClusterError);
}
