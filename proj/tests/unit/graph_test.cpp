#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "ksx/graph.hpp"
#include "support.hpp"

using namespace ksx;

namespace {

std::set<Edge> as_set(const std::vector<Edge>& e) { return {e.begin(), e.end()}; }

CellGraph path3() {
  Matrix f(3, 2);
  for (std::size_t v = 0; v < 3; ++v) f(v, 0) = f(v, 1) = static_cast<double>(v);
  return CellGraph("p", {{0, 0}, {1, 0}, {2, 0}}, f, {{0, 1}, {1, 2}}, 0);
}

}  // namespace

TEST(KnnBuild, SinglePointRejected) {
  EXPECT_THROW(knn_build({{0, 0}}, 1), Error);
  EXPECT_THROW(knn_build({{0, 0}}, 3), Error);
}

TEST(KnnBuild, TwoPointsGiveOneEdge) {
  EXPECT_EQ(knn_build({{0, 0}, {3, 4}}, 1), (std::vector<Edge>{{0, 1}}));
}

TEST(KnnBuild, UnitSquareKeepsSidesOnly) {
  const std::vector<Point> sq = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  // Brute force: per node, sort all other nodes by squared distance and keep two.
  std::set<Edge> expected;
  for (int u = 0; u < 4; ++u) {
    std::vector<std::pair<double, int>> d;
    for (int v = 0; v < 4; ++v)
      if (v != u) d.emplace_back(std::hypot(sq[u].x - sq[v].x, sq[u].y - sq[v].y), v);
    std::sort(d.begin(), d.end());
    for (int i = 0; i < 2; ++i) expected.insert({std::min(u, d[i].second), std::max(u, d[i].second)});
  }
  EXPECT_EQ(as_set(knn_build(sq, 2)), expected);
  EXPECT_EQ(as_set(knn_build(sq, 2)), (std::set<Edge>{{0, 1}, {1, 2}, {2, 3}, {0, 3}}));
}

TEST(KnnBuild, RejectsBadInput) {
  EXPECT_THROW(knn_build({{0, 0}, {1, 1}}, 0), Error);
  EXPECT_THROW(knn_build({{0, 0}, {1, 1}, {2, 2}}, 3), Error);
  EXPECT_THROW(knn_build({{0, 0}, {std::nan(""), 1}, {2, 2}}, 1), Error);
  EXPECT_THROW(knn_build({{0, 0}, {INFINITY, 1}, {2, 2}}, 1), Error);
}

TEST(KnnBuild, TiesPreferSmallerIndex) {
  // Node 0 is equally far from 1 and 2; every other node has a closer partner.
  const auto e = knn_build({{0, 0}, {1, 0}, {-1, 0}, {1.5, 0}, {-1.5, 0}}, 1);
  EXPECT_EQ(as_set(e), (std::set<Edge>{{0, 1}, {1, 3}, {2, 4}}));
}

TEST(KnnBuild, SymmetricWithMinimumDegree) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 10);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point> pts(30);
    for (auto& p : pts) p = {u(rng), u(rng)};
    const int k = 1 + trial % 6;
    const auto edges = knn_build(pts, k);
    std::vector<int> degree(pts.size(), 0);
    for (auto [a, b] : edges) {
      EXPECT_LT(a, b);
      ++degree[a];
      ++degree[b];
    }
    for (int d : degree) EXPECT_GE(d, k);
    EXPECT_TRUE(std::is_sorted(edges.begin(), edges.end()));
    EXPECT_EQ(as_set(edges).size(), edges.size());
  }
}

TEST(CellGraph, NormalizesEdges) {
  Matrix f(3, 1);
  CellGraph g("g", {{0, 0}, {1, 0}, {2, 0}}, f, {{1, 0}, {0, 1}, {2, 1}}, 0);
  EXPECT_EQ(g.edges(), (std::vector<Edge>{{0, 1}, {1, 2}}));
  EXPECT_EQ(g.neighbors(1), (std::vector<int>{0, 2}));
}

TEST(CellGraph, EnforcesInvariants) {
  Matrix f(2, 1);
  EXPECT_THROW(CellGraph("g", {{0, 0}, {1, 0}, {2, 0}}, f, {}, 0), Error);
  Matrix f3(3, 1);
  EXPECT_THROW(CellGraph("g", {{0, 0}, {1, 0}, {2, 0}}, f3, {{0, 0}}, 0), Error);
  EXPECT_THROW(CellGraph("g", {{0, 0}, {1, 0}, {2, 0}}, f3, {{0, 3}}, 0), Error);
  EXPECT_THROW(CellGraph("g", {{0, 0}, {1, 0}, {2, 0}}, f3, {}, -1), Error);
  f3(1, 0) = std::nan("");
  EXPECT_THROW(CellGraph("g", {{0, 0}, {1, 0}, {2, 0}}, f3, {}, 0), Error);
}

TEST(RemoveNodes, NoVictimsIsIdentity) {
  const CellGraph g = path3();
  EXPECT_EQ(remove_nodes(g, {}), g);
}

TEST(RemoveNodes, AllVictimsGiveEmptyGraph) {
  const CellGraph e = remove_nodes(path3(), {0, 1, 2});
  EXPECT_EQ(e.num_nodes(), 0u);
  EXPECT_TRUE(e.edges().empty());
  EXPECT_EQ(e.label(), 0);
}

TEST(RemoveNodes, PathMiddleLeavesTwoIsolatedNodes) {
  const CellGraph r = remove_nodes(path3(), {1});
  ASSERT_EQ(r.num_nodes(), 2u);
  EXPECT_TRUE(r.edges().empty());
  EXPECT_EQ(r.features()(0, 0), 0.0);
  EXPECT_EQ(r.features()(1, 0), 2.0);
  EXPECT_EQ(r.coords()[1], (Point{2, 0}));
}

TEST(RemoveNodes, OutOfRangeVictim) {
  EXPECT_THROW(remove_nodes(path3(), {3}), Error);
  EXPECT_THROW(remove_nodes(path3(), {-1}), Error);
}

TEST(RemoveNodes, ComposesOverDisjointSets) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const CellGraph g = test::random_graph(100 + trial, 15, 2);
    std::vector<int> perm(g.num_nodes());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> a(perm.begin(), perm.begin() + 4), b(perm.begin() + 4, perm.begin() + 9);
    std::vector<int> both = a;
    both.insert(both.end(), b.begin(), b.end());
    // Index of each original node after removing A.
    std::vector<int> after_a(g.num_nodes(), -1);
    for (int v = 0, next = 0; v < static_cast<int>(g.num_nodes()); ++v)
      if (std::find(a.begin(), a.end(), v) == a.end()) after_a[v] = next++;
    std::vector<int> b_relabeled;
    for (int v : b) b_relabeled.push_back(after_a[v]);
    EXPECT_EQ(remove_nodes(g, both), remove_nodes(remove_nodes(g, a), b_relabeled));
  }
}

TEST(TopFraction, Examples) {
  const std::vector<double> s = {0.9, 0.1, 0.5, 0.5};
  EXPECT_TRUE(top_fraction_nodes(s, 0.0, Direction::Most).empty());
  EXPECT_EQ(top_fraction_nodes(s, 1.0, Direction::Least), (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(top_fraction_nodes(s, 0.5, Direction::Most), (std::vector<int>{0, 2}));
  EXPECT_EQ(top_fraction_nodes(s, 0.5, Direction::Least), (std::vector<int>{1, 2}));
  EXPECT_THROW(top_fraction_nodes(s, 1.5, Direction::Most), Error);
}

TEST(TopFraction, GridFractionsUseFloorWithoutRoundingLoss) {
  for (int n = 1; n <= 80; ++n)
    for (int j = 0; j <= 20; ++j) EXPECT_EQ(fraction_count(j / 20.0, n), static_cast<std::size_t>(j * n / 20));
}

TEST(TopFraction, MostAndLeastAreDisjoint) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(1 + trial % 37);
    for (double& x : s) x = u(rng);
    const double f = (trial % 11) / 20.0;
    if (2 * fraction_count(f, s.size()) > s.size()) continue;
    const auto m = top_fraction_nodes(s, f, Direction::Most), l = top_fraction_nodes(s, f, Direction::Least);
    std::vector<int> common;
    std::set_intersection(m.begin(), m.end(), l.begin(), l.end(), std::back_inserter(common));
    EXPECT_TRUE(common.empty());
  }
}

TEST(Synthetic, DeterministicPerSeed) {
  SyntheticConfig c;
  c.num_graphs = 30;
  c.seed = 5;
  EXPECT_EQ(generate_synthetic(c), generate_synthetic(c));
  SyntheticConfig d = c;
  d.seed = 6;
  EXPECT_FALSE(generate_synthetic(c) == generate_synthetic(d));
}

TEST(Synthetic, StructureMatchesConfig) {
  SyntheticConfig c;
  c.seed = 1;
  const Dataset ds = generate_synthetic(c);
  ASSERT_EQ(ds.graphs.size(), 200u);
  ASSERT_TRUE(ds.ground_truth.has_value());
  std::array<int, 3> split_counts{};
  for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
    const CellGraph& g = ds.graphs[i];
    EXPECT_GE(g.num_nodes(), 40u);
    EXPECT_LE(g.num_nodes(), 60u);
    EXPECT_EQ(g.feature_dim(), 8u);
    EXPECT_EQ(g.edges(), knn_build(g.coords(), 5));
    const auto& gt = (*ds.ground_truth)[i];
    const int motif = static_cast<int>(std::count(gt.begin(), gt.end(), 1));
    EXPECT_EQ(motif, g.label() == 1 ? 8 : 0);
    ++split_counts[static_cast<int>(ds.split[i])];
  }
  EXPECT_EQ(split_counts[0], 120);
  EXPECT_EQ(split_counts[1], 40);
  EXPECT_EQ(split_counts[2], 40);
}

TEST(Synthetic, MotifFeaturesShiftedAlongAllOnes) {
  SyntheticConfig c;
  c.seed = 2;
  c.num_graphs = 100;
  const Dataset ds = generate_synthetic(c);
  double motif_sum = 0.0, other_sum = 0.0;
  long motif_n = 0, other_n = 0;
  for (std::size_t i = 0; i < ds.graphs.size(); ++i)
    for (std::size_t v = 0; v < ds.graphs[i].num_nodes(); ++v) {
      double proj = 0.0;
      for (double x : ds.graphs[i].features().row(v)) proj += x / std::sqrt(8.0);
      if ((*ds.ground_truth)[i][v]) motif_sum += proj, ++motif_n;
      else other_sum += proj, ++other_n;
    }
  EXPECT_NEAR(motif_sum / motif_n, 2.0, 0.15);
  EXPECT_NEAR(other_sum / other_n, 0.0, 0.05);
}

TEST(Synthetic, MotifIsSpatiallyConnected) {
  SyntheticConfig c;
  c.seed = 3;
  c.num_graphs = 40;
  const Dataset ds = generate_synthetic(c);
  for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
    if (ds.graphs[i].label() != 1) continue;
    const auto& gt = (*ds.ground_truth)[i];
    const CellGraph& g = ds.graphs[i];
    // Flood fill inside the motif.
    std::vector<int> stack, seen(g.num_nodes(), 0);
    for (std::size_t v = 0; v < g.num_nodes(); ++v)
      if (gt[v]) {
        stack.push_back(static_cast<int>(v));
        seen[v] = 1;
        break;
      }
    int reached = 0;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      ++reached;
      for (int u : g.neighbors(v))
        if (gt[u] && !seen[u]) seen[u] = 1, stack.push_back(u);
    }
    EXPECT_EQ(reached, 8) << g.id();
  }
}

TEST(Synthetic, RejectsInvalidConfig) {
  SyntheticConfig c;
  c.k = 40;
  EXPECT_THROW(generate_synthetic(c), Error);
  c = {};
  c.motif_size = 40;
  EXPECT_THROW(generate_synthetic(c), Error);
  c = {};
  c.feature_dim = 0;
  EXPECT_THROW(generate_synthetic(c), Error);
  c = {};
  c.min_nodes = 70;
  EXPECT_THROW(generate_synthetic(c), Error);
}
