#include <doctest.h>

#include <random>

#include "lseq/graph.hpp"
#include "lseq/instances.hpp"
#include "oracle.hpp"

using namespace lseq;

namespace {

// Latent 0 with leaves 1, 2, 3.
Graph star() { return Graph(4, {{0, 1}, {0, 2}, {0, 3}}, {1, 2, 3}); }

}  // namespace

TEST_CASE("components and distances") {
  Graph g(6, {{0, 1}, {1, 2}, {3, 4}}, {0, 1, 2, 3, 4, 5});
  int count = 0;
  auto label = component_labels(g, {}, &count);
  CHECK(count == 3);
  CHECK(label[0] == label[2]);
  CHECK(label[0] != label[3]);
  auto cut = component_labels(g, {1}, &count);
  CHECK(count == 4);
  CHECK(cut[1] == -1);
  auto d = bfs_distance(g, 0, {});
  CHECK(d[2] == 2);
  CHECK(d[3] == -1);
  CHECK(bfs_distance(g, 0, {1})[2] == -1);
}

TEST_CASE("outside components report their boundary") {
  Graph g = make_grid(3, 3);
  auto comps = outside_components(g, {1, 3, 5, 7});
  CHECK(comps.size() == 5);
  for (const auto& c : comps) {
    if (c.nodes == NodeSet{4}) CHECK(c.boundary == NodeSet{1, 3, 5, 7});
    if (c.nodes == NodeSet{0}) CHECK(c.boundary == NodeSet{1, 3});
  }
}

TEST_CASE("marginalizable sets") {
  Graph path(4, {{0, 1}, {1, 2}, {2, 3}}, {0, 3});
  auto w = is_marginalizable(path, {0, 3});
  REQUIRE(w);
  CHECK(w->added_edges.count({0, 3}) == 1);
  Graph m = marg_graph(path, {0, 3});
  CHECK(m.hasEdge(0, 3));
  CHECK(m.nodeCount() == 2);
  CHECK_FALSE(is_marginalizable(star(), {1, 2, 3}));
  CHECK(is_marginalizable(star(), {0, 1}));
  CHECK_THROWS_AS(marg_graph(star(), {1, 2, 3}), Error);
  CHECK_THROWS_AS(is_marginalizable(star(), {}), Error);
}

TEST_CASE("bottlenecks") {
  Graph g = star();
  CHECK(is_bottleneck(g, 0, {1, 2, 3}));
  CHECK_FALSE(is_bottleneck(g, 0, {1, 1, 3}));
  CHECK_FALSE(is_bottleneck(g, 1, {0, 2, 3}));
  auto found = find_bottlenecks(g, {0, 1}, g.visible());
  REQUIRE(found.size() == 1);
  CHECK(found[0].center == 0);
  Graph grid = make_grid(4, 5);
  // The first latent node of the grid is a bottleneck for b, f, p once a, c, k are conditioned on.
  Graph cut = remove_nodes(grid, {0, 2, 10});
  CHECK(is_bottleneck(cut, 6, {1, 5, 15}));
  CHECK_FALSE(is_bottleneck(grid, 6, {1, 5, 15}));
}

TEST_CASE("exclusive views") {
  // Two latent nodes 0-1 with private visible views 2 and 3.
  Graph g(4, {{0, 1}, {0, 2}, {1, 3}}, {2, 3});
  auto inst = exclusive_view_check(g, {0, 1}, {2, 3});
  REQUIRE(inst);
  CHECK(inst->view_map.at(0) == 2);
  CHECK(inst->view_map.at(1) == 3);
  Graph shared(3, {{0, 2}, {1, 2}}, {2});
  CHECK_FALSE(exclusive_view_check(shared, {0, 1}, {2}));
  CHECK_THROWS_AS(exclusive_view_check(g, {0, 1}, {1, 2}), Error);
}

TEST_CASE("separation") {
  Graph g(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}, {0, 4});
  CHECK(separated(g, {2}, {{0, 1}, {3, 4}}));
  CHECK_FALSE(separated(g, {}, {{0}, {4}}));
  CHECK(separated(g, {1, 3}, {{0}, {2}, {4}}));
}

TEST_CASE("conditioning never merges marginal graphs") {
  std::mt19937_64 rng(5);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    int n = 6 + trial % 5;
    Graph g = oracle::random_graph(n, 2 + trial % 3, {}, rng);
    std::vector<Node> perm = g.nodes();
    std::shuffle(perm.begin(), perm.end(), rng);
    NodeSet S = make_set({perm.begin(), perm.begin() + 3});
    NodeSet C = make_set({perm.begin() + 3, perm.begin() + 4 + trial % 2});
    auto full = is_marginalizable(g, S);
    Graph reduced = remove_nodes(g, C);
    auto part = is_marginalizable(reduced, S);
    // Removing nodes outside S keeps S marginalizable.
    if (full) CHECK(part);
    if (!full || !part) continue;
    ++checked;
    Graph a = marg_graph(g, S), b = marg_graph(reduced, S);
    for (const Edge& e : b.edges()) CHECK(a.hasEdge(e.first, e.second));
  }
  CHECK(checked > 20);
}

TEST_CASE("bottleneck views are conditionally independent given the center") {
  std::mt19937_64 rng(8);
  int checked = 0;
  for (int trial = 0; trial < 60 && checked < 25; ++trial) {
    Graph g = oracle::random_graph(7, 1, {}, rng);
    auto found = find_bottlenecks(g, g.nodes(), g.nodes());
    if (found.empty()) continue;
    const auto& b = found[trial % found.size()];
    GMParams p = oracle::random_params(g, 0.2, 2.0, rng);
    oracle::Joint j = oracle::joint(g, p);
    FactorTable t = oracle::marginal(j, {b.center, b.views[0], b.views[1], b.views[2]});
    for (int s = 0; s < 2; ++s) {
      FactorTable c = condition_table(t, {{b.center, s}});
      double worst = 0;
      for (std::size_t idx = 0; idx < c.size(); ++idx) {
        std::map<Node, int> a;
        for (int k = 0; k < 3; ++k) a[c.scope()[k]] = c.bit(idx, k);
        double f = 1;
        for (Node v : c.scope()) f *= marginalize_table(c, {v})[a[v]];
        worst = std::max(worst, std::abs(c[idx] - f));
      }
      CHECK(worst < 1e-10);
    }
    ++checked;
  }
  CHECK(checked >= 20);
}
