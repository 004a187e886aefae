#include <doctest.h>

#include <random>

#include "lseq/model.hpp"
#include "oracle.hpp"

using namespace lseq;

namespace {

Graph path3() { return Graph(3, {{0, 1}, {1, 2}}, {0, 2}); }

GMParams path3_params() {
  GMParams p;
  p.beta[{0, 1}] = 0.8;
  p.beta[{1, 2}] = -1.1;
  p.gamma = {{0, 0.3}, {1, -0.2}, {2, 0.5}};
  return p;
}

}  // namespace

TEST_CASE("node set helpers") {
  CHECK(make_set({3, 1, 3, 2}) == NodeSet{1, 2, 3});
  CHECK(set_union({1, 3}, {2, 3}) == NodeSet{1, 2, 3});
  CHECK(set_minus({1, 2, 3}, {2}) == NodeSet{1, 3});
  CHECK(set_intersection({1, 2, 3}, {2, 3, 4}) == NodeSet{2, 3});
  CHECK(is_subset({1, 3}, {1, 2, 3}));
  CHECK_FALSE(is_subset({1, 4}, {1, 2, 3}));
  CHECK(make_edge(5, 2) == Edge{2, 5});
  CHECK(assignment_index({1, 0, 1}) == 5);
  CHECK(index_bits(5, 3) == std::vector<int>{1, 0, 1});
}

TEST_CASE("graph construction") {
  Graph g = path3();
  CHECK(g.nodeCount() == 3);
  CHECK(g.hasEdge(1, 0));
  CHECK_FALSE(g.hasEdge(0, 2));
  CHECK(g.visible() == NodeSet{0, 2});
  CHECK(g.latent() == NodeSet{1});
  Graph h = g.induced({0, 1});
  CHECK(h.nodeCount() == 2);
  CHECK(h.idSpace() == 3);
  CHECK(h.edges().size() == 1);
  CHECK_THROWS_AS(Graph(2, {{0, 0}}, {0}), Error);
  CHECK_THROWS_AS(Graph(2, {{0, 5}}, {0}), Error);
}

TEST_CASE("parameter validation") {
  Graph g = path3();
  GMParams p = path3_params();
  CHECK_NOTHROW(validate_params(g, p));
  p.beta.erase({0, 1});
  CHECK_THROWS_AS(validate_params(g, p), Error);
  p = path3_params();
  p.gamma[1] = std::nan("");
  CHECK_THROWS_AS(validate_params(g, p), Error);
}

TEST_CASE("factor table construction and layout") {
  FactorTable t({4, 2}, {0.1, 0.2, 0.3, 0.4});
  // First scope variable is the most significant bit.
  CHECK(t.bit(2, 0) == 1);
  CHECK(t.bit(2, 1) == 0);
  FactorTable r = t.reordered({2, 4});
  CHECK(r[1] == doctest::Approx(0.3));
  CHECK(t.canonical().scope() == std::vector<Node>{2, 4});
  FactorTable f = t.flipped(4);
  CHECK(f[0] == doctest::Approx(0.3));
  CHECK_THROWS_AS(FactorTable({1}, {0.5, 0.6}), Error);
  CHECK_THROWS_AS(FactorTable({1}, {-0.1, 1.1}), Error);
  CHECK_THROWS_AS(FactorTable({1, 1}, {0.25, 0.25, 0.25, 0.25}), Error);
  FactorTable n = FactorTable::normalized({1}, {1.0, 3.0});
  CHECK(n[1] == doctest::Approx(0.75));
}

TEST_CASE("marginalize and condition") {
  FactorTable t({0, 1, 2}, {0.05, 0.10, 0.15, 0.20, 0.05, 0.15, 0.10, 0.20});
  FactorTable m = marginalize_table(t, {0, 2});
  CHECK(m[0] == doctest::Approx(0.20));
  CHECK(m[3] == doctest::Approx(0.35));
  FactorTable c = condition_table(t, {{0, 1}});
  CHECK(c.scope() == std::vector<Node>{1, 2});
  CHECK(c[3] == doctest::Approx(0.20 / 0.50));
  FactorTable z({0, 1}, {0.5, 0.5, 0.0, 0.0});
  CHECK_THROWS_AS(condition_table(z, {{0, 1}}), Error);
}

TEST_CASE("exact inference matches enumeration") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 4 + trial % 6;
    Graph g = oracle::random_graph(n, trial % 4, {0, 1}, rng);
    GMParams p = oracle::random_params(g, 0.2, 2.0, rng);
    oracle::Joint j = oracle::joint(g, p);
    FactorTable full = exact_joint(g, p);
    CHECK(oracle::tv(full, oracle::marginal(j, g.nodes())) < 1e-12);
    NodeSet S{0, static_cast<Node>(n - 1)};
    CHECK(oracle::tv(exact_marginal(g, p, S), oracle::marginal(j, S)) < 1e-12);
    CHECK(log_partition(g, p) == doctest::Approx(oracle::log_partition(g, p)).epsilon(1e-12));
  }
}

TEST_CASE("exact inference survives large couplings") {
  Graph g = path3();
  GMParams p = path3_params();
  p.beta[{0, 1}] = 800;
  p.gamma[0] = -400;
  FactorTable t = exact_marginal(g, p, {0, 1});
  double s = 0;
  for (double v : t.values()) s += v;
  CHECK(s == doctest::Approx(1.0));
  CHECK(std::isfinite(log_partition(g, p)));
}

TEST_CASE("exact_joint refuses oversized graphs") {
  std::vector<Edge> edges;
  for (int v = 1; v < 30; ++v) edges.push_back({v - 1, v});
  Graph g(30, edges, {0});
  GMParams p;
  for (const Edge& e : g.edges()) p.beta[e] = 0.5;
  for (Node v : g.nodes()) p.gamma[v] = 0;
  CHECK_THROWS_AS(exact_joint(g, p, 25), Error);
  // Elimination has no cap on a chain.
  CHECK_NOTHROW(exact_marginal(g, p, {0, 29}));
}

TEST_CASE("energy and relabeling") {
  Graph g = path3();
  GMParams p = path3_params();
  CHECK(energy(g, p, {1, 1, 0}) == doctest::Approx(0.8 + 0.3 - 0.2));
  GMParams q = relabel_params(g, p, 1);
  oracle::Joint a = oracle::joint(g, p), b = oracle::joint(g, q);
  FactorTable pa = oracle::marginal(a, {0, 1, 2});
  FactorTable pb = oracle::marginal(b, {0, 1, 2});
  CHECK(oracle::tv(pa, oracle::flip(pb, 1)) < 1e-12);
  CHECK(q.coupling(0, 1) == doctest::Approx(-0.8));
}

TEST_CASE("table distance is order-insensitive") {
  FactorTable a({0, 1}, {0.1, 0.2, 0.3, 0.4});
  CHECK(table_distance(a, a.reordered({1, 0})) == doctest::Approx(0.0));
  FactorTable b({0, 1}, {0.2, 0.1, 0.3, 0.4});
  CHECK(table_distance(a, b) == doctest::Approx(0.1));
  CHECK_THROWS_AS(table_distance(a, FactorTable({0, 2}, {0.25, 0.25, 0.25, 0.25})), Error);
}

TEST_CASE("eliminated model reproduces the marginal") {
  Graph g(5, {{0, 1}, {1, 2}, {2, 3}, {1, 4}}, {0, 2, 3, 4});
  std::mt19937_64 rng(3);
  GMParams p = oracle::random_params(g, 0.2, 2.0, rng);
  // Node 2 hangs between 1 and 3, so eliminating it adds the edge 1-3.
  auto [mg, mp] = eliminate_to_marginal_gm(g, p, {0, 1, 3});
  CHECK(mg.hasEdge(1, 3));
  CHECK(mg.nodeCount() == 3);
  CHECK(oracle::tv(oracle::marginal(mg, mp, {0, 1, 3}), oracle::marginal(g, p, {0, 1, 3})) < 1e-10);
  // {1,3} outside {0,2,4} touches all three.
  CHECK_THROWS_AS(eliminate_to_marginal_gm(g, p, {0, 2, 4}), Error);
}

TEST_CASE("sampling is seeded and converges") {
  Graph g = path3();
  GMParams p = path3_params();
  SampleSet a = sample(g, p, 2000, 9), b = sample(g, p, 2000, 9);
  CHECK(a.data == b.data);
  CHECK(a.visible_scope == std::vector<Node>{0, 2});
  SampleSet big = sample(g, p, 200000, 1);
  FactorTable emp = empirical_marginal(big, {0, 2});
  CHECK(oracle::tv(emp, oracle::marginal(g, p, {0, 2})) < 0.01);
  CHECK_THROWS_AS(empirical_marginal(big, {1}), Error);
}
