#include <doctest.h>

#include <cmath>
#include <random>

#include "lseq/mle.hpp"
#include "oracle.hpp"

using namespace lseq;

namespace {

// E[x_i] and E[x_i x_j] by summing the brute-force joint.
MomentTargets oracle_moments(const Graph& g, const GMParams& p) {
  oracle::Joint j = oracle::joint(g, p);
  MomentTargets t;
  for (Node v : g.nodes()) t.node_moments[v] = 0;
  for (const Edge& e : g.edges()) t.edge_moments[e] = 0;
  for (std::size_t s = 0; s < j.p.size(); ++s) {
    for (Node v : g.nodes()) t.node_moments[v] += j.p[s] * j.bit(s, v);
    for (const Edge& e : g.edges()) t.edge_moments[e] += j.p[s] * j.bit(s, e.first) * j.bit(s, e.second);
  }
  return t;
}

double oracle_objective(const Graph& g, const GMParams& p, const MomentTargets& t) {
  double v = -oracle::log_partition(g, p);
  for (const auto& [e, b] : p.beta) v += b * t.edge_moments.at(e);
  for (const auto& [n, c] : p.gamma) v += c * t.node_moments.at(n);
  return v;
}

double max_param_error(const GMParams& a, const GMParams& b) {
  double worst = 0;
  for (const auto& [e, x] : a.beta) worst = std::max(worst, std::abs(x - b.beta.at(e)));
  for (const auto& [v, x] : a.gamma) worst = std::max(worst, std::abs(x - b.gamma.at(v)));
  return worst;
}

Graph random_latent_graph(std::mt19937_64& rng, int max_nodes) {
  std::uniform_int_distribution<int> size(3, max_nodes);
  const int n = size(rng);
  std::vector<Node> visible;
  for (Node v = 1; v < n; ++v) visible.push_back(v);  // node 0 hidden
  return oracle::random_graph(n, n / 3, visible, rng);
}

}  // namespace

TEST_CASE("model moments match enumeration") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    Graph g = random_latent_graph(rng, 9);
    GMParams p = oracle::random_params(g, 0.2, 2.0, rng);
    MomentTargets want = oracle_moments(g, p);
    for (int cap : {20, 0}) {  // enumeration and elimination paths
      MomentTargets got = model_moments(g, p, cap);
      for (const auto& [v, m] : want.node_moments) CHECK(got.node_moments.at(v) == doctest::Approx(m).epsilon(1e-10));
      for (const auto& [e, m] : want.edge_moments) CHECK(got.edge_moments.at(e) == doctest::Approx(m).epsilon(1e-10));
    }
  }
}

TEST_CASE("objective and gradient agree with finite differences") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Graph g = random_latent_graph(rng, 8);
    GMParams truth = oracle::random_params(g, 0.2, 2.0, rng);
    GMParams at = oracle::random_params(g, 0.2, 2.0, rng);
    MomentTargets t = oracle_moments(g, truth);
    CHECK(moment_objective(g, at, t) == doctest::Approx(oracle_objective(g, at, t)).epsilon(1e-12));

    const double h = 1e-5;
    MomentTargets grad = moment_gradient(g, at, t);
    std::vector<double> analytic, numeric;
    auto probe = [&](double& slot) {
      const double keep = slot;
      slot = keep + h;
      double up = moment_objective(g, at, t);
      slot = keep - h;
      double down = moment_objective(g, at, t);
      slot = keep;
      numeric.push_back((up - down) / (2 * h));
    };
    for (auto& [e, b] : at.beta) {
      analytic.push_back(grad.edge_moments.at(e));
      probe(b);
    }
    for (auto& [v, c] : at.gamma) {
      analytic.push_back(grad.node_moments.at(v));
      probe(c);
    }
    double diff = 0, scale = 0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      diff = std::max(diff, std::abs(analytic[k] - numeric[k]));
      scale = std::max(scale, std::abs(analytic[k]));
    }
    CHECK(diff / scale < 1e-6);
  }
}

TEST_CASE("objective is midpoint concave") {
  std::mt19937_64 rng(3);
  Graph g = random_latent_graph(rng, 8);
  MomentTargets t = oracle_moments(g, oracle::random_params(g, 0.2, 2.0, rng));
  for (int seg = 0; seg < 20; ++seg) {
    GMParams a = oracle::random_params(g, 0.2, 2.0, rng), b = oracle::random_params(g, 0.2, 2.0, rng), m = a;
    for (auto& [e, x] : m.beta) x = (a.beta.at(e) + b.beta.at(e)) / 2;
    for (auto& [v, x] : m.gamma) x = (a.gamma.at(v) + b.gamma.at(v)) / 2;
    CHECK(moment_objective(g, m, t) + 1e-12 >= (moment_objective(g, a, t) + moment_objective(g, b, t)) / 2);
  }
}

TEST_CASE("uniform moments give zero parameters") {
  Graph g(3, {{0, 1}, {1, 2}}, {0, 1, 2});
  MomentTargets t;
  for (Node v : g.nodes()) t.node_moments[v] = 0.5;
  for (const Edge& e : g.edges()) t.edge_moments[e] = 0.25;
  FitResult r = fit_from_moments(g, t);
  CHECK(r.converged);
  for (const auto& [e, b] : r.params.beta) CHECK(std::abs(b) < 1e-6);
  for (const auto& [v, c] : r.params.gamma) CHECK(std::abs(c) < 1e-6);
}

TEST_CASE("independent pair on two nodes") {
  Graph g(2, {{0, 1}}, {0, 1});
  MomentTargets t;
  t.node_moments = {{0, 0.3}, {1, 0.8}};
  t.edge_moments = {{{0, 1}, 0.24}};
  FitResult r = fit_from_moments(g, t);
  CHECK(std::abs(r.params.beta.at({0, 1})) < 1e-6);
  CHECK(r.params.gamma.at(0) == doctest::Approx(std::log(0.3 / 0.7)).epsilon(1e-6));
  CHECK(r.params.gamma.at(1) == doctest::Approx(std::log(0.8 / 0.2)).epsilon(1e-6));
}

TEST_CASE("parameters round trip through exact moments") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Graph g = random_latent_graph(rng, 10);
    GMParams truth = oracle::random_params(g, 0.2, 2.0, rng);
    FitResult r = fit_from_moments(g, oracle_moments(g, truth));
    CHECK(r.converged);
    CHECK(r.final_gradient_norm < 1e-8);
    CHECK(max_param_error(r.params, truth) < 1e-4);
  }
}

TEST_CASE("quasi-Newton path also converges") {
  std::mt19937_64 rng(5);
  Graph g = random_latent_graph(rng, 9);
  GMParams truth = oracle::random_params(g, 0.2, 1.5, rng);
  FitOptions o;
  o.enumeration_cap = 0;
  FitResult r = fit_from_moments(g, oracle_moments(g, truth), o);
  CHECK(r.converged);
  CHECK(max_param_error(r.params, truth) < 1e-4);
}

TEST_CASE("boundary and incomplete targets") {
  Graph g(2, {{0, 1}}, {0, 1});
  MomentTargets t;
  t.node_moments = {{0, 0.5}, {1, 0.5}};
  t.edge_moments = {{{0, 1}, 0.5}};  // P(0,1) = P(1,0) = 0
  try {
    fit_from_moments(g, t);
    FAIL("expected a boundary error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Boundary);
  }
  t.edge_moments.clear();
  CHECK_THROWS_AS(fit_from_moments(g, t), Error);

  FitOptions o;
  o.max_iters = 1;
  t.edge_moments = {{{0, 1}, 0.45}};
  FitResult r = fit_from_moments(g, t, o);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 1);
}

TEST_CASE("moments read off a store") {
  std::mt19937_64 rng(6);
  Graph g = random_latent_graph(rng, 7);
  GMParams p = oracle::random_params(g, 0.2, 2.0, rng);
  oracle::Joint j = oracle::joint(g, p);
  std::vector<FactorTable> tables{oracle::marginal(j, g.nodes())};
  MomentTargets got = moments_from_store(MarginalStore::fromTables(tables), g);
  MomentTargets want = oracle_moments(g, p);
  for (const auto& [v, m] : want.node_moments) CHECK(got.node_moments.at(v) == doctest::Approx(m).epsilon(1e-12));
  for (const auto& [e, m] : want.edge_moments) CHECK(got.edge_moments.at(e) == doctest::Approx(m).epsilon(1e-12));

  // Tables over single edges only, one of them missing.
  std::vector<FactorTable> pairs;
  for (std::size_t k = 1; k < g.edges().size(); ++k)
    pairs.push_back(oracle::marginal(j, {g.edges()[k].first, g.edges()[k].second}));
  CHECK_THROWS_AS(moments_from_store(MarginalStore::fromTables(pairs), g), Error);
  std::vector<Edge> missing;
  moments_from_store(MarginalStore::fromTables(pairs), g, true, &missing);
  CHECK(missing == std::vector<Edge>{g.edges()[0]});
}

TEST_CASE("visible log-likelihood") {
  Graph single(1, {}, {0});
  GMParams zero;
  zero.gamma[0] = 0;
  SampleSet s = sample(single, zero, 50, 1);
  CHECK(log_likelihood(single, zero, s) == doctest::Approx(std::log(0.5)));

  std::mt19937_64 rng(7);
  Graph g = random_latent_graph(rng, 8);
  GMParams p = oracle::random_params(g, 0.2, 2.0, rng);
  SampleSet data = sample(g, p, 2000, 3);
  oracle::Joint j = oracle::joint(g, p);
  FactorTable vis = oracle::marginal(j, data.visible_scope);
  double want = 0;
  for (std::size_t row = 0; row < data.count; ++row) {
    std::map<Node, int> a;
    for (std::size_t c = 0; c < data.visible_scope.size(); ++c) a[data.visible_scope[c]] = data.at(row, c);
    want += std::log(oracle::value_at(vis, a));
  }
  CHECK(log_likelihood(g, p, data) == doctest::Approx(want / data.count).epsilon(1e-12));

  GMParams off = p;
  for (auto& [e, b] : off.beta) b += 0.5;
  SampleSet big = sample(g, p, 100000, 4);
  CHECK(log_likelihood(g, p, big) > log_likelihood(g, off, big));

  SampleSet none;
  CHECK_THROWS_AS(log_likelihood(g, p, none), Error);
}
