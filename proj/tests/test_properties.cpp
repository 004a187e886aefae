// Randomized invariants across modules, checked against brute-force enumeration.
#include <doctest.h>

#include <random>

#include "lseq/graph.hpp"
#include "lseq/scheduler.hpp"
#include "oracle.hpp"

using namespace lseq;

namespace {

// Random connected graph whose first `latent` nodes are hidden.
Graph random_latent(std::mt19937_64& rng, int n, int latent, int extra) {
  std::vector<Node> visible;
  for (Node v = latent; v < n; ++v) visible.push_back(v);
  return oracle::random_graph(n, extra, visible, rng);
}

}  // namespace

TEST_CASE("eliminated models keep the marginal") {
  std::mt19937_64 rng(11);
  int tried = 0;
  while (tried < 40) {
    Graph g = random_latent(rng, 9, 0, 3);
    NodeSet S;
    for (Node v : g.nodes())
      if (rng() % 2) S.push_back(v);
    if (S.size() < 2 || !is_marginalizable(g, S)) continue;
    ++tried;
    GMParams p = oracle::random_params(g, 0.2, 2.0, rng);
    auto [h, q] = eliminate_to_marginal_gm(g, p, S);
    for (const Edge& e : h.edges()) CHECK(set_contains(S, e.first));
    CHECK(oracle::tv(oracle::marginal(g, p, S), oracle::marginal(h, q, S)) < 1e-10);
  }
}

TEST_CASE("whatever the scheduler recovers is correct") {
  std::mt19937_64 rng(12);
  int complete = 0;
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 8 + static_cast<int>(rng() % 3);
    const int latent = 1 + static_cast<int>(rng() % 2);
    Graph g = random_latent(rng, n, latent, 2);
    GMParams p = oracle::random_params(g, 0.3, 1.5, rng, true);
    oracle::Joint j = oracle::joint(g, p);
    SchedulerConfig cfg;
    cfg.K = 2;
    LabelRuleSet rules;
    rules.mode = LabelRuleSet::Mode::Attractive;
    MarginalStore init = MarginalStore::fromProvider(g.visible(), 5,
                                                     [&](const NodeSet& X) { return exact_marginal(g, p, X); });
    try {
      auto [store, rep] = run_sequential(g, init, rules, cfg);
      CHECK(rep.halt_reason != "max_rounds");
      CHECK(rep.rounds_executed <= rep.termination_bound);
      CHECK(rep.recovered_pairs.size() + rep.missing_pairs.size() == g.edges().size());
      for (const Edge& e : rep.recovered_pairs) {
        NodeSet pair{e.first, e.second};
        CHECK(oracle::tv(store.query(pair), oracle::canonical_truth(j, g, pair)) < 1e-6);
      }
      if (rep.missing_pairs.empty()) ++complete;
    } catch (const Error& e) {
      // A refusal is acceptable; a silently wrong table is not.
      MESSAGE("trial " << trial << ": " << e.what());
    }
  }
  CHECK(complete > 0);
}

TEST_CASE("dry analysis terminates within the subset bound") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 15; ++trial) {
    Graph g = random_latent(rng, 9, 2, 2);
    SchedulerConfig cfg;
    cfg.K = 2;
    LabelRuleSet rules;
    rules.mode = LabelRuleSet::Mode::Attractive;
    RecoveryReport dry =
        analyze_recoverability(g, MarginalStore::fromProvider(g.visible(), 5, nullptr), rules, cfg);
    CHECK(dry.rounds_executed <= dry.termination_bound);
    CHECK(dry.termination_bound == doctest::Approx(trimmed_subset_bound(9, cfg.K, cfg.L)));
    CHECK(dry.halt_reason != "max_rounds");
  }
}
