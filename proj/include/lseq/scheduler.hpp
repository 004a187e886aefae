#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lseq/graph.hpp"
#include "lseq/model.hpp"
#include "lseq/solvers.hpp"

namespace lseq {

/// Bit v set for node v. The scheduler handles graphs with at most 64 node ids.
using Mask = std::uint64_t;
Mask to_mask(const NodeSet& s);
NodeSet from_mask(Mask m);

enum class StepKind { TensorDecomp, DisjointView, LinearView, ExclusiveViewMerge, Scripted };
const char* to_string(StepKind kind);
StepKind step_kind_from_string(const std::string& s);

/**
 * One application of a local solver.
 *
 * Explicit steps produce the single table `output`.  Family steps (family ==
 * true) produce a family of tables: every R u Y with Y a subset of `pool` of size
 * at most `budget`, where R = `output`.  A family step derives its tables from
 * the family `parent` of the store.
 */
struct RecoveryStep {
  StepKind kind = StepKind::TensorDecomp;
  NodeSet conditioned_on;
  std::vector<NodeSet> inputs;
  NodeSet output;
  std::vector<LabelRule> rules;

  Node center = -1;          // TensorDecomp hidden node; LinearView/DisjointView pivot i
  std::vector<Node> views;   // TensorDecomp views
  Node anchor = -1;          // LinearView j
  NodeSet block;             // LinearView S; DisjointView S
  NodeSet other;             // DisjointView T
  std::map<Node, Node> view_map;  // ExclusiveViewMerge

  bool family = false;
  int parent = -1;
  NodeSet pool;
  int budget = 0;
  int round = 0;

  std::string signature() const;
};

enum class CondMode { Auto, Exhaustive, Neighborhood };

struct SchedulerConfig {
  int K = 3;
  int L = 4;
  int max_rounds = 20;
  Tolerances tolerances;
  long candidate_budget = 500000;
  CondMode cond_mode = CondMode::Auto;
  /// Auto mode enumerates every conditioning set when the total count stays below this.
  long exhaustive_limit = 2000000;
  /// Largest latent core tried by the exclusive-view enumerator (0 disables it).
  int exclusive_core = 2;
  bool stop_when_complete = true;
  /// Conditional slices lighter than this are not solved (their weight is negligible).
  double skip_mass = 1e-12;
  /// Total slice mass whose failed decomposition may be replaced by an
  /// independent guess (0 makes every slice failure fatal to the step).
  double fallback_mass = 0.0;
};

/**
 * Family of recoverable subsets: all R u Y with Y a subset of P, |Y| <= k.
 * Families are closed under taking subsets.
 */
struct Family {
  enum class Recipe { Base, Explicit, Linear, Blanket };
  int id = -1;
  Mask R = 0, P = 0;
  int k = 0;
  Recipe recipe = Recipe::Explicit;
  int parent = -1;
  Node pivot = -1, anchor = -1;
  Mask C = 0;
  int round = 0;
  int step = -1;  // index in the report's step list, -1 for initial families
  std::shared_ptr<const FactorTable> table;

  bool covers(Mask X) const;
  bool dominatedBy(const Family& o) const;
};

class MarginalStore {
 public:
  using Provider = std::function<FactorTable(const NodeSet&)>;

  MarginalStore() = default;
  /// All subsets of `pool` up to size `budget`, answered by `provider` (may be empty for dry runs).
  static MarginalStore fromProvider(const NodeSet& pool, int budget, Provider provider);
  /// Explicit initial tables.
  static MarginalStore fromTables(const std::vector<FactorTable>& tables);
  /// Explicit initial subsets without tables (dry runs).
  static MarginalStore fromSubsets(const std::vector<NodeSet>& subsets);

  bool covers(const NodeSet& X) const { return covers(to_mask(X)); }
  bool covers(Mask X) const;
  /// Index of the first family covering X or -1.
  int coveringFamily(Mask X) const;
  /// Round at which X first became covered, or -1.
  int roundRecovered(const NodeSet& X) const;

  FactorTable query(const NodeSet& X) const;
  FactorTable queryFamily(int family, const NodeSet& X) const;

  const std::vector<Family>& families() const { return families_; }
  int add(Family f);
  /// Removes the most recent family (used to unwind a failed step).
  void popFamily();
  bool hasTables() const { return static_cast<bool>(provider_) || tables_; }

  void setTolerances(const Tolerances& tol, double skip_mass, double fallback_mass = 0.0) {
    tol_ = tol;
    // Stored tables may drift apart by up to eps_store, so merge inputs taken
    // from the store are held to that bound rather than the solver default.
    if (tol_.eps_store < 1.0) tol_.eps_consistent = std::max(tol_.eps_consistent, tol_.eps_store);
    skip_mass_ = skip_mass;
    fallback_mass_ = fallback_mass;
  }
  const Tolerances& tolerances() const { return tol_; }
  double skipMass() const { return skip_mass_; }
  double fallbackMass() const { return fallback_mass_; }
  /// Drops memoized tables.
  void clearCache() const;

 private:
  FactorTable compute(int family, Mask X) const;

  std::vector<Family> families_;
  Provider provider_;
  bool tables_ = false;
  Tolerances tol_;
  double skip_mass_ = 1e-12;
  double fallback_mass_ = 0.0;
  mutable std::vector<std::map<Mask, std::shared_ptr<const FactorTable>>> cache_;
};

/// Source of label rules: an explicit list, or one of the two generators.
struct LabelRuleSet {
  enum class Mode { Explicit, Attractive, Forced };
  Mode mode = Mode::Attractive;
  std::vector<LabelRule> rules;

  /// A rule for `target` conditioned on C whose reference is one of `views`.
  std::optional<LabelRule> find(const Graph& graph, Node target, const NodeSet& C,
                                const std::vector<Node>& views) const;
};

struct StepDiagnostic {
  int round = 0;
  std::string step;
  std::string message;
};

struct RecoveryReport {
  int rounds_executed = 0;
  std::string halt_reason;  // complete | fixpoint | max_rounds
  std::string cond_mode;
  std::vector<Edge> recovered_pairs;
  std::vector<Edge> missing_pairs;
  std::map<Edge, int> pair_round;
  std::vector<RecoveryStep> steps;
  std::vector<StepDiagnostic> errors;
  std::vector<int> families_per_round;
  double termination_bound = 0;
};

std::vector<RecoveryStep> enumerate_candidates_A(const Graph& graph, const MarginalStore& store,
                                                 const LabelRuleSet& rules,
                                                 const SchedulerConfig& config, int round = 1);
std::vector<RecoveryStep> enumerate_candidates_B(const Graph& graph, const MarginalStore& store,
                                                 const SchedulerConfig& config, int round = 1);

std::pair<MarginalStore, RecoveryReport> run_sequential(const Graph& graph,
                                                        const MarginalStore& initial,
                                                        const LabelRuleSet& rules,
                                                        const SchedulerConfig& config);

RecoveryReport analyze_recoverability(const Graph& graph, const MarginalStore& initial_subsets,
                                      const LabelRuleSet& rules, const SchedulerConfig& config);

std::pair<MarginalStore, RecoveryReport> execute_plan(const Graph& graph,
                                                      const MarginalStore& initial,
                                                      const std::vector<RecoveryStep>& steps,
                                                      const LabelRuleSet& rules,
                                                      const SchedulerConfig& config = {});

/// Executes one step against the store (tables only when the store has them). Throws on failure.
int execute_step(const Graph& graph, MarginalStore& store, RecoveryStep& step,
                 const LabelRuleSet& rules, int step_index);

/// Number of subsets of size at most K+L, the cap on rounds before the fixpoint.
double trimmed_subset_bound(int node_count, int K, int L);

}  // namespace lseq
