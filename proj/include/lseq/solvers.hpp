#pragma once

#include <array>
#include <vector>

#include "lseq/graph.hpp"
#include "lseq/model.hpp"

namespace lseq {

struct LabelRule {
  Node target = -1;
  Node reference = -1;
  int preference = 1;
  NodeSet condition_set;
};

/// Solver thresholds. The defaults are the exact-input values.
struct Tolerances {
  double eps_solve = 1e-9;    // clip window and reconstruction tolerance
  double eps_eig = 1e-7;      // minimum eigenvalue gap
  double eps_imag = 1e-12;    // allowed negative discriminant
  double cond_max = 1e12;     // largest accepted condition number
  double eps_zero = 1e-14;    // conditioning events at or below this are degenerate
  double eps_pref = 1e-9;     // smallest decidable label preference
  double eps_deg = 1e-7;      // degeneracy margin around 0.5
  double eps_consistent = 1e-9;  // agreement of shared marginals between merge inputs
  double eps_store = 1e-6;    // agreement between stored tables on shared scopes

  /// Looser bundle for sample-based marginals.
  static Tolerances empirical();
};

struct MixtureDecomposition {
  Node hidden = -1;
  std::array<Node, 3> views{};
  std::array<double, 2> weights{};
  /// conditionals[v][a][s] = P(view v = a | hidden = s)
  std::array<std::array<std::array<double, 2>, 2>, 3> conditionals{};
};

MixtureDecomposition decompose_mixture(const FactorTable& views_table, Node hidden,
                                       const Tolerances& tol = {});
FactorTable tensor_decomp(const FactorTable& views_table, Node hidden, const Tolerances& tol = {});

/// P(S|C) P(T|C) P(C) where C is the scope intersection.
FactorTable disjoint_view(const FactorTable& table_SC, const FactorTable& table_TC,
                          const Tolerances& tol = {});

/// P(S, i, j) from P(i, j) and P(S, j) when S and j are separated by i.
FactorTable linear_view(const FactorTable& table_ij, const FactorTable& table_Sj, Node i, Node j,
                        const Tolerances& tol = {});

FactorTable exclusive_view_merge(const ExclusiveViewInstance& instance, const FactorTable& table_E,
                                 const std::map<Node, FactorTable>& pair_tables,
                                 const Tolerances& tol = {}, int max_core = 10);

/// Relabels the target in each per-assignment table so the preference sign matches the rule.
std::vector<FactorTable> fix_labels(const std::vector<FactorTable>& per_assignment_tables,
                                    const LabelRule& rule, const Tolerances& tol = {});

/// Label preference log P(ref=1|t=1) - log P(ref=1|t=0) of one table.
double label_preference(const FactorTable& table, Node target, Node reference);

FactorTable canonical_label_by_degeneracy(const FactorTable& table, Node target,
                                          double eps_deg = 1e-7);

/// Conditional tables P(. | x_C = c) for every assignment c of C (MSB-first over sorted C).
std::vector<FactorTable> condition_all(const FactorTable& table, const NodeSet& C,
                                       const Tolerances& tol = {});
/// Inverse of condition_all: sum_c P(. | c) P(c) as a joint over scope(conditionals) and C.
FactorTable join_with_marginal(const std::vector<FactorTable>& conditionals, const FactorTable& P_C,
                               const Tolerances& tol = {});

}  // namespace lseq
