#pragma once

#include <map>
#include <vector>

#include "lseq/model.hpp"
#include "lseq/scheduler.hpp"

namespace lseq {

struct MomentTargets {
  std::map<Node, double> node_moments;  // E[x_i]
  std::map<Edge, double> edge_moments;  // E[x_i x_j]
};

struct FitResult {
  GMParams params;
  double final_gradient_norm = 0;
  int iterations = 0;
  bool converged = false;
};

struct FitOptions {
  double tol = 1e-8;
  int max_iters = 50000;
  double eps_mom = 1e-9;
  double armijo = 1e-4;
  /// Curvature pairs kept by the quasi-Newton direction (graphs too large to enumerate).
  int history = 10;
  /// Graphs up to this size are enumerated (exact Hessian, Newton steps); larger ones use
  /// elimination and quasi-Newton steps.
  int enumeration_cap = 20;
};

/// Reads E[x_i] and E[x_i x_j] off the store. In permissive mode missing
/// entries are skipped (and listed in `missing`) instead of raising.
MomentTargets moments_from_store(const MarginalStore& store, const Graph& graph,
                                 bool permissive = false, std::vector<Edge>* missing = nullptr);

/// Exact moments of the model (node and edge expectations).
MomentTargets model_moments(const Graph& graph, const GMParams& params, int enumeration_cap = 20);

/// Average fully-observed log-likelihood expressed through moments:
/// sum beta*E[x_i x_j] + sum gamma*E[x_i] - log Z.
double moment_objective(const Graph& graph, const GMParams& params, const MomentTargets& targets);
/// Gradient of moment_objective: target moments minus model moments.
MomentTargets moment_gradient(const Graph& graph, const GMParams& params, const MomentTargets& targets,
                              int enumeration_cap = 20);

/// Throws a boundary error unless the targets are strictly inside the moment polytope.
void check_interior(const Graph& graph, const MomentTargets& targets, double eps_mom = 1e-9);

FitResult fit_from_moments(const Graph& graph, const MomentTargets& targets, const FitOptions& opts = {});

/// Average log probability of the visible rows, summing out latent nodes exactly.
double log_likelihood(const Graph& graph, const GMParams& params, const SampleSet& samples);

}  // namespace lseq
