#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lseq/error.hpp"

namespace lseq {

using Node = int;
/// Sorted, duplicate-free list of node ids.
using NodeSet = std::vector<Node>;
/// Undirected edge stored with first < second.
using Edge = std::pair<Node, Node>;

Edge make_edge(Node a, Node b);
NodeSet make_set(std::vector<Node> nodes);
NodeSet set_union(const NodeSet& a, const NodeSet& b);
NodeSet set_minus(const NodeSet& a, const NodeSet& b);
NodeSet set_intersection(const NodeSet& a, const NodeSet& b);
bool set_contains(const NodeSet& s, Node v);
bool is_subset(const NodeSet& small, const NodeSet& big);
std::string format_set(const NodeSet& s);

/**
 * Undirected graph with a visible/latent partition.
 *
 * Node ids live in [0, idSpace()). Removing nodes keeps the id space, so ids
 * stay meaningful across induced subgraphs.
 */
class Graph {
 public:
  Graph() = default;
  Graph(int node_count, const std::vector<Edge>& edges, const NodeSet& visible);

  int idSpace() const { return static_cast<int>(present_.size()); }
  int nodeCount() const { return static_cast<int>(nodes_.size()); }
  const NodeSet& nodes() const { return nodes_; }
  bool contains(Node v) const { return v >= 0 && v < idSpace() && present_[v]; }

  const std::vector<Edge>& edges() const { return edges_; }
  const NodeSet& neighbors(Node v) const { return adj_.at(v); }
  bool hasEdge(Node a, Node b) const;
  int degree(Node v) const { return static_cast<int>(adj_.at(v).size()); }

  bool isVisible(Node v) const { return contains(v) && visible_[v]; }
  bool isLatent(Node v) const { return contains(v) && !visible_[v]; }
  NodeSet visible() const;
  NodeSet latent() const;

  /// Subgraph induced by `keep` (ids unchanged).
  Graph induced(const NodeSet& keep) const;
  /// Same nodes with extra edges.
  Graph withEdges(const std::vector<Edge>& extra) const;

 private:
  std::vector<char> present_;
  std::vector<char> visible_;
  NodeSet nodes_;
  std::vector<Edge> edges_;
  std::vector<NodeSet> adj_;
};

struct GMParams {
  std::map<Edge, double> beta;
  std::map<Node, double> gamma;

  double coupling(Node a, Node b) const;
  double field(Node v) const;
};

/// Throws a validation error unless params has one finite entry per edge and node.
void validate_params(const Graph& graph, const GMParams& params);

/**
 * Probability table over an ordered scope.  The first scope variable is the
 * most significant bit of the value index.
 */
class FactorTable {
 public:
  FactorTable() = default;
  /// Strict constructor: entries >= -1e-12 (clipped) and a sum within 1e-12 of 1.
  FactorTable(std::vector<Node> scope, std::vector<double> values);

  /// Clips entries in [-clip_tol, 0) and renormalizes; anything below fails.
  static FactorTable normalized(std::vector<Node> scope, std::vector<double> values,
                                double clip_tol = 1e-12);

  const std::vector<Node>& scope() const { return scope_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  int arity() const { return static_cast<int>(scope_.size()); }
  double operator[](std::size_t idx) const { return values_[idx]; }

  /// Position of v in the scope or -1.
  int position(Node v) const;
  bool hasVariable(Node v) const { return position(v) >= 0; }
  /// Bit of variable at scope position `pos` in assignment index `idx`.
  int bit(std::size_t idx, int pos) const { return (idx >> (arity() - 1 - pos)) & 1; }

  FactorTable reordered(const std::vector<Node>& order) const;
  /// Scope sorted ascending.
  FactorTable canonical() const;
  /// Swaps the 0/1 labels of variable v.
  FactorTable flipped(Node v) const;
  NodeSet scopeSet() const { return make_set(scope_); }

 private:
  std::vector<Node> scope_;
  std::vector<double> values_;
};

struct SampleSet {
  std::vector<Node> visible_scope;
  /// Row-major, one byte per entry.
  std::vector<std::uint8_t> data;
  std::size_t count = 0;

  std::uint8_t at(std::size_t row, std::size_t col) const {
    return data[row * visible_scope.size() + col];
  }
};

struct ModelConfig {
  int joint_cap = 25;
  int component_cap = 20;
  double eps_zero = 1e-14;
};

FactorTable exact_joint(const Graph& graph, const GMParams& params, int cap = 25);

/// Exact marginal over S by variable elimination; no node cap, cost follows treewidth.
FactorTable exact_marginal(const Graph& graph, const GMParams& params, const NodeSet& S);

/// log Z by variable elimination.
double log_partition(const Graph& graph, const GMParams& params);

FactorTable marginalize_table(const FactorTable& table, const NodeSet& keep);
FactorTable condition_table(const FactorTable& table, const std::map<Node, int>& assignment,
                            double eps_zero = 1e-14);

/// Returns Marg(S,G) together with parameters reproducing the S-marginal.
std::pair<Graph, GMParams> eliminate_to_marginal_gm(const Graph& graph, const GMParams& params,
                                                    const NodeSet& S, int component_cap = 20);

SampleSet sample(const Graph& graph, const GMParams& params, std::size_t n, std::uint64_t seed,
                 int cap = 25);
FactorTable empirical_marginal(const SampleSet& samples, const NodeSet& S);

/// Total variation over a common scope (order-insensitive).
double table_distance(const FactorTable& a, const FactorTable& b);

/// Unnormalized energy sum(beta x x) + sum(gamma x) of a full assignment (indexed by node id).
double energy(const Graph& graph, const GMParams& params, const std::vector<int>& x);

/// Flips the label of node v: x_v -> 1 - x_v, rewriting params so the distribution is unchanged.
GMParams relabel_params(const Graph& graph, const GMParams& params, Node v);

/// Assignment index of `assignment` (values ordered like `scope`).
std::size_t assignment_index(const std::vector<int>& bits);
std::vector<int> index_bits(std::size_t idx, int width);

}  // namespace lseq
