#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "lseq/model.hpp"

namespace lseq {

struct MarginalizationWitness {
  std::map<Node, NodeSet> boundary_map;
  std::set<Edge> added_edges;
};

struct BottleneckInstance {
  Node center = -1;
  std::array<Node, 3> views{};
  NodeSet conditioned_on;
};

struct ExclusiveViewInstance {
  NodeSet core;
  std::map<Node, Node> view_map;
  NodeSet conditioned_on;
};

/// A connected component of G minus S together with its attachment set in S.
struct OutsideComponent {
  NodeSet nodes;
  NodeSet boundary;
};

std::vector<OutsideComponent> outside_components(const Graph& graph, const NodeSet& S);

/// Component label per node id (-1 for removed or absent nodes).
std::vector<int> component_labels(const Graph& graph, const NodeSet& removed, int* count = nullptr);

std::optional<MarginalizationWitness> is_marginalizable(const Graph& graph, const NodeSet& S);
Graph marg_graph(const Graph& graph, const NodeSet& S);
Graph remove_nodes(const Graph& graph, const NodeSet& C);

bool is_bottleneck(const Graph& graph, Node center, const std::array<Node, 3>& views);
std::vector<BottleneckInstance> find_bottlenecks(const Graph& graph, const NodeSet& candidate_centers,
                                                 const NodeSet& allowed_views);

std::optional<ExclusiveViewInstance> exclusive_view_check(const Graph& graph, const NodeSet& S,
                                                          const NodeSet& candidate_views);

/// True when every pair of `groups` lies in different components of G minus `removed`.
bool separated(const Graph& graph, const NodeSet& removed, const std::vector<NodeSet>& groups);

/// BFS hop distance from src avoiding `removed` (-1 when unreachable).
std::vector<int> bfs_distance(const Graph& graph, Node src, const NodeSet& removed);

}  // namespace lseq
