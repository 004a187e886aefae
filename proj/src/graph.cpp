#include "lseq/graph.hpp"

#include <algorithm>
#include <deque>
#include <functional>

namespace lseq {

std::vector<int> component_labels(const Graph& graph, const NodeSet& removed, int* count) {
  std::vector<int> label(graph.idSpace(), -1);
  std::vector<char> gone(graph.idSpace(), 0);
  for (Node v : removed)
    if (graph.contains(v)) gone[v] = 1;
  int next = 0;
  std::deque<Node> queue;
  for (Node s : graph.nodes()) {
    if (gone[s] || label[s] >= 0) continue;
    label[s] = next;
    queue.push_back(s);
    while (!queue.empty()) {
      Node u = queue.front();
      queue.pop_front();
      for (Node w : graph.neighbors(u)) {
        if (gone[w] || label[w] >= 0) continue;
        label[w] = next;
        queue.push_back(w);
      }
    }
    ++next;
  }
  if (count) *count = next;
  return label;
}

std::vector<int> bfs_distance(const Graph& graph, Node src, const NodeSet& removed) {
  std::vector<int> dist(graph.idSpace(), -1);
  std::vector<char> gone(graph.idSpace(), 0);
  for (Node v : removed)
    if (graph.contains(v)) gone[v] = 1;
  if (!graph.contains(src) || gone[src]) return dist;
  dist[src] = 0;
  std::deque<Node> queue{src};
  while (!queue.empty()) {
    Node u = queue.front();
    queue.pop_front();
    for (Node w : graph.neighbors(u)) {
      if (gone[w] || dist[w] >= 0) continue;
      dist[w] = dist[u] + 1;
      queue.push_back(w);
    }
  }
  return dist;
}

std::vector<OutsideComponent> outside_components(const Graph& graph, const NodeSet& S) {
  int count = 0;
  std::vector<int> label = component_labels(graph, S, &count);
  std::vector<OutsideComponent> out(count);
  for (Node v : graph.nodes())
    if (label[v] >= 0) out[label[v]].nodes.push_back(v);
  for (auto& comp : out) {
    NodeSet bd;
    for (Node v : comp.nodes)
      for (Node w : graph.neighbors(v))
        if (set_contains(S, w)) bd.push_back(w);
    comp.boundary = make_set(bd);
  }
  return out;
}

std::optional<MarginalizationWitness> is_marginalizable(const Graph& graph, const NodeSet& S_in) {
  NodeSet S = make_set(S_in);
  if (S.empty()) throw Error(ErrorKind::Validation, "is_marginalizable: empty set");
  for (Node v : S)
    if (!graph.contains(v)) throw Error(ErrorKind::Validation, "is_marginalizable: unknown node");
  MarginalizationWitness w;
  for (const auto& comp : outside_components(graph, S)) {
    if (comp.boundary.size() > 2) return std::nullopt;
    for (Node v : comp.nodes) w.boundary_map[v] = comp.boundary;
    if (comp.boundary.size() == 2) w.added_edges.insert(make_edge(comp.boundary[0], comp.boundary[1]));
  }
  return w;
}

Graph marg_graph(const Graph& graph, const NodeSet& S) {
  auto w = is_marginalizable(graph, S);
  if (!w) throw Error(ErrorKind::Structure, "set " + format_set(S) + " is not marginalizable");
  return graph.induced(make_set(S)).withEdges({w->added_edges.begin(), w->added_edges.end()});
}

Graph remove_nodes(const Graph& graph, const NodeSet& C) {
  return graph.induced(set_minus(graph.nodes(), make_set(C)));
}

bool separated(const Graph& graph, const NodeSet& removed, const std::vector<NodeSet>& groups) {
  std::vector<int> label = component_labels(graph, removed);
  std::vector<std::set<int>> seen(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (Node v : groups[g])
      if (graph.contains(v) && label[v] >= 0) seen[g].insert(label[v]);
  for (std::size_t a = 0; a < groups.size(); ++a)
    for (std::size_t b = a + 1; b < groups.size(); ++b)
      for (int l : seen[a])
        if (seen[b].count(l)) return false;
  return true;
}

bool is_bottleneck(const Graph& graph, Node center, const std::array<Node, 3>& views) {
  for (Node v : views)
    if (v == center || !graph.contains(v)) return false;
  if (views[0] == views[1] || views[0] == views[2] || views[1] == views[2]) return false;
  std::vector<int> label = component_labels(graph, {center});
  return label[views[0]] != label[views[1]] && label[views[0]] != label[views[2]] &&
         label[views[1]] != label[views[2]];
}

std::vector<BottleneckInstance> find_bottlenecks(const Graph& graph, const NodeSet& candidate_centers,
                                                 const NodeSet& allowed_views) {
  std::vector<BottleneckInstance> out;
  for (Node c : make_set(candidate_centers)) {
    if (!graph.contains(c)) continue;
    std::vector<int> label = component_labels(graph, {c});
    NodeSet views;
    for (Node v : make_set(allowed_views))
      if (v != c && graph.contains(v)) views.push_back(v);
    for (std::size_t a = 0; a < views.size(); ++a)
      for (std::size_t b = a + 1; b < views.size(); ++b) {
        if (label[views[a]] == label[views[b]]) continue;
        for (std::size_t d = b + 1; d < views.size(); ++d) {
          if (label[views[d]] == label[views[a]] || label[views[d]] == label[views[b]]) continue;
          out.push_back({c, {views[a], views[b], views[d]}, {}});
        }
      }
  }
  return out;
}

std::optional<ExclusiveViewInstance> exclusive_view_check(const Graph& graph, const NodeSet& S_in,
                                                          const NodeSet& candidate_views) {
  NodeSet S = make_set(S_in);
  NodeSet cands = make_set(candidate_views);
  if (!set_intersection(S, cands).empty())
    throw Error(ErrorKind::Validation, "exclusive_view_check: S and candidates overlap");
  // options[k]: candidates j whose every path to S minus {S[k]} passes through S[k].
  std::vector<NodeSet> options(S.size());
  std::vector<int> whole = component_labels(graph, {});
  for (std::size_t k = 0; k < S.size(); ++k) {
    std::vector<int> label = component_labels(graph, {S[k]});
    std::set<int> others;
    for (Node s : S)
      if (s != S[k] && graph.contains(s)) others.insert(label[s]);
    for (Node j : cands)
      if (graph.contains(j) && whole[j] == whole[S[k]] && !others.count(label[j]))
        options[k].push_back(j);
  }
  std::vector<Node> chosen(S.size(), -1);
  std::set<Node> used;
  std::function<bool(std::size_t)> assign = [&](std::size_t k) {
    if (k == S.size()) return true;
    for (Node j : options[k]) {
      if (used.count(j)) continue;
      used.insert(j);
      chosen[k] = j;
      if (assign(k + 1)) return true;
      used.erase(j);
    }
    return false;
  };
  if (!assign(0)) return std::nullopt;
  ExclusiveViewInstance inst;
  inst.core = S;
  for (std::size_t k = 0; k < S.size(); ++k) inst.view_map[S[k]] = chosen[k];
  return inst;
}

}  // namespace lseq
