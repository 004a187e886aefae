#include "lseq/instances.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "lseq/graph.hpp"

namespace lseq {

Graph make_grid(int rows, int cols) {
  if (rows < 3 || cols < 3) throw Error(ErrorKind::Validation, "grid needs at least 3 rows and 3 columns");
  std::vector<Edge> edges;
  NodeSet visible;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      Node v = r * cols + c;
      if (c + 1 < cols) edges.push_back({v, v + 1});
      if (r + 1 < rows) edges.push_back({v, v + cols});
      if (r == 0 || c == 0 || r == rows - 1 || c == cols - 1) visible.push_back(v);
    }
  return Graph(rows * cols, edges, visible);
}

Graph make_crbm(const CrbmSpec& s) {
  if (s.filter_rows < 2 || s.filter_rows > s.filter_cols)
    throw Error(ErrorKind::Validation, "CRBM filter needs 2 <= rows <= cols");
  if (s.stride < 1) throw Error(ErrorKind::Validation, "CRBM stride must be positive");
  if (s.filter_rows > s.visible_rows || s.filter_cols > s.visible_cols)
    throw Error(ErrorKind::Validation, "CRBM filter does not fit the visible grid");
  const int nv = s.visible_rows * s.visible_cols;
  NodeSet visible(nv);
  std::iota(visible.begin(), visible.end(), 0);
  std::vector<Edge> edges;
  Node h = nv;
  for (int r = 0; r + s.filter_rows <= s.visible_rows; r += s.stride)
    for (int c = 0; c + s.filter_cols <= s.visible_cols; c += s.stride, ++h)
      for (int dr = 0; dr < s.filter_rows; ++dr)
        for (int dc = 0; dc < s.filter_cols; ++dc)
          edges.push_back({(r + dr) * s.visible_cols + c + dc, h});
  return Graph(h, edges, visible);
}

Graph make_random_regular(const RegularSpec& s, int retry_cap) {
  const int n = s.node_count, d = s.degree;
  if (d < 5) throw Error(ErrorKind::Validation, "regular graphs need degree at least 5");
  if ((static_cast<long>(n) * d) % 2 != 0) throw Error(ErrorKind::Validation, "node_count * degree must be even");
  if (d >= n) throw Error(ErrorKind::Validation, "degree must be below node_count");
  if (s.latent_count < 0 || s.latent_count > n)
    throw Error(ErrorKind::Validation, "latent_count out of range");
  std::mt19937_64 rng(s.seed);
  std::vector<Node> stubs;
  for (Node v = 0; v < n; ++v)
    for (int k = 0; k < d; ++k) stubs.push_back(v);
  for (int attempt = 0; attempt < retry_cap; ++attempt) {
    std::shuffle(stubs.begin(), stubs.end(), rng);
    std::set<Edge> seen;
    bool ok = true;
    for (std::size_t k = 0; k < stubs.size() && ok; k += 2) {
      if (stubs[k] == stubs[k + 1]) ok = false;
      else ok = seen.insert(make_edge(stubs[k], stubs[k + 1])).second;
    }
    if (!ok) continue;
    std::vector<Node> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    NodeSet visible(order.begin() + s.latent_count, order.end());
    return Graph(n, {seen.begin(), seen.end()}, make_set(visible));
  }
  throw Error(ErrorKind::Generation, "configuration model failed " + std::to_string(retry_cap) + " times");
}

std::vector<Condition1Witness> condition1_nodes(const Graph& g) {
  std::vector<Condition1Witness> out;
  for (Node i : g.latent()) {
    NodeSet vis;
    for (Node u : g.neighbors(i))
      if (g.isVisible(u)) vis.push_back(u);
    bool found = false;
    for (std::size_t a = 0; a < vis.size() && !found; ++a)
      for (std::size_t b = a + 1; b < vis.size() && !found; ++b) {
        Node j = vis[a], k = vis[b];
        NodeSet S = set_minus(set_union(g.neighbors(j), g.neighbors(k)), {i});
        if (set_contains(S, j) || set_contains(S, k)) continue;
        if (!std::all_of(S.begin(), S.end(), [&](Node v) { return g.isVisible(v); })) continue;
        Graph h = remove_nodes(g, S);
        // A view cut off from i is independent of it and leaves the decomposition singular.
        std::vector<int> comp = component_labels(h, {});
        for (Node l : g.visible()) {
          if (l == j || l == k || set_contains(S, l) || comp[l] != comp[i]) continue;
          if (is_bottleneck(h, i, {j, k, l})) {
            out.push_back({i, j, k, l, S});
            found = true;
            break;
          }
        }
      }
  }
  return out;
}

std::vector<LabelRule> attractive_label_family(const Graph& g, const std::vector<NodeSet>& condition_sets,
                                               std::vector<std::pair<Node, NodeSet>>* skipped) {
  std::vector<LabelRule> rules;
  for (Node i : g.latent())
    for (const NodeSet& raw : condition_sets) {
      NodeSet C = make_set(raw);
      if (set_contains(C, i)) continue;
      Node ref = -1;
      for (Node u : g.neighbors(i))
        if (!set_contains(C, u)) {
          ref = u;
          break;
        }
      if (ref < 0) {
        if (skipped) skipped->push_back({i, C});
        continue;
      }
      rules.push_back({i, ref, 1, C});
    }
  return rules;
}

GMParams random_params(const Graph& g, double lo, double hi, std::uint64_t seed, bool attractive) {
  if (!(lo > 0) || hi < lo) throw Error(ErrorKind::Validation, "random_params needs 0 < lo <= hi");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(lo, hi), field(-hi, hi);
  std::bernoulli_distribution sign(0.5);
  GMParams p;
  for (const Edge& e : g.edges()) {
    double b = lo == hi ? lo : mag(rng);
    if (!attractive && sign(rng)) b = -b;
    p.beta[e] = b;
  }
  for (Node v : g.nodes()) p.gamma[v] = field(rng);
  return p;
}

}  // namespace lseq
