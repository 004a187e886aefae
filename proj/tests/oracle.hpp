#pragma once

// Brute-force reference computations for the tests.  Everything here works
// from the raw edge/field lists by enumerating all 2^n states and shares no
// code path with the library's elimination or solvers.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "lseq/model.hpp"

namespace oracle {

using lseq::Edge;
using lseq::Node;

/// Full joint over graph.nodes() (ascending); state bit k (MSB first) is node k.
struct Joint {
  std::vector<Node> nodes;
  std::vector<double> p;

  int position(Node v) const {
    return static_cast<int>(std::find(nodes.begin(), nodes.end(), v) - nodes.begin());
  }
  int bit(std::size_t state, Node v) const {
    return (state >> (nodes.size() - 1 - position(v))) & 1;
  }
};

inline Joint joint(const lseq::Graph& g, const lseq::GMParams& params) {
  Joint j;
  j.nodes = g.nodes();
  const std::size_t n = j.nodes.size();
  j.p.resize(std::size_t{1} << n);
  std::vector<double> logw(j.p.size());
  for (std::size_t s = 0; s < j.p.size(); ++s) {
    double e = 0;
    for (const auto& [v, c] : params.gamma) e += c * j.bit(s, v);
    for (const auto& [edge, b] : params.beta) e += b * j.bit(s, edge.first) * j.bit(s, edge.second);
    logw[s] = e;
  }
  double top = *std::max_element(logw.begin(), logw.end());
  double z = 0;
  for (std::size_t s = 0; s < j.p.size(); ++s) z += j.p[s] = std::exp(logw[s] - top);
  for (double& x : j.p) x /= z;
  return j;
}

inline double log_partition(const lseq::Graph& g, const lseq::GMParams& params) {
  Joint j;
  j.nodes = g.nodes();
  double z = 0;
  for (std::size_t s = 0; s < (std::size_t{1} << j.nodes.size()); ++s) {
    double e = 0;
    for (const auto& [v, c] : params.gamma) e += c * j.bit(s, v);
    for (const auto& [edge, b] : params.beta) e += b * j.bit(s, edge.first) * j.bit(s, edge.second);
    z += std::exp(e);
  }
  return std::log(z);
}

/// Marginal over S, scope sorted ascending, MSB = smallest node.
inline lseq::FactorTable marginal(const Joint& j, std::vector<Node> S) {
  std::sort(S.begin(), S.end());
  std::vector<double> out(std::size_t{1} << S.size(), 0.0);
  for (std::size_t s = 0; s < j.p.size(); ++s) {
    std::size_t idx = 0;
    for (Node v : S) idx = (idx << 1) | j.bit(s, v);
    out[idx] += j.p[s];
  }
  return lseq::FactorTable::normalized(S, out);
}

inline lseq::FactorTable marginal(const lseq::Graph& g, const lseq::GMParams& params,
                                  const std::vector<Node>& S) {
  return marginal(joint(g, params), S);
}

/// Value of table t at the assignment given as node -> bit.
inline double value_at(const lseq::FactorTable& t, const std::map<Node, int>& a) {
  std::size_t idx = 0;
  for (Node v : t.scope()) idx = (idx << 1) | a.at(v);
  return t[idx];
}

/// Total variation; tables must share the scope as sets (any order).
inline double tv(const lseq::FactorTable& a, const lseq::FactorTable& b) {
  std::vector<Node> scope = a.scope();
  double d = 0;
  for (std::size_t idx = 0; idx < a.size(); ++idx) {
    std::map<Node, int> asg;
    for (std::size_t k = 0; k < scope.size(); ++k) asg[scope[k]] = (idx >> (scope.size() - 1 - k)) & 1;
    d += std::abs(a[idx] - value_at(b, asg));
  }
  return d / 2;
}

/// Table with the bit of v inverted.
inline lseq::FactorTable flip(const lseq::FactorTable& t, Node v) {
  std::vector<double> out(t.size());
  const int pos = t.position(v);
  const std::size_t mask = std::size_t{1} << (t.arity() - 1 - pos);
  for (std::size_t idx = 0; idx < t.size(); ++idx) out[idx ^ mask] = t[idx];
  return lseq::FactorTable(t.scope(), out);
}

/// Smallest TV over all relabelings of the listed nodes in `b`.
inline double min_relabel_tv(const lseq::FactorTable& a, const lseq::FactorTable& b,
                             const std::vector<Node>& relabelable) {
  std::vector<Node> in_scope;
  for (Node v : relabelable)
    if (b.hasVariable(v)) in_scope.push_back(v);
  double best = 2;
  for (std::size_t m = 0; m < (std::size_t{1} << in_scope.size()); ++m) {
    lseq::FactorTable c = b;
    for (std::size_t k = 0; k < in_scope.size(); ++k)
      if ((m >> k) & 1) c = flip(c, in_scope[k]);
    best = std::min(best, tv(a, c));
  }
  return best;
}

/// Truth marginal with each latent label chosen so that P(latent = 1) > 1/2.
inline lseq::FactorTable canonical_truth(const Joint& j, const lseq::Graph& g, const std::vector<Node>& S) {
  lseq::FactorTable t = marginal(j, S);
  for (Node v : t.scope())
    if (g.isLatent(v) && marginal(j, {v})[1] < 0.5) t = flip(t, v);
  return t;
}

/// Random connected graph on n nodes: a random tree plus `extra` edges.
inline lseq::Graph random_graph(int n, int extra, const std::vector<Node>& visible, std::mt19937_64& rng) {
  std::vector<Edge> edges;
  for (int v = 1; v < n; ++v) {
    std::uniform_int_distribution<int> pick(0, v - 1);
    edges.push_back(lseq::make_edge(pick(rng), v));
  }
  std::uniform_int_distribution<int> any(0, n - 1);
  for (int t = 0; t < extra * 4 && extra > 0; ++t) {
    Edge e = lseq::make_edge(any(rng), any(rng));
    if (e.first == e.second || std::find(edges.begin(), edges.end(), e) != edges.end()) continue;
    edges.push_back(e);
    if (--extra == 0) break;
  }
  return lseq::Graph(n, edges, visible);
}

/// |beta| in [lo, hi] with random sign (positive when attractive), gamma in [-hi, hi].
inline lseq::GMParams random_params(const lseq::Graph& g, double lo, double hi, std::mt19937_64& rng,
                                    bool attractive = false) {
  std::uniform_real_distribution<double> mag(lo, hi), field(-hi, hi), coin(0, 1);
  lseq::GMParams p;
  for (const Edge& e : g.edges()) p.beta[e] = (attractive || coin(rng) < 0.5 ? 1 : -1) * mag(rng);
  for (Node v : g.nodes()) p.gamma[v] = field(rng);
  return p;
}

}  // namespace oracle
