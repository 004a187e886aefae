#include "lseq/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "lseq/graph.hpp"

namespace lseq {

Edge make_edge(Node a, Node b) { return a < b ? Edge{a, b} : Edge{b, a}; }

NodeSet make_set(std::vector<Node> nodes) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

NodeSet set_union(const NodeSet& a, const NodeSet& b) {
  NodeSet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

NodeSet set_minus(const NodeSet& a, const NodeSet& b) {
  NodeSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

NodeSet set_intersection(const NodeSet& a, const NodeSet& b) {
  NodeSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool set_contains(const NodeSet& s, Node v) { return std::binary_search(s.begin(), s.end(), v); }

bool is_subset(const NodeSet& small, const NodeSet& big) {
  return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

std::string format_set(const NodeSet& s) {
  std::ostringstream os;
  os << "{";
  for (std::size_t k = 0; k < s.size(); ++k) os << (k ? "," : "") << s[k];
  os << "}";
  return os.str();
}

std::size_t assignment_index(const std::vector<int>& bits) {
  std::size_t idx = 0;
  for (int b : bits) idx = (idx << 1) | static_cast<std::size_t>(b & 1);
  return idx;
}

std::vector<int> index_bits(std::size_t idx, int width) {
  std::vector<int> bits(width);
  for (int k = 0; k < width; ++k) bits[k] = (idx >> (width - 1 - k)) & 1;
  return bits;
}

// ---------------------------------------------------------------- Graph

Graph::Graph(int node_count, const std::vector<Edge>& edges, const NodeSet& visible) {
  if (node_count < 0) throw Error(ErrorKind::Validation, "negative node count");
  present_.assign(node_count, 1);
  visible_.assign(node_count, 0);
  adj_.assign(node_count, {});
  nodes_.resize(node_count);
  std::iota(nodes_.begin(), nodes_.end(), 0);
  for (Node v : visible) {
    if (v < 0 || v >= node_count) throw Error(ErrorKind::Validation, "visible id out of range");
    if (visible_[v]) throw Error(ErrorKind::Validation, "duplicate visible id");
    visible_[v] = 1;
  }
  std::set<Edge> seen;
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= node_count || b >= node_count)
      throw Error(ErrorKind::Validation, "edge references an invalid node");
    if (a == b) throw Error(ErrorKind::Validation, "self-loop on node " + std::to_string(a));
    Edge e = make_edge(a, b);
    if (!seen.insert(e).second)
      throw Error(ErrorKind::Validation,
                  "duplicate edge " + std::to_string(e.first) + "-" + std::to_string(e.second));
    adj_[a].push_back(b);
    adj_[b].push_back(a);
  }
  edges_.assign(seen.begin(), seen.end());
  for (auto& nb : adj_) std::sort(nb.begin(), nb.end());
}

bool Graph::hasEdge(Node a, Node b) const {
  if (!contains(a) || !contains(b)) return false;
  return set_contains(adj_[a], b);
}

NodeSet Graph::visible() const {
  NodeSet out;
  for (Node v : nodes_)
    if (visible_[v]) out.push_back(v);
  return out;
}

NodeSet Graph::latent() const {
  NodeSet out;
  for (Node v : nodes_)
    if (!visible_[v]) out.push_back(v);
  return out;
}

Graph Graph::induced(const NodeSet& keep) const {
  Graph g;
  g.present_.assign(present_.size(), 0);
  g.visible_ = visible_;
  g.adj_.assign(present_.size(), {});
  for (Node v : keep)
    if (contains(v)) g.present_[v] = 1;
  for (Node v : nodes_)
    if (g.present_[v]) g.nodes_.push_back(v);
  for (const Edge& e : edges_) {
    if (g.present_[e.first] && g.present_[e.second]) {
      g.edges_.push_back(e);
      g.adj_[e.first].push_back(e.second);
      g.adj_[e.second].push_back(e.first);
    }
  }
  for (auto& nb : g.adj_) std::sort(nb.begin(), nb.end());
  for (std::size_t v = 0; v < present_.size(); ++v)
    if (!g.present_[v]) g.visible_[v] = 0;
  return g;
}

Graph Graph::withEdges(const std::vector<Edge>& extra) const {
  Graph g = *this;
  std::set<Edge> all(edges_.begin(), edges_.end());
  for (auto [a, b] : extra) {
    if (!contains(a) || !contains(b) || a == b)
      throw Error(ErrorKind::Validation, "added edge references an absent node");
    if (all.insert(make_edge(a, b)).second) {
      g.adj_[a].push_back(b);
      g.adj_[b].push_back(a);
    }
  }
  g.edges_.assign(all.begin(), all.end());
  for (auto& nb : g.adj_) std::sort(nb.begin(), nb.end());
  return g;
}

// ---------------------------------------------------------------- params

double GMParams::coupling(Node a, Node b) const {
  auto it = beta.find(make_edge(a, b));
  return it == beta.end() ? 0.0 : it->second;
}

double GMParams::field(Node v) const {
  auto it = gamma.find(v);
  return it == gamma.end() ? 0.0 : it->second;
}

void validate_params(const Graph& graph, const GMParams& params) {
  if (params.beta.size() != graph.edges().size())
    throw Error(ErrorKind::Validation, "beta must have exactly one entry per edge");
  for (const Edge& e : graph.edges()) {
    auto it = params.beta.find(e);
    if (it == params.beta.end())
      throw Error(ErrorKind::Validation, "missing beta for edge " + std::to_string(e.first) +
                                             "-" + std::to_string(e.second));
    if (!std::isfinite(it->second)) throw Error(ErrorKind::Validation, "non-finite beta");
  }
  if (params.gamma.size() != static_cast<std::size_t>(graph.nodeCount()))
    throw Error(ErrorKind::Validation, "gamma must have exactly one entry per node");
  for (Node v : graph.nodes()) {
    auto it = params.gamma.find(v);
    if (it == params.gamma.end())
      throw Error(ErrorKind::Validation, "missing gamma for node " + std::to_string(v));
    if (!std::isfinite(it->second)) throw Error(ErrorKind::Validation, "non-finite gamma");
  }
}

double energy(const Graph& graph, const GMParams& params, const std::vector<int>& x) {
  double e = 0.0;
  for (Node v : graph.nodes())
    if (x[v]) e += params.field(v);
  for (const Edge& ed : graph.edges())
    if (x[ed.first] && x[ed.second]) e += params.coupling(ed.first, ed.second);
  return e;
}

GMParams relabel_params(const Graph& graph, const GMParams& params, Node v) {
  GMParams out = params;
  for (Node u : graph.neighbors(v)) {
    double b = params.coupling(u, v);
    out.beta[make_edge(u, v)] = -b;
    out.gamma[u] += b;
  }
  out.gamma[v] = -params.field(v);
  return out;
}

// ---------------------------------------------------------------- FactorTable

namespace {

void check_scope(const std::vector<Node>& scope) {
  if (make_set(scope).size() != scope.size())
    throw Error(ErrorKind::Validation, "table scope has repeated variables");
  if (scope.size() > 30) throw Error(ErrorKind::Resource, "table scope too large");
}

}  // namespace

FactorTable::FactorTable(std::vector<Node> scope, std::vector<double> values)
    : scope_(std::move(scope)), values_(std::move(values)) {
  check_scope(scope_);
  if (values_.size() != (std::size_t{1} << scope_.size()))
    throw Error(ErrorKind::Validation, "table size does not match scope");
  double sum = 0.0;
  for (double& v : values_) {
    if (!std::isfinite(v)) throw Error(ErrorKind::Validation, "non-finite table entry");
    if (v < -1e-12) throw Error(ErrorKind::Validation, "negative table entry");
    if (v < 0) v = 0;
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw Error(ErrorKind::Validation, "table does not sum to 1");
  for (double& v : values_) v /= sum;
}

FactorTable FactorTable::normalized(std::vector<Node> scope, std::vector<double> values,
                                    double clip_tol) {
  check_scope(scope);
  if (values.size() != (std::size_t{1} << scope.size()))
    throw Error(ErrorKind::Validation, "table size does not match scope");
  double sum = 0.0;
  for (double& v : values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidResult, "non-finite table entry");
    if (v < -clip_tol)
      throw Error(ErrorKind::InvalidResult, "table entry " + std::to_string(v) + " below zero");
    if (v < 0) v = 0;
    sum += v;
  }
  if (!(sum > 0)) throw Error(ErrorKind::InvalidResult, "table has zero mass");
  for (double& v : values) v /= sum;
  FactorTable t;
  t.scope_ = std::move(scope);
  t.values_ = std::move(values);
  return t;
}

int FactorTable::position(Node v) const {
  for (std::size_t k = 0; k < scope_.size(); ++k)
    if (scope_[k] == v) return static_cast<int>(k);
  return -1;
}

FactorTable FactorTable::reordered(const std::vector<Node>& order) const {
  if (make_set(order) != make_set(scope_))
    throw Error(ErrorKind::Validation, "reorder: scope mismatch");
  const int n = arity();
  std::vector<int> src(n);  // src[k] = position in this table of order[k]
  for (int k = 0; k < n; ++k) src[k] = position(order[k]);
  FactorTable t;
  t.scope_ = order;
  t.values_.assign(values_.size(), 0.0);
  for (std::size_t idx = 0; idx < values_.size(); ++idx) {
    std::size_t old = 0;
    for (int k = 0; k < n; ++k) {
      int b = (idx >> (n - 1 - k)) & 1;
      old |= static_cast<std::size_t>(b) << (n - 1 - src[k]);
    }
    t.values_[idx] = values_[old];
  }
  return t;
}

FactorTable FactorTable::canonical() const {
  if (std::is_sorted(scope_.begin(), scope_.end())) return *this;
  return reordered(make_set(scope_));
}

FactorTable FactorTable::flipped(Node v) const {
  int pos = position(v);
  if (pos < 0) throw Error(ErrorKind::Validation, "flip: variable not in scope");
  std::size_t mask = std::size_t{1} << (arity() - 1 - pos);
  FactorTable t = *this;
  for (std::size_t idx = 0; idx < values_.size(); ++idx) t.values_[idx] = values_[idx ^ mask];
  return t;
}

// ---------------------------------------------------------------- table ops

FactorTable marginalize_table(const FactorTable& table, const NodeSet& keep_in) {
  NodeSet keep = make_set(keep_in);
  if (keep.empty()) throw Error(ErrorKind::Validation, "marginalize: empty keep set");
  std::vector<int> pos;
  for (Node v : keep) {
    int p = table.position(v);
    if (p < 0) throw Error(ErrorKind::Validation, "marginalize: keep set not within scope");
    pos.push_back(p);
  }
  const int n = table.arity();
  const int m = static_cast<int>(keep.size());
  std::vector<double> out(std::size_t{1} << m, 0.0);
  for (std::size_t idx = 0; idx < table.size(); ++idx) {
    std::size_t j = 0;
    for (int k = 0; k < m; ++k) j = (j << 1) | ((idx >> (n - 1 - pos[k])) & 1);
    out[j] += table[idx];
  }
  return FactorTable::normalized(keep, std::move(out));
}

FactorTable condition_table(const FactorTable& table, const std::map<Node, int>& assignment,
                            double eps_zero) {
  std::vector<Node> rest;
  for (Node v : table.scope())
    if (!assignment.count(v)) rest.push_back(v);
  if (rest.empty()) throw Error(ErrorKind::Validation, "condition: empty result scope");
  const int n = table.arity();
  std::size_t mask = 0, want = 0;
  for (auto [v, val] : assignment) {
    int p = table.position(v);
    if (p < 0) throw Error(ErrorKind::Validation, "condition: variable not in scope");
    std::size_t bitv = std::size_t{1} << (n - 1 - p);
    mask |= bitv;
    if (val) want |= bitv;
  }
  std::vector<int> rpos;
  for (Node v : rest) rpos.push_back(table.position(v));
  const int m = static_cast<int>(rest.size());
  std::vector<double> out(std::size_t{1} << m, 0.0);
  double mass = 0.0;
  for (std::size_t idx = 0; idx < table.size(); ++idx) {
    if ((idx & mask) != want) continue;
    std::size_t j = 0;
    for (int k = 0; k < m; ++k) j = (j << 1) | ((idx >> (n - 1 - rpos[k])) & 1);
    out[j] += table[idx];
    mass += table[idx];
  }
  if (mass <= eps_zero)
    throw Error(ErrorKind::DegenerateEvent, "conditioning event has probability " +
                                                format_real(mass));
  for (double& v : out) v /= mass;
  return FactorTable::normalized(rest, std::move(out));
}

double table_distance(const FactorTable& a, const FactorTable& b) {
  if (make_set(a.scope()) != make_set(b.scope()))
    throw Error(ErrorKind::Validation, "table_distance: scope mismatch");
  FactorTable ca = a.canonical(), cb = b.canonical();
  double d = 0.0;
  for (std::size_t k = 0; k < ca.size(); ++k) d += std::abs(ca[k] - cb[k]);
  return 0.5 * d;
}

// ---------------------------------------------------------------- exact inference

FactorTable exact_joint(const Graph& graph, const GMParams& params, int cap) {
  validate_params(graph, params);
  const int n = graph.nodeCount();
  if (n > cap)
    throw Error(ErrorKind::Resource, "exact_joint: " + std::to_string(n) +
                                         " nodes exceeds cap " + std::to_string(cap));
  if (n == 0) throw Error(ErrorKind::Validation, "exact_joint: empty graph");
  const NodeSet& nodes = graph.nodes();
  // local position of each node id
  std::vector<int> local(graph.idSpace(), -1);
  for (int k = 0; k < n; ++k) local[nodes[k]] = k;

  const std::size_t total = std::size_t{1} << n;
  std::vector<double> e(total, 0.0);
  std::vector<int> x(n, 0);
  double cur = 0.0;
  std::size_t gray = 0;
  // Walk states in Gray-code order so each step flips one variable.
  for (std::size_t t = 1; t < total; ++t) {
    int b = __builtin_ctzll(t);
    int k = n - 1 - b;  // scope position of the flipped variable
    Node v = nodes[k];
    double delta = params.field(v);
    for (Node u : graph.neighbors(v))
      if (x[local[u]]) delta += params.coupling(u, v);
    if (x[k]) {
      cur -= delta;
      x[k] = 0;
    } else {
      cur += delta;
      x[k] = 1;
    }
    gray ^= std::size_t{1} << b;
    e[gray] = cur;
  }
  double mx = *std::max_element(e.begin(), e.end());
  double z = 0.0;
  for (double& v : e) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : e) v /= z;
  return FactorTable::normalized(std::vector<Node>(nodes.begin(), nodes.end()), std::move(e));
}

namespace {

// Unnormalized factor used by variable elimination. Scope sorted ascending.
struct VeFactor {
  NodeSet scope;
  std::vector<double> vals;
  double log_scale = 0.0;  // true values are vals * exp(log_scale)
};

VeFactor ve_product(const VeFactor& f, const VeFactor& g) {
  VeFactor out;
  out.scope = set_union(f.scope, g.scope);
  const int n = static_cast<int>(out.scope.size());
  std::vector<std::size_t> fbit(n, 0), gbit(n, 0);
  for (int k = 0; k < n; ++k) {
    auto fi = std::lower_bound(f.scope.begin(), f.scope.end(), out.scope[k]);
    if (fi != f.scope.end() && *fi == out.scope[k])
      fbit[k] = std::size_t{1} << (f.scope.size() - 1 - (fi - f.scope.begin()));
    auto gi = std::lower_bound(g.scope.begin(), g.scope.end(), out.scope[k]);
    if (gi != g.scope.end() && *gi == out.scope[k])
      gbit[k] = std::size_t{1} << (g.scope.size() - 1 - (gi - g.scope.begin()));
  }
  out.vals.assign(std::size_t{1} << n, 0.0);
  double mx = 0.0;
  for (std::size_t idx = 0; idx < out.vals.size(); ++idx) {
    std::size_t fi = 0, gi = 0;
    for (int k = 0; k < n; ++k) {
      if ((idx >> (n - 1 - k)) & 1) {
        fi |= fbit[k];
        gi |= gbit[k];
      }
    }
    out.vals[idx] = f.vals[fi] * g.vals[gi];
    mx = std::max(mx, out.vals[idx]);
  }
  out.log_scale = f.log_scale + g.log_scale;
  if (mx > 0) {
    for (double& v : out.vals) v /= mx;
    out.log_scale += std::log(mx);
  }
  return out;
}

VeFactor ve_sum_out(const VeFactor& f, Node v) {
  VeFactor out;
  int pos = static_cast<int>(std::lower_bound(f.scope.begin(), f.scope.end(), v) - f.scope.begin());
  const int n = static_cast<int>(f.scope.size());
  out.scope = f.scope;
  out.scope.erase(out.scope.begin() + pos);
  out.log_scale = f.log_scale;
  out.vals.assign(std::size_t{1} << (n - 1), 0.0);
  const int low = n - 1 - pos;  // bit index of v
  for (std::size_t idx = 0; idx < f.vals.size(); ++idx) {
    std::size_t hi = (idx >> (low + 1)) << low;
    std::size_t lo = idx & ((std::size_t{1} << low) - 1);
    out.vals[hi | lo] += f.vals[idx];
  }
  return out;
}

// Unnormalized marginal over S (S may be empty).
VeFactor ve_run(const Graph& graph, const GMParams& params, const NodeSet& S) {
  std::vector<VeFactor> factors;
  for (Node v : graph.nodes()) factors.push_back({{v}, {1.0, std::exp(params.field(v))}});
  for (const Edge& e : graph.edges()) {
    double b = params.coupling(e.first, e.second);
    // exp(b) can overflow for huge b; scale so the largest entry is 1.
    double m = std::max(0.0, b);
    factors.push_back({{e.first, e.second}, {std::exp(-m), std::exp(-m), std::exp(-m), std::exp(b - m)}, m});
  }

  NodeSet elim = set_minus(graph.nodes(), S);
  while (!elim.empty()) {
    // Greedy min-fill (ties: smaller neighborhood, then id).
    Node best = -1;
    long best_fill = std::numeric_limits<long>::max();
    std::size_t best_nb = 0;
    for (Node v : elim) {
      NodeSet nb;
      for (const auto& f : factors)
        if (set_contains(f.scope, v)) nb = set_union(nb, f.scope);
      nb = set_minus(nb, {v});
      long fill = 0;
      for (std::size_t a = 0; a < nb.size(); ++a) {
        for (std::size_t b = a + 1; b < nb.size(); ++b) {
          bool linked = false;
          for (const auto& f : factors)
            if (set_contains(f.scope, nb[a]) && set_contains(f.scope, nb[b])) {
              linked = true;
              break;
            }
          if (!linked) ++fill;
        }
      }
      if (fill < best_fill || (fill == best_fill && nb.size() < best_nb)) {
        best = v;
        best_fill = fill;
        best_nb = nb.size();
      }
    }
    std::vector<VeFactor> keep, touch;
    for (auto& f : factors) (set_contains(f.scope, best) ? touch : keep).push_back(std::move(f));
    VeFactor prod = touch.front();
    for (std::size_t k = 1; k < touch.size(); ++k) prod = ve_product(prod, touch[k]);
    VeFactor summed = ve_sum_out(prod, best);
    keep.push_back(std::move(summed));  // scalar factors carry the component's mass
    factors = std::move(keep);
    elim = set_minus(elim, {best});
  }
  VeFactor prod{{}, {1.0}};
  for (const auto& f : factors) prod = ve_product(prod, f);
  return prod;
}

}  // namespace

FactorTable exact_marginal(const Graph& graph, const GMParams& params, const NodeSet& S_in) {
  NodeSet S = make_set(S_in);
  if (S.empty()) throw Error(ErrorKind::Validation, "exact_marginal: empty set");
  for (Node v : S)
    if (!graph.contains(v)) throw Error(ErrorKind::Validation, "exact_marginal: unknown node");
  VeFactor prod = ve_run(graph, params, S);
  double z = std::accumulate(prod.vals.begin(), prod.vals.end(), 0.0);
  for (double& v : prod.vals) v /= z;
  return FactorTable::normalized(S, std::move(prod.vals));
}

double log_partition(const Graph& graph, const GMParams& params) {
  validate_params(graph, params);
  VeFactor prod = ve_run(graph, params, {});
  return std::log(prod.vals.front()) + prod.log_scale;
}

// ---------------------------------------------------------------- elimination

std::pair<Graph, GMParams> eliminate_to_marginal_gm(const Graph& graph, const GMParams& params,
                                                    const NodeSet& S_in, int component_cap) {
  validate_params(graph, params);
  NodeSet S = make_set(S_in);
  if (!is_marginalizable(graph, S))
    throw Error(ErrorKind::Structure, "set " + format_set(S) + " is not marginalizable");

  Graph marg = graph.induced(S);
  GMParams out;
  for (Node v : S) out.gamma[v] = params.field(v);
  for (const Edge& e : marg.edges()) out.beta[e] = params.coupling(e.first, e.second);

  std::vector<Edge> added;
  for (const auto& comp : outside_components(graph, S)) {
    const NodeSet& C = comp.nodes;
    const NodeSet& B = comp.boundary;
    if (static_cast<int>(C.size()) > component_cap)
      throw Error(ErrorKind::Resource, "eliminated component of size " +
                                           std::to_string(C.size()) + " exceeds cap");
    const int nc = static_cast<int>(C.size());
    const int nb = static_cast<int>(B.size());
    // log f(x_B) = log sum_{x_C} exp(energy of C given x_B)
    std::vector<double> logf(std::size_t{1} << nb, 0.0);
    for (std::size_t bidx = 0; bidx < logf.size(); ++bidx) {
      std::vector<double> terms;
      terms.reserve(std::size_t{1} << nc);
      for (std::size_t cidx = 0; cidx < (std::size_t{1} << nc); ++cidx) {
        double e = 0.0;
        for (int a = 0; a < nc; ++a) {
          if (!((cidx >> a) & 1)) continue;
          Node va = C[a];
          e += params.field(va);
          for (int b = a + 1; b < nc; ++b)
            if (((cidx >> b) & 1) && graph.hasEdge(va, C[b])) e += params.coupling(va, C[b]);
          for (int k = 0; k < nb; ++k)
            if (((bidx >> (nb - 1 - k)) & 1) && graph.hasEdge(va, B[k]))
              e += params.coupling(va, B[k]);
        }
        terms.push_back(e);
      }
      double mx = *std::max_element(terms.begin(), terms.end());
      double s = 0.0;
      for (double t : terms) s += std::exp(t - mx);
      logf[bidx] = mx + std::log(s);
    }
    if (nb == 1) {
      out.gamma[B[0]] += logf[1] - logf[0];
    } else if (nb == 2) {
      Edge e = make_edge(B[0], B[1]);
      out.beta[e] += logf[3] - logf[2] - logf[1] + logf[0];
      out.gamma[B[0]] += logf[2] - logf[0];
      out.gamma[B[1]] += logf[1] - logf[0];
      if (!graph.hasEdge(B[0], B[1])) added.push_back(e);
    }
  }
  marg = marg.withEdges(added);
  return {marg, out};
}

// ---------------------------------------------------------------- sampling

SampleSet sample(const Graph& graph, const GMParams& params, std::size_t n, std::uint64_t seed,
                 int cap) {
  if (n == 0) throw Error(ErrorKind::Validation, "sample: n must be positive");
  FactorTable joint = exact_joint(graph, params, cap);
  std::vector<double> cdf(joint.size());
  std::partial_sum(joint.values().begin(), joint.values().end(), cdf.begin());
  cdf.back() = 1.0;

  SampleSet out;
  out.visible_scope = graph.visible();
  out.count = n;
  const int arity = joint.arity();
  std::vector<int> cols;
  for (Node v : out.visible_scope) cols.push_back(joint.position(v));
  out.data.resize(n * cols.size());

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t r = 0; r < n; ++r) {
    double u = unif(rng);
    std::size_t idx = std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    if (idx >= cdf.size()) idx = cdf.size() - 1;
    for (std::size_t c = 0; c < cols.size(); ++c)
      out.data[r * cols.size() + c] = static_cast<std::uint8_t>((idx >> (arity - 1 - cols[c])) & 1);
  }
  return out;
}

FactorTable empirical_marginal(const SampleSet& samples, const NodeSet& S_in) {
  if (samples.count == 0) throw Error(ErrorKind::Validation, "empirical_marginal: no samples");
  NodeSet S = make_set(S_in);
  if (S.empty()) throw Error(ErrorKind::Validation, "empirical_marginal: empty set");
  std::vector<std::size_t> cols;
  for (Node v : S) {
    auto it = std::find(samples.visible_scope.begin(), samples.visible_scope.end(), v);
    if (it == samples.visible_scope.end())
      throw Error(ErrorKind::Validation, "empirical_marginal: node " + std::to_string(v) +
                                             " not in sample scope");
    cols.push_back(it - samples.visible_scope.begin());
  }
  std::vector<double> counts(std::size_t{1} << S.size(), 0.0);
  const std::size_t width = samples.visible_scope.size();
  for (std::size_t r = 0; r < samples.count; ++r) {
    std::size_t idx = 0;
    for (std::size_t c : cols) idx = (idx << 1) | samples.data[r * width + c];
    counts[idx] += 1.0;
  }
  for (double& c : counts) c /= static_cast<double>(samples.count);
  return FactorTable::normalized(S, std::move(counts));
}

}  // namespace lseq
