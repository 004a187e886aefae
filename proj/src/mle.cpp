#include "lseq/mle.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <deque>
#include <limits>
#include <optional>

#include <Eigen/Dense>

namespace lseq {

MomentTargets moments_from_store(const MarginalStore& store, const Graph& graph, bool permissive,
                                 std::vector<Edge>* missing) {
  MomentTargets t;
  std::vector<Edge> absent;
  for (Node v : graph.nodes()) {
    if (!store.covers(NodeSet{v})) continue;
    t.node_moments[v] = store.query({v})[1];
  }
  for (const Edge& e : graph.edges()) {
    NodeSet pair{e.first, e.second};
    if (!store.covers(pair)) {
      absent.push_back(e);
      continue;
    }
    FactorTable tab = store.query(pair);
    t.edge_moments[e] = tab[3];
    if (!t.node_moments.count(e.first)) t.node_moments[e.first] = tab[2] + tab[3];
    if (!t.node_moments.count(e.second)) t.node_moments[e.second] = tab[1] + tab[3];
  }
  if (missing) *missing = absent;
  if (!permissive) {
    std::string names;
    for (const Edge& e : absent) names += " " + format_set({e.first, e.second});
    for (Node v : graph.nodes())
      if (!t.node_moments.count(v)) names += " {" + std::to_string(v) + "}";
    if (!names.empty()) throw Error(ErrorKind::Incomplete, "store lacks marginals for" + names);
  }
  return t;
}

namespace {

// Unnormalized state weights over an enumerable graph, transformed so that
// sums[M] is the total weight of states whose bits include M.
struct SupersetSums {
  std::vector<int> pos;
  std::vector<double> sums;
  double log_z = 0;

  std::size_t bit(Node v) const { return std::size_t{1} << pos[v]; }
  std::size_t mask(const Edge& e) const { return bit(e.first) | bit(e.second); }
  double prob(std::size_t m) const { return sums[m] / sums[0]; }
};

SupersetSums enumerate_states(const Graph& graph, const GMParams& params) {
  const NodeSet& nodes = graph.nodes();
  const int n = static_cast<int>(nodes.size());
  SupersetSums out;
  out.pos.assign(graph.idSpace(), -1);
  for (int k = 0; k < n; ++k) out.pos[nodes[k]] = k;
  std::vector<double> field(n);
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  for (int k = 0; k < n; ++k) field[k] = params.field(nodes[k]);
  for (const Edge& e : graph.edges()) {
    double b = params.coupling(e.first, e.second);
    adj[out.pos[e.first]].push_back({out.pos[e.second], b});
    adj[out.pos[e.second]].push_back({out.pos[e.first], b});
  }
  const std::size_t states = std::size_t{1} << n;
  std::vector<double>& w = out.sums;
  w.assign(states, 0.0);
  // Energies along a Gray code: each step flips one bit.
  std::size_t x = 0;
  double en = 0, top = 0;
  for (std::size_t step = 1; step < states; ++step) {
    int k = std::countr_zero(step);
    double delta = field[k];
    for (auto [o, b] : adj[k])
      if ((x >> o) & 1) delta += b;
    en += ((x >> k) & 1) ? -delta : delta;
    x ^= std::size_t{1} << k;
    w[x] = en;
    top = std::max(top, en);
  }
  for (double& v : w) v = std::exp(v - top);
  for (int k = 0; k < n; ++k) {
    const std::size_t b = std::size_t{1} << k;
    for (std::size_t idx = 0; idx < states; ++idx)
      if (!(idx & b)) w[idx] += w[idx | b];
  }
  out.log_z = std::log(w[0]) + top;
  return out;
}

MomentTargets enumerate_moments(const Graph& graph, const GMParams& params, double* log_z) {
  SupersetSums st = enumerate_states(graph, params);
  MomentTargets m;
  for (Node v : graph.nodes()) m.node_moments[v] = st.prob(st.bit(v));
  for (const Edge& e : graph.edges()) m.edge_moments[e] = st.prob(st.mask(e));
  if (log_z) *log_z = st.log_z;
  return m;
}

MomentTargets eliminate_moments(const Graph& graph, const GMParams& params) {
  MomentTargets m;
  for (const Edge& e : graph.edges()) {
    FactorTable t = exact_marginal(graph, params, {e.first, e.second});
    m.edge_moments[e] = t[3];
    m.node_moments.try_emplace(e.first, t[2] + t[3]);
    m.node_moments.try_emplace(e.second, t[1] + t[3]);
  }
  for (Node v : graph.nodes())
    if (!m.node_moments.count(v)) m.node_moments[v] = exact_marginal(graph, params, {v})[1];
  return m;
}

}  // namespace

MomentTargets model_moments(const Graph& graph, const GMParams& params, int enumeration_cap) {
  validate_params(graph, params);
  if (graph.nodeCount() <= std::min(enumeration_cap, 30)) return enumerate_moments(graph, params, nullptr);
  return eliminate_moments(graph, params);
}

double moment_objective(const Graph& graph, const GMParams& params, const MomentTargets& t) {
  double s = -log_partition(graph, params);
  for (const Edge& e : graph.edges()) s += params.coupling(e.first, e.second) * t.edge_moments.at(e);
  for (Node v : graph.nodes()) s += params.field(v) * t.node_moments.at(v);
  return s;
}

MomentTargets moment_gradient(const Graph& graph, const GMParams& params, const MomentTargets& t,
                              int enumeration_cap) {
  MomentTargets g = model_moments(graph, params, enumeration_cap);
  for (auto& [v, x] : g.node_moments) x = t.node_moments.at(v) - x;
  for (auto& [e, x] : g.edge_moments) x = t.edge_moments.at(e) - x;
  return g;
}

void check_interior(const Graph& graph, const MomentTargets& t, double eps) {
  auto fail = [](const std::string& what) {
    throw Error(ErrorKind::Boundary, "moment targets on the boundary: " + what);
  };
  for (Node v : graph.nodes()) {
    auto it = t.node_moments.find(v);
    if (it == t.node_moments.end()) throw Error(ErrorKind::Incomplete, "missing node moment " + std::to_string(v));
    if (!(it->second > eps && it->second < 1 - eps)) fail("node " + std::to_string(v));
  }
  for (const Edge& e : graph.edges()) {
    auto it = t.edge_moments.find(e);
    if (it == t.edge_moments.end())
      throw Error(ErrorKind::Incomplete, "missing edge moment " + format_set({e.first, e.second}));
    double mij = it->second, mi = t.node_moments.at(e.first), mj = t.node_moments.at(e.second);
    // All four cells of the pair table must be positive.
    if (!(mij > eps && mi - mij > eps && mj - mij > eps && 1 - mi - mj + mij > eps))
      fail("edge " + format_set({e.first, e.second}));
  }
}

namespace {

double inf_norm(const std::vector<double>& g) {
  double m = 0;
  for (double x : g) m = std::max(m, std::abs(x));
  return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Parameters, moments and features share one order: edges, then nodes.
std::vector<double> flatten(const GMParams& p) {
  std::vector<double> x;
  for (const auto& [e, b] : p.beta) x.push_back(b);
  for (const auto& [v, c] : p.gamma) x.push_back(c);
  return x;
}

std::vector<double> flatten(const MomentTargets& m) {
  std::vector<double> x;
  for (const auto& [e, b] : m.edge_moments) x.push_back(b);
  for (const auto& [v, c] : m.node_moments) x.push_back(c);
  return x;
}

GMParams unflatten(const GMParams& like, const std::vector<double>& x) {
  GMParams p = like;
  std::size_t k = 0;
  for (auto& [e, b] : p.beta) b = x[k++];
  for (auto& [v, c] : p.gamma) c = x[k++];
  return p;
}

struct Evaluation {
  double value = 0;
  std::vector<double> gradient;
  std::optional<SupersetSums> states;  // kept when the graph was enumerated
};

class Objective {
 public:
  Objective(const Graph& graph, const MomentTargets& targets, const GMParams& like, int cap)
      : graph_(graph), like_(like), target_(flatten(targets)), enumerate_(graph.nodeCount() <= std::min(cap, 30)) {}

  bool enumerates() const { return enumerate_; }

  Evaluation operator()(const std::vector<double>& x) const {
    GMParams p = unflatten(like_, x);
    Evaluation ev;
    std::vector<double> model;
    if (enumerate_) {
      ev.states = enumerate_states(graph_, p);
      for (std::size_t m : masks()) model.push_back(ev.states->prob(m));
      ev.value = -ev.states->log_z;
    } else {
      model = flatten(eliminate_moments(graph_, p));
      ev.value = -log_partition(graph_, p);
    }
    ev.value += dot(x, target_);
    ev.gradient.resize(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) ev.gradient[k] = target_[k] - model[k];
    return ev;
  }

  // Feature masks in parameter order (valid only when enumerating).
  std::vector<std::size_t> masks(const SupersetSums& st) const {
    std::vector<std::size_t> m;
    for (const auto& [e, b] : like_.beta) m.push_back(st.mask(e));
    for (const auto& [v, c] : like_.gamma) m.push_back(st.bit(v));
    return m;
  }

 private:
  std::vector<std::size_t> masks() const {
    SupersetSums st;
    st.pos.assign(graph_.idSpace(), -1);
    for (std::size_t k = 0; k < graph_.nodes().size(); ++k) st.pos[graph_.nodes()[k]] = static_cast<int>(k);
    return masks(st);
  }

  const Graph& graph_;
  GMParams like_;
  std::vector<double> target_;
  bool enumerate_;
};

// Newton direction from the feature covariance (the negative Hessian).
std::optional<std::vector<double>> newton_direction(const Objective& obj, const Evaluation& ev) {
  const SupersetSums& st = *ev.states;
  std::vector<std::size_t> m = obj.masks(st);
  const int d = static_cast<int>(m.size());
  Eigen::MatrixXd H(d, d);
  Eigen::VectorXd g(d);
  for (int a = 0; a < d; ++a) {
    g[a] = ev.gradient[a];
    for (int b = a; b < d; ++b) H(a, b) = H(b, a) = st.prob(m[a] | m[b]) - st.prob(m[a]) * st.prob(m[b]);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
  Eigen::VectorXd step = ldlt.solve(g);
  if (!step.allFinite()) return std::nullopt;
  return std::vector<double>(step.data(), step.data() + d);
}

// L-BFGS two-loop recursion for ascent on a concave objective.
std::vector<double> quasi_newton_direction(
    const std::deque<std::pair<std::vector<double>, std::vector<double>>>& memory, const std::vector<double>& g) {
  std::vector<double> d = g;
  std::vector<double> alpha(memory.size());
  for (std::size_t k = memory.size(); k-- > 0;) {
    const auto& [s, y] = memory[k];
    alpha[k] = dot(s, d) / dot(y, s);
    for (std::size_t c = 0; c < d.size(); ++c) d[c] -= alpha[k] * y[c];
  }
  if (!memory.empty()) {
    const auto& [s, y] = memory.back();
    double h = dot(s, y) / dot(y, y);
    for (double& v : d) v *= h;
  }
  for (std::size_t k = 0; k < memory.size(); ++k) {
    const auto& [s, y] = memory[k];
    double b = dot(y, d) / dot(y, s);
    for (std::size_t c = 0; c < d.size(); ++c) d[c] += s[c] * (alpha[k] - b);
  }
  return d;
}

}  // namespace

FitResult fit_from_moments(const Graph& graph, const MomentTargets& targets, const FitOptions& o) {
  check_interior(graph, targets, o.eps_mom);
  FitResult r;
  for (const Edge& e : graph.edges()) r.params.beta[e] = 0;
  for (Node v : graph.nodes()) r.params.gamma[v] = 0;
  const Objective obj(graph, targets, r.params, o.enumeration_cap);

  std::vector<double> x = flatten(r.params);
  Evaluation cur = obj(x);
  std::deque<std::pair<std::vector<double>, std::vector<double>>> memory;
  for (r.iterations = 0; r.iterations < o.max_iters; ++r.iterations) {
    if (inf_norm(cur.gradient) < o.tol) break;

    std::vector<double> d;
    if (obj.enumerates()) {
      if (auto nd = newton_direction(obj, cur)) d = std::move(*nd);
    } else {
      d = quasi_newton_direction(memory, cur.gradient);
    }
    double slope = d.empty() ? 0 : dot(cur.gradient, d);
    if (!(slope > 0)) {
      memory.clear();
      d = cur.gradient;
      slope = dot(d, d);
    }

    double t = 1.0;
    std::vector<double> xn(x.size());
    Evaluation next;
    bool accepted = false;
    for (int halvings = 0; halvings < 40; ++halvings, t /= 2) {
      for (std::size_t c = 0; c < x.size(); ++c) xn[c] = x[c] + t * d[c];
      next = obj(xn);
      if (!std::isfinite(next.value)) continue;
      // Near the optimum the objective change drops below rounding; a smaller
      // gradient then decides.
      bool flat = std::abs(next.value - cur.value) <= 1e-13 * std::max(1.0, std::abs(cur.value));
      if (next.value >= cur.value + o.armijo * t * slope ||
          (flat && inf_norm(next.gradient) < inf_norm(cur.gradient))) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (memory.empty()) break;  // no ascent possible at machine precision
      memory.clear();
      continue;
    }
    std::vector<double> s(x.size()), y(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) {
      s[c] = xn[c] - x[c];
      y[c] = cur.gradient[c] - next.gradient[c];
    }
    if (!obj.enumerates() && dot(s, y) > 1e-16 * std::sqrt(dot(s, s) * dot(y, y))) {
      memory.emplace_back(std::move(s), std::move(y));
      if (static_cast<int>(memory.size()) > o.history) memory.pop_front();
    }
    x = std::move(xn);
    cur = std::move(next);
  }
  r.params = unflatten(r.params, x);
  r.final_gradient_norm = inf_norm(cur.gradient);
  r.converged = r.final_gradient_norm < o.tol;
  return r;
}

double log_likelihood(const Graph& graph, const GMParams& params, const SampleSet& samples) {
  if (samples.visible_scope.empty()) throw Error(ErrorKind::Validation, "log_likelihood: no visible node");
  if (samples.count == 0) throw Error(ErrorKind::Validation, "log_likelihood: no samples");
  NodeSet scope = make_set(samples.visible_scope);
  if (scope.size() > 25) throw Error(ErrorKind::Resource, "log_likelihood: more than 25 visible nodes");
  FactorTable p = exact_marginal(graph, params, scope);
  const int n = static_cast<int>(scope.size());
  std::vector<int> col(n);
  for (int k = 0; k < n; ++k)
    col[k] = static_cast<int>(std::find(samples.visible_scope.begin(), samples.visible_scope.end(), scope[k]) -
                              samples.visible_scope.begin());
  double total = 0;
  for (std::size_t row = 0; row < samples.count; ++row) {
    std::size_t idx = 0;
    for (int k = 0; k < n; ++k) idx = (idx << 1) | samples.at(row, col[k]);
    total += p[idx] > 0 ? std::log(p[idx]) : -std::numeric_limits<double>::infinity();
  }
  return total / static_cast<double>(samples.count);
}

}  // namespace lseq
