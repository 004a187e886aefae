#include "lseq/scheduler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>
#include <sstream>

namespace lseq {

Mask to_mask(const NodeSet& s) {
  Mask m = 0;
  for (Node v : s) {
    if (v < 0 || v >= 64) throw Error(ErrorKind::Resource, "scheduler supports node ids below 64");
    m |= Mask{1} << v;
  }
  return m;
}

NodeSet from_mask(Mask m) {
  NodeSet out;
  while (m) {
    int v = std::countr_zero(m);
    out.push_back(v);
    m &= m - 1;
  }
  return out;
}

namespace {

Mask bit(Node v) { return Mask{1} << v; }
int popcount(Mask m) { return std::popcount(m); }

}  // namespace

const char* to_string(StepKind kind) {
  switch (kind) {
    case StepKind::TensorDecomp: return "TensorDecomp";
    case StepKind::DisjointView: return "DisjointView";
    case StepKind::LinearView: return "LinearView";
    case StepKind::ExclusiveViewMerge: return "ExclusiveViewMerge";
    case StepKind::Scripted: return "Scripted";
  }
  return "?";
}

StepKind step_kind_from_string(const std::string& s) {
  if (s == "TensorDecomp") return StepKind::TensorDecomp;
  if (s == "DisjointView") return StepKind::DisjointView;
  if (s == "LinearView") return StepKind::LinearView;
  if (s == "ExclusiveViewMerge") return StepKind::ExclusiveViewMerge;
  if (s == "Scripted") return StepKind::Scripted;
  throw Error(ErrorKind::Validation, "unknown step kind '" + s + "'");
}

std::string RecoveryStep::signature() const {
  std::ostringstream os;
  os << to_string(kind) << (family ? "/F" : "") << " c=" << center << " a=" << anchor
     << " C=" << format_set(conditioned_on) << " v=" << format_set(make_set(views))
     << " S=" << format_set(block) << " T=" << format_set(other) << " p=" << parent
     << " out=" << format_set(output);
  for (auto [i, v] : view_map) os << " " << i << ":" << v;
  return os.str();
}

double trimmed_subset_bound(int n, int K, int L) {
  double total = 0, c = 1;
  for (int s = 0; s <= std::min(n, K + L); ++s) {
    total += c;
    c = c * (n - s) / (s + 1);
  }
  return total;
}

// ---------------------------------------------------------------- families

bool Family::covers(Mask X) const {
  if (X & ~(R | P)) return false;
  return popcount(X & ~R) <= k;
}

bool Family::dominatedBy(const Family& o) const {
  if ((R | P) & ~(o.R | o.P)) return false;
  return popcount(R & ~o.R) + std::min(k, popcount(P & ~o.R)) <= o.k;
}

namespace {

Family normalize_family(Family f) {
  f.P &= ~f.R;
  f.k = std::min(f.k, popcount(f.P));
  if (f.k < 0) f.k = 0;
  return f;
}

}  // namespace

MarginalStore MarginalStore::fromProvider(const NodeSet& pool, int budget, Provider provider) {
  MarginalStore s;
  Family f;
  f.R = 0;
  f.P = to_mask(pool);
  f.k = budget;
  f.recipe = Family::Recipe::Base;
  s.provider_ = std::move(provider);
  s.add(normalize_family(f));
  return s;
}

MarginalStore MarginalStore::fromTables(const std::vector<FactorTable>& tables) {
  MarginalStore s;
  s.tables_ = true;
  for (const auto& t : tables) {
    Family f;
    f.R = to_mask(t.scopeSet());
    f.recipe = Family::Recipe::Explicit;
    f.table = std::make_shared<const FactorTable>(t.canonical());
    s.add(f);
  }
  return s;
}

MarginalStore MarginalStore::fromSubsets(const std::vector<NodeSet>& subsets) {
  MarginalStore s;
  for (const auto& x : subsets) {
    Family f;
    f.R = to_mask(x);
    f.recipe = Family::Recipe::Explicit;
    s.add(f);
  }
  return s;
}

int MarginalStore::add(Family f) {
  f.id = static_cast<int>(families_.size());
  families_.push_back(std::move(f));
  cache_.resize(families_.size());
  return families_.back().id;
}

void MarginalStore::popFamily() {
  if (families_.empty()) return;
  families_.pop_back();
  cache_.resize(families_.size());
}

bool MarginalStore::covers(Mask X) const { return coveringFamily(X) >= 0; }

int MarginalStore::coveringFamily(Mask X) const {
  for (const auto& f : families_)
    if (f.covers(X)) return f.id;
  return -1;
}

int MarginalStore::roundRecovered(const NodeSet& X) const {
  Mask m = to_mask(X);
  int best = -1;
  for (const auto& f : families_)
    if (f.covers(m) && (best < 0 || f.round < best)) best = f.round;
  return best;
}

void MarginalStore::clearCache() const {
  for (auto& c : cache_) c.clear();
}

FactorTable MarginalStore::query(const NodeSet& X) const {
  Mask m = to_mask(X);
  int f = coveringFamily(m);
  if (f < 0) throw Error(ErrorKind::Incomplete, "no stored marginal covers " + format_set(X));
  return queryFamily(f, X);
}

FactorTable MarginalStore::queryFamily(int fi, const NodeSet& X) const {
  Mask m = to_mask(X);
  if (m == 0) throw Error(ErrorKind::Validation, "query of the empty set");
  if (!families_.at(fi).covers(m))
    throw Error(ErrorKind::Incomplete, "family does not cover " + format_set(X));
  auto& cache = cache_[fi];
  auto it = cache.find(m);
  if (it != cache.end()) return *it->second;
  FactorTable t = compute(fi, m);
  cache.emplace(m, std::make_shared<const FactorTable>(t));
  return t;
}

namespace {

// Solves per assignment of C. `fn` maps the conditioned inputs to a table over
// `rest`; light slices get a uniform table since their weight is negligible.
template <class Fn>
FactorTable solve_slices(const NodeSet& C, const std::vector<FactorTable>& inputs,
                         const NodeSet& rest, Fn fn, const Tolerances& tol, double skip_mass) {
  if (C.empty()) return fn(inputs).canonical();
  FactorTable pc = marginalize_table(inputs.front(), C);
  const int nc = static_cast<int>(C.size());
  std::vector<FactorTable> slices;
  for (std::size_t c = 0; c < pc.size(); ++c) {
    if (pc[c] <= skip_mass) {
      std::vector<double> u(std::size_t{1} << rest.size(), 1.0 / (std::size_t{1} << rest.size()));
      slices.push_back(FactorTable::normalized(rest, u));
      continue;
    }
    std::map<Node, int> a;
    for (int k = 0; k < nc; ++k) a[C[k]] = (c >> (nc - 1 - k)) & 1;
    std::vector<FactorTable> conds;
    for (const auto& in : inputs) conds.push_back(condition_table(in, a, tol.eps_zero));
    slices.push_back(fn(conds).canonical());
  }
  return join_with_marginal(slices, pc, tol);
}

// Merge inputs that disagree numerically make the step invalid; only a label
// conflict found by the consistency check aborts a run.
template <class Fn>
FactorTable solve_sliced(const NodeSet& C, const std::vector<FactorTable>& inputs,
                         const NodeSet& rest, Fn fn, const Tolerances& tol, double skip_mass) {
  try {
    return solve_slices(C, inputs, rest, fn, tol, skip_mass);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Inconsistency) throw;
    throw Error(ErrorKind::InvalidResult, e.what());
  }
}

}  // namespace

FactorTable MarginalStore::compute(int fi, Mask X) const {
  const Family& f = families_[fi];
  switch (f.recipe) {
    case Family::Recipe::Base:
      if (!provider_) throw Error(ErrorKind::Incomplete, "structure-only store holds no tables");
      return provider_(from_mask(X)).canonical();
    case Family::Recipe::Explicit:
      if (!f.table) throw Error(ErrorKind::Incomplete, "structure-only store holds no tables");
      return marginalize_table(*f.table, from_mask(X));
    case Family::Recipe::Linear: {
      Mask core = f.C | bit(f.pivot) | bit(f.anchor);
      Mask Y = X & ~core;
      if (!Y) return marginalize_table(query(from_mask(core)), from_mask(X));
      FactorTable t_pair = query(from_mask(core));
      FactorTable t_block = queryFamily(f.parent, from_mask(Y | f.C | bit(f.anchor)));
      Node i = f.pivot, j = f.anchor;
      const Tolerances& tol = tol_;
      FactorTable full = solve_sliced(
          from_mask(f.C), {t_block, t_pair}, from_mask(Y | bit(i) | bit(j)),
          [&](const std::vector<FactorTable>& c) { return linear_view(c[1], c[0], i, j, tol); },
          tol_, skip_mass_);
      return marginalize_table(full, from_mask(X));
    }
    case Family::Recipe::Blanket: {
      Mask core = f.C | bit(f.pivot);
      Mask Y = X & ~core;
      if (!Y) return marginalize_table(query(from_mask(core)), from_mask(X));
      FactorTable t_pivot = query(from_mask(core));
      FactorTable t_block = queryFamily(f.parent, from_mask(Y | f.C));
      const Tolerances& tol = tol_;
      FactorTable full = solve_sliced(
          from_mask(f.C), {t_block, t_pivot}, from_mask(Y | bit(f.pivot)),
          [&](const std::vector<FactorTable>& c) { return disjoint_view(c[0], c[1], tol); }, tol_,
          skip_mass_);
      return marginalize_table(full, from_mask(X));
    }
  }
  throw Error(ErrorKind::Validation, "unknown family recipe");
}

// ---------------------------------------------------------------- label rules

std::optional<LabelRule> LabelRuleSet::find(const Graph& graph, Node target, const NodeSet& C,
                                            const std::vector<Node>& views) const {
  NodeSet vs = make_set(views);
  switch (mode) {
    case Mode::Explicit:
      for (const auto& r : rules)
        if (r.target == target && make_set(r.condition_set) == C && set_contains(vs, r.reference))
          return r;
      return std::nullopt;
    case Mode::Attractive: {
      std::vector<int> label = component_labels(graph, C);
      for (Node v : vs)
        if (label[v] >= 0 && label[v] == label[target]) return LabelRule{target, v, 1, C};
      return std::nullopt;
    }
    case Mode::Forced: {
      // The reference must hang off the target by an edge that is a bridge in G minus C.
      NodeSet removed = set_union(C, {target});
      std::vector<int> label = component_labels(graph, removed);
      for (Node v : vs) {
        if (!graph.hasEdge(target, v) || set_contains(C, v)) continue;
        bool alone = true;
        for (Node u : graph.neighbors(target))
          if (u != v && !set_contains(C, u) && label[u] == label[v]) alone = false;
        if (alone) return LabelRule{target, v, 1, C};
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- enumeration

namespace {

struct Structure {
  const Graph& g;
  std::vector<Mask> adj;
  Mask all = 0;
  explicit Structure(const Graph& graph) : g(graph), adj(64, 0) {
    if (graph.idSpace() > 64) throw Error(ErrorKind::Resource, "scheduler supports at most 64 nodes");
    for (Node v : graph.nodes()) {
      all |= bit(v);
      for (Node u : graph.neighbors(v)) adj[v] |= bit(u);
    }
  }
  // Component label per node of G minus `removed`.
  std::vector<int> labels(Mask removed) const { return component_labels(g, from_mask(removed)); }
};

double binom(int n, int k) {
  if (k < 0 || k > n) return 0;
  double c = 1;
  for (int s = 0; s < k; ++s) c = c * (n - s) / (s + 1);
  return c;
}

CondMode resolve_mode(const Graph& g, const SchedulerConfig& cfg) {
  if (cfg.cond_mode != CondMode::Auto) return cfg.cond_mode;
  double total = 0;
  for (int s = 0; s <= cfg.K; ++s) total += binom(g.nodeCount() - 1, s);
  total *= static_cast<double>(g.latent().size());
  return total <= static_cast<double>(cfg.exhaustive_limit) ? CondMode::Exhaustive
                                                            : CondMode::Neighborhood;
}

void combinations(const NodeSet& pool, int r, std::size_t start, NodeSet& cur,
                  std::vector<NodeSet>& out) {
  if (static_cast<int>(cur.size()) == r) {
    out.push_back(cur);
    return;
  }
  for (std::size_t k = start; k < pool.size(); ++k) {
    cur.push_back(pool[k]);
    combinations(pool, r, k + 1, cur, out);
    cur.pop_back();
  }
}

std::vector<NodeSet> conditioning_sets(const Structure& st, Node i, int K, CondMode mode) {
  std::vector<NodeSet> out;
  if (mode == CondMode::Exhaustive) {
    NodeSet others = set_minus(st.g.nodes(), {i});
    for (int r = 0; r <= K; ++r) {
      NodeSet cur;
      combinations(others, r, 0, cur, out);
    }
    return out;
  }
  // Neighborhood isolation: C is the joint neighborhood of 1..3 neighbors of i.
  std::set<Mask> seen;
  const NodeSet& nb = st.g.neighbors(i);
  for (int r = 1; r <= 3; ++r) {
    std::vector<NodeSet> picks;
    NodeSet cur;
    combinations(nb, r, 0, cur, picks);
    for (const auto& I : picks) {
      Mask C = 0, Im = to_mask(I);
      for (Node v : I) C |= st.adj[v];
      C &= ~bit(i);
      if (popcount(C) > K || (C & Im)) continue;
      if (seen.insert(C).second) out.push_back(from_mask(C));
    }
  }
  return out;
}

bool views_separated(const std::vector<int>& label, const std::vector<Node>& views) {
  for (std::size_t a = 0; a < views.size(); ++a) {
    if (label[views[a]] < 0) return false;
    for (std::size_t b = a + 1; b < views.size(); ++b)
      if (label[views[a]] == label[views[b]]) return false;
  }
  return true;
}

void sort_steps(std::vector<RecoveryStep>& steps) {
  std::stable_sort(steps.begin(), steps.end(), [](const RecoveryStep& a, const RecoveryStep& b) {
    if (a.output.size() != b.output.size()) return a.output.size() < b.output.size();
    if (a.output != b.output) return a.output < b.output;
    return a.signature() < b.signature();
  });
}

Family family_of(const RecoveryStep& s) {
  Family f;
  f.R = to_mask(s.output);
  f.P = to_mask(s.pool);
  f.k = s.budget;
  return normalize_family(f);
}

void check_budget(std::size_t n, const SchedulerConfig& cfg, int round) {
  if (static_cast<long>(n) > cfg.candidate_budget)
    throw Error(ErrorKind::Budget, "round " + std::to_string(round) + " exceeds the candidate budget of " +
                                       std::to_string(cfg.candidate_budget));
}

}  // namespace

std::vector<RecoveryStep> enumerate_candidates_A(const Graph& graph, const MarginalStore& store,
                                                 const LabelRuleSet& rules,
                                                 const SchedulerConfig& cfg, int round) {
  Structure st(graph);
  CondMode mode = resolve_mode(graph, cfg);
  const auto& fams = store.families();
  std::vector<RecoveryStep> out;
  std::set<Mask> seen;
  for (Node i : graph.latent()) {
    for (const NodeSet& C : conditioning_sets(st, i, cfg.K, mode)) {
      Mask Cm = to_mask(C);
      if (!store.covers(Cm) && Cm) continue;
      std::vector<int> label = st.labels(Cm | bit(i));
      std::vector<int> comps;
      for (Node u : graph.neighbors(i))
        if (!(Cm & bit(u))) comps.push_back(label[u]);
      std::sort(comps.begin(), comps.end());
      comps.erase(std::unique(comps.begin(), comps.end()), comps.end());
      if (comps.size() < 3) continue;
      std::vector<Mask> comp_nodes(comps.size(), 0);
      for (Node v : graph.nodes())
        for (std::size_t c = 0; c < comps.size(); ++c)
          if (label[v] == comps[c]) comp_nodes[c] |= bit(v);
      std::vector<int> dist = bfs_distance(graph, i, C);
      std::vector<std::vector<int>> minus_one;  // labels with one node of C released
      bool minus_ready = false;

      for (const Family& F : fams) {
        if (!F.covers(Cm)) continue;
        // Nearest candidates per component; distant views make the decomposition ill-conditioned.
        using Key = std::tuple<int, int, int>;
        std::vector<std::vector<std::pair<Key, Node>>> cand;
        for (Mask cn : comp_nodes) {
          std::vector<std::pair<Key, Node>> list;
          for (Node v : from_mask(cn & (F.R | F.P)))
            if (F.covers(Cm | bit(v))) list.push_back({Key{dist[v], (F.R & bit(v)) ? 0 : 1, v}, v});
          std::sort(list.begin(), list.end());
          // Keep the three nearest overall and the three nearest free of budget.
          std::vector<std::pair<Key, Node>> kept;
          int free_kept = 0;
          for (std::size_t q = 0; q < list.size(); ++q) {
            bool is_free = std::get<1>(list[q].first) == 0;
            if (q < 3 || (is_free && free_kept < 3)) kept.push_back(list[q]);
            if (is_free) ++free_kept;
          }
          list = std::move(kept);
          if (!list.empty()) cand.push_back(std::move(list));
        }
        if (cand.size() < 3) continue;
        for (std::size_t a = 0; a < cand.size(); ++a)
          for (std::size_t b = a + 1; b < cand.size(); ++b)
            for (std::size_t d = b + 1; d < cand.size(); ++d) {
              if (!minus_ready) {
                for (Node c : C) minus_one.push_back(st.labels((Cm & ~bit(c)) | bit(i)));
                minus_ready = true;
              }
              // Minimality depends only on which components hold the views.
              std::vector<Node> probe = {cand[a][0].second, cand[b][0].second, cand[d][0].second};
              bool minimal = true;
              for (const auto& lab : minus_one)
                if (views_separated(lab, probe)) minimal = false;
              if (!minimal) continue;
              std::vector<std::tuple<int, int, std::vector<Node>>> options;
              for (const auto& [ka, va] : cand[a])
                for (const auto& [kb, vb] : cand[b])
                  for (const auto& [kd, vd] : cand[d]) {
                    if (!F.covers(Cm | bit(va) | bit(vb) | bit(vd))) continue;
                    std::vector<Node> vs = {va, vb, vd};
                    std::sort(vs.begin(), vs.end());
                    options.push_back({std::get<0>(ka) + std::get<0>(kb) + std::get<0>(kd),
                                       std::get<1>(ka) + std::get<1>(kb) + std::get<1>(kd), vs});
                  }
              std::sort(options.begin(), options.end());
              std::vector<Node> views;
              Mask X = 0;
              std::optional<LabelRule> rule;
              for (const auto& opt : options) {
                const auto& vs = std::get<2>(opt);
                Mask x = Cm | bit(vs[0]) | bit(vs[1]) | bit(vs[2]) | bit(i);
                if (seen.count(x) || store.covers(x)) continue;
                rule = rules.find(graph, i, C, vs);
                if (!rule) continue;
                views = vs;
                X = x;
                break;
              }
              if (views.empty()) continue;
              Mask vm = X & ~Cm & ~bit(i);
              seen.insert(X);
              RecoveryStep s;
              s.kind = StepKind::TensorDecomp;
              s.conditioned_on = C;
              s.center = i;
              s.views = views;
              s.inputs = {from_mask(Cm | vm)};
              s.output = from_mask(X);
              s.rules = {*rule};
              s.round = round;
              out.push_back(std::move(s));
              check_budget(out.size(), cfg, round);
            }
      }
    }
  }
  sort_steps(out);
  return out;
}

std::vector<RecoveryStep> enumerate_candidates_B(const Graph& graph, const MarginalStore& store,
                                                 const SchedulerConfig& cfg, int round) {
  Structure st(graph);
  const auto& fams = store.families();
  std::vector<RecoveryStep> out;
  std::vector<Family> proposed;

  auto propose = [&](RecoveryStep s) {
    Family f = family_of(s);
    for (const Family& o : fams)
      if (f.dominatedBy(o)) return;
    out.push_back(std::move(s));
    proposed.push_back(f);
    check_budget(out.size(), cfg, round);
  };

  for (Node i : graph.latent()) {
    // LinearView families: pivot i, anchor j, C within the other neighbors of j.
    for (Node j : graph.neighbors(i)) {
      NodeSet nbj = set_minus(graph.neighbors(j), {i});
      for (int r = 0; r <= std::min<int>(cfg.K, nbj.size()); ++r) {
        std::vector<NodeSet> Cs;
        NodeSet cur;
        combinations(nbj, r, 0, cur, Cs);
        for (const NodeSet& C : Cs) {
          Mask Cm = to_mask(C);
          Mask need = Cm | bit(j);
          Mask core = need | bit(i);
          if (!store.covers(core)) continue;
          std::vector<int> label = st.labels(Cm | bit(i));
          Mask sep = 0;
          for (Node v : graph.nodes())
            if (label[v] >= 0 && label[v] != label[j]) sep |= bit(v);
          for (const Family& F : fams) {
            if (!F.covers(need)) continue;
            RecoveryStep s;
            s.kind = StepKind::LinearView;
            s.family = true;
            s.parent = F.id;
            s.center = i;
            s.anchor = j;
            s.conditioned_on = C;
            Mask R2 = (F.R & sep) | core;
            Mask P2 = (F.P & sep) & ~R2;
            s.output = from_mask(R2);
            s.pool = from_mask(P2);
            s.budget = F.k - popcount(need & ~F.R);
            s.block = from_mask(R2 & sep);
            s.inputs = {from_mask(core), from_mask(need | (F.R & sep))};
            s.round = round;
            propose(std::move(s));
          }
        }
      }
    }
    // DisjointView families: the neighborhood of i separates it from everything else.
    Mask B = st.adj[i];
    if (popcount(B) <= cfg.K && store.covers(B | bit(i))) {
      for (const Family& F : fams) {
        if (!F.covers(B) || ((F.R | F.P) & bit(i))) continue;
        RecoveryStep s;
        s.kind = StepKind::DisjointView;
        s.family = true;
        s.parent = F.id;
        s.center = i;
        s.conditioned_on = from_mask(B);
        s.other = {i};
        Mask R2 = F.R | B | bit(i);
        s.output = from_mask(R2);
        s.pool = from_mask(F.P & ~B & ~bit(i));
        s.budget = F.k - popcount(B & ~F.R);
        s.block = from_mask(F.R & ~B);
        s.inputs = {from_mask(B | bit(i)), from_mask(F.R | B)};
        s.round = round;
        propose(std::move(s));
      }
    }
  }

  // Exclusive views for small latent cores, without conditioning.
  NodeSet lat = graph.latent();
  for (int r = 2; r <= cfg.exclusive_core; ++r) {
    std::vector<NodeSet> cores;
    NodeSet cur;
    combinations(lat, r, 0, cur, cores);
    for (const NodeSet& S : cores) {
      NodeSet cands;
      for (Node v : graph.visible())
        for (Node i : S)
          if (store.covers(Mask(bit(i) | bit(v)))) {
            cands.push_back(v);
            break;
          }
      auto inst = exclusive_view_check(graph, S, cands);
      if (!inst) continue;
      Mask E = 0;
      bool ok = true;
      for (auto [i, v] : inst->view_map) {
        E |= bit(v);
        if (!store.covers(Mask(bit(i) | bit(v)))) ok = false;
      }
      Mask X = E | to_mask(S);
      if (!ok || !store.covers(E) || store.covers(X)) continue;
      RecoveryStep s;
      s.kind = StepKind::ExclusiveViewMerge;
      s.view_map = inst->view_map;
      s.output = from_mask(X);
      s.inputs = {from_mask(E)};
      for (auto [i, v] : inst->view_map) s.inputs.push_back(make_set({i, v}));
      s.round = round;
      Family f;
      f.R = X;
      bool dominated = false;
      for (const Family& o : fams)
        if (f.dominatedBy(o)) dominated = true;
      if (dominated) continue;
      out.push_back(std::move(s));
      proposed.push_back(f);
    }
  }

  // Drop proposals dominated by another proposal (ties keep the earlier one).
  std::vector<RecoveryStep> kept;
  for (std::size_t a = 0; a < out.size(); ++a) {
    bool drop = false;
    for (std::size_t b = 0; b < out.size() && !drop; ++b) {
      if (a == b) continue;
      if (proposed[a].dominatedBy(proposed[b]) &&
          !(proposed[b].dominatedBy(proposed[a]) && b > a))
        drop = true;
    }
    if (!drop) kept.push_back(out[a]);
  }
  sort_steps(kept);
  return kept;
}

// ---------------------------------------------------------------- execution

namespace {

void require_covered(const MarginalStore& store, const NodeSet& X, const RecoveryStep& s) {
  if (!store.covers(X))
    throw Error(ErrorKind::Incomplete, "input " + format_set(X) + " of " + s.signature() +
                                           " is not recoverable from the store");
}

// Label conflicts: every latent node of the new key must agree with any pair
// marginal an earlier family already provides.
void check_consistency(const Graph& graph, const MarginalStore& store, int fid, Mask key) {
  const Tolerances& tol = store.tolerances();
  if (tol.eps_store >= 1.0) return;
  for (Node u : from_mask(key)) {
    if (!graph.isLatent(u)) continue;
    for (Node v : from_mask(key)) {
      if (v == u) continue;
      Mask pair = bit(u) | bit(v);
      int earlier = -1;
      for (const auto& f : store.families()) {
        if (f.id >= fid) break;
        if (f.covers(pair)) {
          earlier = f.id;
          break;
        }
      }
      if (earlier < 0) continue;
      FactorTable a = store.queryFamily(fid, {std::min(u, v), std::max(u, v)});
      FactorTable b = store.queryFamily(earlier, {std::min(u, v), std::max(u, v)});
      double d = table_distance(a, b);
      if (d > tol.eps_store) {
        std::string pair = format_set({std::min(u, v), std::max(u, v)});
        // A flipped label is a conflict; plain numerical drift only rejects this step.
        if (table_distance(a.flipped(u), b) < d)
          throw Error(ErrorKind::Inconsistency,
                      "label of node " + std::to_string(u) + " conflicts on pair " + pair +
                          " (distance " + format_real(d) + ")");
        throw Error(ErrorKind::InvalidResult,
                    "pair " + pair + " drifts from an earlier marginal by " + format_real(d));
      }
      break;
    }
  }
}

int add_checked(const Graph& graph, MarginalStore& store, Family f) {
  int fid = store.add(f);
  if (!store.hasTables()) return fid;
  try {
    store.queryFamily(fid, from_mask(store.families()[fid].R));
  } catch (...) {
    store.popFamily();
    throw;
  }
  try {
    check_consistency(graph, store, fid, store.families()[fid].R);
  } catch (...) {
    store.popFamily();
    throw;
  }
  return fid;
}

FactorTable run_tensor_step(const Graph& graph, const MarginalStore& store, const RecoveryStep& s,
                            const LabelRule& rule) {
  const Tolerances& tol = store.tolerances();
  NodeSet views = make_set(s.views);
  NodeSet C = s.conditioned_on;
  FactorTable input = store.query(set_union(C, views));
  std::vector<FactorTable> slices;
  std::vector<int> solved;
  double fallback_used = 0.0;
  FactorTable pc;
  if (C.empty()) {
    slices.push_back(tensor_decomp(input, s.center, tol));
    solved.push_back(0);
  } else {
    pc = marginalize_table(input, C);
    const int nc = static_cast<int>(C.size());
    for (std::size_t c = 0; c < pc.size(); ++c) {
      if (pc[c] <= store.skipMass()) {
        slices.push_back(FactorTable::normalized(set_union(views, {s.center}),
                                                 std::vector<double>(16, 1.0 / 16)));
        continue;
      }
      std::map<Node, int> a;
      for (int k = 0; k < nc; ++k) a[C[k]] = (c >> (nc - 1 - k)) & 1;
      FactorTable cond = condition_table(input, a, tol.eps_zero);
      try {
        slices.push_back(tensor_decomp(cond, s.center, tol));
        solved.push_back(static_cast<int>(c));
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::Validation || fallback_used + pc[c] > store.fallbackMass()) throw;
        // Light slice: keep the views exact and leave the hidden node uninformative.
        fallback_used += pc[c];
        FactorTable cv = cond.reordered(views);
        std::vector<double> vals(16);
        for (std::size_t v = 0; v < 8; ++v) vals[v] = vals[8 + v] = 0.5 * cv[v];
        std::vector<Node> scope{s.center};
        scope.insert(scope.end(), views.begin(), views.end());
        slices.push_back(FactorTable::normalized(scope, vals).canonical());
      }
    }
  }
  std::vector<FactorTable> to_fix;
  for (int c : solved) to_fix.push_back(slices[c]);
  std::vector<FactorTable> fixed = fix_labels(to_fix, rule, tol);
  for (std::size_t k = 0; k < solved.size(); ++k) slices[solved[k]] = fixed[k];
  FactorTable joint = C.empty() ? slices.front() : join_with_marginal(slices, pc, tol);
  (void)graph;
  return canonical_label_by_degeneracy(joint, s.center, tol.eps_deg);
}

void check_separation(const Graph& graph, const RecoveryStep& s) {
  const NodeSet& C = s.conditioned_on;
  switch (s.kind) {
    case StepKind::TensorDecomp: {
      if (s.views.size() != 3) throw Error(ErrorKind::Validation, "TensorDecomp needs three views");
      Graph h = remove_nodes(graph, C);
      if (!is_bottleneck(h, s.center, {s.views[0], s.views[1], s.views[2]}))
        throw Error(ErrorKind::Structure, "node " + std::to_string(s.center) +
                                              " is not a bottleneck for the given views");
      break;
    }
    case StepKind::LinearView:
      if (!separated(graph, set_union(C, {s.center}), {s.block, {s.anchor}}))
        throw Error(ErrorKind::Structure, "LinearView block is not separated from the anchor");
      break;
    case StepKind::DisjointView:
      if (!separated(graph, C, {s.block, s.other}))
        throw Error(ErrorKind::Structure, "DisjointView blocks are not separated");
      break;
    case StepKind::ExclusiveViewMerge: {
      NodeSet core;
      for (auto [i, v] : s.view_map) core.push_back(i);
      core = make_set(core);
      for (auto [i, v] : s.view_map)
        if (!separated(graph, set_union(C, {i}), {{v}, set_minus(core, {i})}))
          throw Error(ErrorKind::Structure, "view " + std::to_string(v) + " is not exclusive");
      break;
    }
    case StepKind::Scripted:
      throw Error(ErrorKind::Validation, "Scripted steps carry no solver");
  }
}

}  // namespace

int execute_step(const Graph& graph, MarginalStore& store, RecoveryStep& s,
                 const LabelRuleSet& rules, int step_index) {
  const Tolerances& tol = store.tolerances();
  if (s.family) {
    if (s.parent < 0 || s.parent >= static_cast<int>(store.families().size()))
      throw Error(ErrorKind::Validation, "family step references an unknown parent");
    const Family& F = store.families()[s.parent];
    Family f;
    f.parent = s.parent;
    f.pivot = s.center;
    f.round = s.round;
    f.step = step_index;
    f.C = to_mask(s.conditioned_on);
    if (s.kind == StepKind::LinearView) {
      Mask need = f.C | bit(s.anchor);
      Mask core = need | bit(s.center);
      if (!graph.hasEdge(s.center, s.anchor))
        throw Error(ErrorKind::Structure, "LinearView family needs an edge pivot-anchor");
      require_covered(store, from_mask(core), s);
      if (!F.covers(need)) throw Error(ErrorKind::Incomplete, "parent does not cover the anchor set");
      std::vector<int> label = component_labels(graph, from_mask(f.C | bit(s.center)));
      Mask sep = 0;
      for (Node v : graph.nodes())
        if (label[v] >= 0 && label[v] != label[s.anchor]) sep |= bit(v);
      f.recipe = Family::Recipe::Linear;
      f.anchor = s.anchor;
      f.R = (F.R & sep) | core;
      f.P = (F.P & sep) & ~f.R;
      f.k = F.k - popcount(need & ~F.R);
    } else if (s.kind == StepKind::DisjointView) {
      Mask B = f.C;
      if (B != to_mask(graph.neighbors(s.center)))
        throw Error(ErrorKind::Structure, "DisjointView family must condition on the full neighborhood");
      require_covered(store, from_mask(B | bit(s.center)), s);
      if (!F.covers(B) || ((F.R | F.P) & bit(s.center)))
        throw Error(ErrorKind::Incomplete, "parent family cannot serve this DisjointView");
      f.recipe = Family::Recipe::Blanket;
      f.R = F.R | B | bit(s.center);
      f.P = F.P & ~B & ~bit(s.center);
      f.k = F.k - popcount(B & ~F.R);
    } else {
      throw Error(ErrorKind::Validation, "only LinearView and DisjointView come in family form");
    }
    f = normalize_family(f);
    s.output = from_mask(f.R);
    s.pool = from_mask(f.P);
    s.budget = f.k;
    return add_checked(graph, store, f);
  }

  check_separation(graph, s);
  for (const auto& in : s.inputs) require_covered(store, in, s);
  Family f;
  f.recipe = Family::Recipe::Explicit;
  f.round = s.round;
  f.step = step_index;
  const NodeSet& C = s.conditioned_on;

  if (s.kind == StepKind::TensorDecomp) {
    NodeSet views = make_set(s.views);
    require_covered(store, set_union(C, views), s);
    LabelRule rule;
    if (!s.rules.empty()) {
      rule = s.rules.front();
    } else {
      auto r = rules.find(graph, s.center, C, views);
      if (!r) throw Error(ErrorKind::Validation, "no label rule for node " + std::to_string(s.center));
      rule = *r;
      s.rules = {rule};
    }
    s.inputs = {set_union(C, views)};
    s.output = set_union(set_union(C, views), {s.center});
    f.R = to_mask(s.output);
    if (store.hasTables())
      f.table = std::make_shared<const FactorTable>(run_tensor_step(graph, store, s, rule));
  } else if (s.kind == StepKind::LinearView) {
    Node i = s.center, j = s.anchor;
    NodeSet pair = set_union(C, make_set({i, j}));
    NodeSet blk = set_union(set_union(C, s.block), {j});
    require_covered(store, pair, s);
    require_covered(store, blk, s);
    s.inputs = {pair, blk};
    s.output = set_union(pair, s.block);
    f.R = to_mask(s.output);
    if (store.hasTables()) {
      FactorTable t = solve_sliced(
          C, {store.query(blk), store.query(pair)}, set_union(s.block, make_set({i, j})),
          [&](const std::vector<FactorTable>& c) { return linear_view(c[1], c[0], i, j, tol); },
          tol, store.skipMass());
      f.table = std::make_shared<const FactorTable>(t);
    }
  } else if (s.kind == StepKind::DisjointView) {
    NodeSet a = set_union(C, s.block), b = set_union(C, s.other);
    require_covered(store, a, s);
    require_covered(store, b, s);
    s.inputs = {a, b};
    s.output = set_union(a, b);
    f.R = to_mask(s.output);
    if (store.hasTables()) {
      FactorTable t = solve_sliced(
          C, {store.query(a), store.query(b)}, set_union(s.block, s.other),
          [&](const std::vector<FactorTable>& c) { return disjoint_view(c[0], c[1], tol); }, tol,
          store.skipMass());
      f.table = std::make_shared<const FactorTable>(t);
    }
  } else if (s.kind == StepKind::ExclusiveViewMerge) {
    ExclusiveViewInstance inst;
    NodeSet E;
    for (auto [i, v] : s.view_map) {
      inst.core.push_back(i);
      E.push_back(v);
    }
    inst.core = make_set(inst.core);
    inst.view_map = s.view_map;
    inst.conditioned_on = C;
    E = make_set(E);
    std::vector<FactorTable> ins;
    s.inputs = {set_union(C, E)};
    for (auto [i, v] : s.view_map) s.inputs.push_back(set_union(C, make_set({i, v})));
    for (const auto& in : s.inputs) require_covered(store, in, s);
    s.output = set_union(set_union(C, E), inst.core);
    f.R = to_mask(s.output);
    if (store.hasTables()) {
      for (const auto& in : s.inputs) ins.push_back(store.query(in));
      FactorTable t = solve_sliced(
          C, ins, set_union(E, inst.core),
          [&](const std::vector<FactorTable>& c) {
            std::map<Node, FactorTable> pairs;
            std::size_t k = 1;
            for (auto [i, v] : inst.view_map) pairs[i] = c[k++];
            return exclusive_view_merge(inst, c[0], pairs, tol);
          },
          tol, store.skipMass());
      f.table = std::make_shared<const FactorTable>(t);
    }
  } else {
    throw Error(ErrorKind::Validation, "Scripted steps carry no solver");
  }
  if (s.kind != StepKind::TensorDecomp && f.table) {
    // Latent labels inherit from the inputs, which are canonical already.
    FactorTable t = *f.table;
    for (Node v : t.scope())
      if (graph.isLatent(v)) t = canonical_label_by_degeneracy(t, v, tol.eps_deg);
    f.table = std::make_shared<const FactorTable>(t);
  }
  return add_checked(graph, store, f);
}

namespace {

void fill_pairs(const Graph& graph, const MarginalStore& store, RecoveryReport& rep) {
  rep.recovered_pairs.clear();
  rep.missing_pairs.clear();
  for (const Edge& e : graph.edges()) {
    Mask m = bit(e.first) | bit(e.second);
    int best = -1;
    for (const auto& f : store.families())
      if (f.covers(m) && (best < 0 || f.round < best)) best = f.round;
    if (best >= 0) {
      rep.recovered_pairs.push_back(e);
      rep.pair_round[e] = best;
    } else {
      rep.missing_pairs.push_back(e);
    }
  }
}

const char* mode_name(CondMode m) {
  switch (m) {
    case CondMode::Auto: return "auto";
    case CondMode::Exhaustive: return "exhaustive";
    case CondMode::Neighborhood: return "neighborhood";
  }
  return "?";
}

}  // namespace

std::pair<MarginalStore, RecoveryReport> run_sequential(const Graph& graph,
                                                        const MarginalStore& initial,
                                                        const LabelRuleSet& rules,
                                                        const SchedulerConfig& cfg) {
  if (cfg.K < 0 || cfg.L < 3 || cfg.max_rounds < 1)
    throw Error(ErrorKind::Validation, "scheduler config needs K >= 0, L >= 3, max_rounds >= 1");
  MarginalStore store = initial;
  store.setTolerances(cfg.tolerances, cfg.skip_mass, cfg.fallback_mass);
  RecoveryReport rep;
  rep.cond_mode = mode_name(resolve_mode(graph, cfg));
  rep.termination_bound = trimmed_subset_bound(graph.nodeCount(), cfg.K, cfg.L);
  std::set<std::string> failed;
  fill_pairs(graph, store, rep);
  rep.families_per_round.push_back(static_cast<int>(store.families().size()));
  if (cfg.stop_when_complete && rep.missing_pairs.empty()) {
    rep.halt_reason = "complete";
    return {store, rep};
  }
  rep.halt_reason = "max_rounds";
  for (int round = 1; round <= cfg.max_rounds; ++round) {
    if (round > rep.termination_bound)
      throw Error(ErrorKind::Structure, "round count exceeded the trimmed-subset bound");
    std::vector<RecoveryStep> steps = enumerate_candidates_B(graph, store, cfg, round);
    std::vector<RecoveryStep> tds = enumerate_candidates_A(graph, store, rules, cfg, round);
    // Merges win over decompositions that a proposed merge family already covers.
    std::vector<Family> merge_fams;
    for (const auto& s : steps) merge_fams.push_back(family_of(s));
    for (auto& s : tds) {
      Family f;
      f.R = to_mask(s.output);
      bool covered = false;
      for (const auto& m : merge_fams)
        if (f.dominatedBy(m)) covered = true;
      if (!covered) steps.push_back(std::move(s));
    }
    std::erase_if(steps, [&](const RecoveryStep& s) { return failed.count(s.signature()); });
    if (steps.empty()) {
      rep.halt_reason = "fixpoint";
      break;
    }
    int added = 0;
    for (auto& s : steps) {
      std::string sig = s.signature();
      try {
        RecoveryStep exec = s;
        execute_step(graph, store, exec, rules, static_cast<int>(rep.steps.size()));
        rep.steps.push_back(exec);
        ++added;
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::Inconsistency) throw;
        failed.insert(sig);
        rep.errors.push_back({round, sig, e.what()});
      }
    }
    rep.rounds_executed = round;
    rep.families_per_round.push_back(static_cast<int>(store.families().size()));
    fill_pairs(graph, store, rep);
    if (cfg.stop_when_complete && rep.missing_pairs.empty()) {
      rep.halt_reason = "complete";
      break;
    }
    (void)added;
  }
  fill_pairs(graph, store, rep);
  return {store, rep};
}

RecoveryReport analyze_recoverability(const Graph& graph, const MarginalStore& initial_subsets,
                                      const LabelRuleSet& rules, const SchedulerConfig& cfg) {
  // A store without tables turns every step into a pure coverage update.
  MarginalStore dry = MarginalStore::fromSubsets({});
  for (const auto& f : initial_subsets.families()) {
    Family g = f;
    g.table.reset();
    g.recipe = Family::Recipe::Explicit;
    dry.add(g);
  }
  return run_sequential(graph, dry, rules, cfg).second;
}

std::pair<MarginalStore, RecoveryReport> execute_plan(const Graph& graph,
                                                      const MarginalStore& initial,
                                                      const std::vector<RecoveryStep>& steps,
                                                      const LabelRuleSet& rules,
                                                      const SchedulerConfig& cfg) {
  MarginalStore store = initial;
  store.setTolerances(cfg.tolerances, cfg.skip_mass, cfg.fallback_mass);
  RecoveryReport rep;
  rep.termination_bound = trimmed_subset_bound(graph.nodeCount(), cfg.K, cfg.L);
  for (std::size_t k = 0; k < steps.size(); ++k) {
    RecoveryStep s = steps[k];
    if (s.round == 0) s.round = static_cast<int>(k) + 1;
    try {
      execute_step(graph, store, s, rules, static_cast<int>(k));
    } catch (const Error& e) {
      throw Error(e.kind(), "plan step " + std::to_string(k) + " (" + to_string(s.kind) +
                                ") failed: " + e.what());
    }
    rep.steps.push_back(s);
    rep.rounds_executed = std::max(rep.rounds_executed, s.round);
  }
  rep.halt_reason = "plan";
  fill_pairs(graph, store, rep);
  return {store, rep};
}

}  // namespace lseq
