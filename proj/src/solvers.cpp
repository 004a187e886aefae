#include "lseq/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>

#include <Eigen/Dense>

namespace lseq {

Tolerances Tolerances::empirical() {
  Tolerances t;
  t.eps_solve = 5e-2;
  t.eps_eig = 1e-4;
  t.eps_imag = 1e-3;
  t.cond_max = 1e8;
  t.eps_zero = 1e-14;
  t.eps_pref = 1e-12;
  t.eps_deg = 1e-4;
  t.eps_consistent = 5e-2;
  t.eps_store = 1.0;
  return t;
}

namespace {

using Mat2 = std::array<std::array<double, 2>, 2>;

double det2(const Mat2& m) { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }

Mat2 mul2(const Mat2& a, const Mat2& b) {
  Mat2 c{};
  for (int r = 0; r < 2; ++r)
    for (int s = 0; s < 2; ++s) c[r][s] = a[r][0] * b[0][s] + a[r][1] * b[1][s];
  return c;
}

Mat2 transpose2(const Mat2& a) { return {{{a[0][0], a[1][0]}, {a[0][1], a[1][1]}}}; }

double cond2(const Mat2& m) {
  double fro2 = m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1];
  double d = std::abs(det2(m));
  double disc = std::sqrt(std::max(0.0, fro2 * fro2 - 4 * d * d));
  double s1 = std::sqrt(0.5 * (fro2 + disc));
  // s1 * s2 = |det| is the accurate route to the small singular value.
  double s2 = s1 > 0 ? d / s1 : 0.0;
  if (s2 <= 0) return std::numeric_limits<double>::infinity();
  return s1 / s2;
}

Mat2 inverse2(const Mat2& m, double cond_max, const char* what) {
  double c = cond2(m);
  if (!(c <= cond_max))
    throw Error(ErrorKind::RankDeficiency,
                std::string(what) + " is singular (condition number " + format_real(c) + ")");
  double d = det2(m);
  return {{{m[1][1] / d, -m[0][1] / d}, {-m[1][0] / d, m[0][0] / d}}};
}

// Eigen-decomposition of a real 2x2 matrix with real, distinct eigenvalues.
// Returns eigenvalues ascending and eigenvectors (as columns) scaled to sum 1.
void eig2(const Mat2& f, const Tolerances& tol, std::array<double, 2>& lambda, Mat2& vecs) {
  double tr = f[0][0] + f[1][1];
  double disc = 0.25 * tr * tr - det2(f);
  if (disc < -tol.eps_imag)
    throw Error(ErrorKind::InvalidMixture, "complex eigenvalues (discriminant " +
                                               format_real(disc) + ")");
  double root = std::sqrt(std::max(0.0, disc));
  if (2 * root < tol.eps_eig)
    throw Error(ErrorKind::Unidentifiable, "eigenvalue gap " + format_real(2 * root) +
                                               " below threshold");
  lambda = {0.5 * tr - root, 0.5 * tr + root};
  for (int s = 0; s < 2; ++s) {
    double l = lambda[s];
    std::array<double, 2> u{f[0][1], l - f[0][0]};
    std::array<double, 2> w{l - f[1][1], f[1][0]};
    auto n2 = [](const std::array<double, 2>& x) { return x[0] * x[0] + x[1] * x[1]; };
    std::array<double, 2> v = n2(u) >= n2(w) ? u : w;
    double sum = v[0] + v[1];
    if (std::abs(sum) < 1e-300)
      throw Error(ErrorKind::InvalidMixture, "eigenvector cannot be normalized to a distribution");
    vecs[0][s] = v[0] / sum;
    vecs[1][s] = v[1] / sum;
  }
}

void check_prob(double v, double eps, const char* what) {
  if (!(v >= -eps && v <= 1 + eps))
    throw Error(ErrorKind::InvalidMixture,
                std::string(what) + " outside [0,1]: " + format_real(v));
}

double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

MixtureDecomposition decompose_mixture(const FactorTable& T, Node hidden, const Tolerances& tol) {
  if (T.arity() != 3) throw Error(ErrorKind::Validation, "tensor_decomp needs a 3-view table");
  if (T.hasVariable(hidden)) throw Error(ErrorKind::Validation, "hidden node is one of the views");
  Mat2 M0{}, M1{};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      M0[a][b] = T[(a << 2) | (b << 1) | 0];
      M1[a][b] = T[(a << 2) | (b << 1) | 1];
    }
  Mat2 M{};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) M[a][b] = M0[a][b] + M1[a][b];
  Mat2 Minv = inverse2(M, tol.cond_max, "pairwise view matrix");

  std::array<double, 2> la{}, lb{};
  Mat2 A{}, B{};
  eig2(mul2(M1, Minv), tol, la, A);
  eig2(transpose2(mul2(Minv, M1)), tol, lb, B);
  // Both spectra equal P(x_l = 1 | hidden); ascending order pairs the components.
  if (std::abs(la[0] - lb[0]) > std::max(1e3 * tol.eps_solve, 1e-6) ||
      std::abs(la[1] - lb[1]) > std::max(1e3 * tol.eps_solve, 1e-6))
    throw Error(ErrorKind::InvalidMixture, "view spectra do not pair up");

  Mat2 Ainv = inverse2(A, 1e15, "view conditional");
  Mat2 Binv = inverse2(B, 1e15, "view conditional");
  Mat2 D = mul2(mul2(Ainv, M), transpose2(Binv));

  MixtureDecomposition out;
  out.hidden = hidden;
  out.views = {T.scope()[0], T.scope()[1], T.scope()[2]};
  double wsum = 0.0;
  for (int s = 0; s < 2; ++s) {
    check_prob(D[s][s], tol.eps_solve, "mixture weight");
    out.weights[s] = clip01(D[s][s]);
    wsum += out.weights[s];
  }
  if (!(wsum > 0)) throw Error(ErrorKind::InvalidMixture, "mixture weights vanish");
  for (int s = 0; s < 2; ++s) {
    out.weights[s] /= wsum;
    if (out.weights[s] <= 0) throw Error(ErrorKind::InvalidMixture, "empty mixture component");
    double l = (la[s] + lb[s]) / 2;
    check_prob(l, tol.eps_solve, "view conditional");
    out.conditionals[2][1][s] = clip01(l);
    out.conditionals[2][0][s] = 1 - clip01(l);
    for (int a = 0; a < 2; ++a) {
      check_prob(A[a][s], tol.eps_solve, "view conditional");
      check_prob(B[a][s], tol.eps_solve, "view conditional");
    }
    double a1 = clip01(A[1][s]), b1 = clip01(B[1][s]);
    out.conditionals[0][1][s] = a1;
    out.conditionals[0][0][s] = 1 - a1;
    out.conditionals[1][1][s] = b1;
    out.conditionals[1][0][s] = 1 - b1;
  }
  return out;
}

namespace {

// Gauss-Newton refinement of the seven mixture parameters against the eight
// cells of T. The eigen step loses accuracy when a view is nearly independent
// of the hidden node; the refined fit recovers it when the input is exact.
void polish_mixture(MixtureDecomposition& mix, const FactorTable& T) {
  auto cells = [](const Eigen::VectorXd& th, Eigen::VectorXd* model, Eigen::MatrixXd* jac) {
    model->setZero(8);
    jac->setZero(8, 7);
    for (int idx = 0; idx < 8; ++idx) {
      int x[3] = {(idx >> 2) & 1, (idx >> 1) & 1, idx & 1};
      for (int s = 0; s < 2; ++s) {
        double w = s ? th[0] : 1 - th[0];
        double f[3];
        for (int v = 0; v < 3; ++v) f[v] = x[v] ? th[1 + 2 * v + s] : 1 - th[1 + 2 * v + s];
        double prod = f[0] * f[1] * f[2];
        (*model)[idx] += w * prod;
        (*jac)(idx, 0) += (s ? 1.0 : -1.0) * prod;
        for (int v = 0; v < 3; ++v) {
          double others = prod / (f[v] == 0 ? 1 : f[v]);
          if (f[v] == 0) others = f[(v + 1) % 3] * f[(v + 2) % 3];
          (*jac)(idx, 1 + 2 * v + s) += w * (x[v] ? 1.0 : -1.0) * others;
        }
      }
    }
  };
  Eigen::VectorXd target(8), th(7), model;
  Eigen::MatrixXd jac;
  for (int idx = 0; idx < 8; ++idx) target[idx] = T[idx];
  th[0] = mix.weights[1];
  for (int v = 0; v < 3; ++v)
    for (int s = 0; s < 2; ++s) th[1 + 2 * v + s] = mix.conditionals[v][1][s];
  cells(th, &model, &jac);
  double err = (model - target).norm();
  for (int it = 0; it < 8 && err > 0; ++it) {
    Eigen::VectorXd next = th - jac.colPivHouseholderQr().solve(model - target);
    if (!next.allFinite() || (next.array() <= 0).any() || (next.array() >= 1).any()) break;
    Eigen::VectorXd m2;
    Eigen::MatrixXd j2;
    cells(next, &m2, &j2);
    double e2 = (m2 - target).norm();
    if (!(e2 < err)) break;
    th = next;
    model = m2;
    jac = j2;
    err = e2;
  }
  mix.weights = {1 - th[0], th[0]};
  for (int v = 0; v < 3; ++v)
    for (int s = 0; s < 2; ++s) {
      mix.conditionals[v][1][s] = th[1 + 2 * v + s];
      mix.conditionals[v][0][s] = 1 - th[1 + 2 * v + s];
    }
}

FactorTable assemble_mixture(const MixtureDecomposition& mix, const FactorTable& T, const Tolerances& tol) {
  std::vector<double> vals(16, 0.0);
  for (int s = 0; s < 2; ++s)
    for (std::size_t v = 0; v < 8; ++v) {
      int a = (v >> 2) & 1, b = (v >> 1) & 1, c = v & 1;
      vals[(static_cast<std::size_t>(s) << 3) | v] =
          mix.weights[s] * mix.conditionals[0][a][s] * mix.conditionals[1][b][s] *
          mix.conditionals[2][c][s];
    }
  return FactorTable::normalized({mix.hidden, T.scope()[0], T.scope()[1], T.scope()[2]},
                                 std::move(vals), tol.eps_solve);
}

}  // namespace

FactorTable tensor_decomp(const FactorTable& T, Node hidden, const Tolerances& tol) {
  if (T.arity() != 3) throw Error(ErrorKind::Validation, "tensor_decomp needs a 3-view table");
  // Any view can be the sliced one; the best conditioned choice is kept.
  const auto& sc = T.scope();
  const std::array<std::vector<Node>, 3> orders{{{sc[0], sc[1], sc[2]},
                                                 {sc[1], sc[2], sc[0]},
                                                 {sc[2], sc[0], sc[1]}}};
  std::optional<FactorTable> best;
  double best_err = 0.0;
  std::optional<Error> first_error;
  for (const auto& order : orders) {
    try {
      FactorTable t = T.reordered(order);
      MixtureDecomposition mix = decompose_mixture(t, hidden, tol);
      polish_mixture(mix, t);
      FactorTable out = assemble_mixture(mix, t, tol);
      double err = table_distance(marginalize_table(out, T.scopeSet()), T);
      if (!best || err < best_err) {
        best = out;
        best_err = err;
      }
    } catch (const Error& e) {
      if (!first_error) first_error = e;
    }
  }
  if (!best) throw *first_error;
  if (best_err > tol.eps_solve)
    throw Error(ErrorKind::InvalidMixture,
                "two-component reconstruction misses the input by " + format_real(best_err));
  return best->canonical();
}

// ---------------------------------------------------------------- merges

FactorTable disjoint_view(const FactorTable& table_SC, const FactorTable& table_TC,
                          const Tolerances& tol) {
  NodeSet C = set_intersection(table_SC.scopeSet(), table_TC.scopeSet());
  NodeSet S = set_minus(table_SC.scopeSet(), C);
  NodeSet T = set_minus(table_TC.scopeSet(), C);
  if (S.empty() || T.empty())
    throw Error(ErrorKind::Validation, "disjoint_view needs nonempty S and T");
  const int nc = static_cast<int>(C.size()), ns = static_cast<int>(S.size()),
            nt = static_cast<int>(T.size());
  // Layout: C bits high, then the block bits.
  std::vector<Node> order_sc = C, order_tc = C;
  order_sc.insert(order_sc.end(), S.begin(), S.end());
  order_tc.insert(order_tc.end(), T.begin(), T.end());
  FactorTable sc = table_SC.reordered(order_sc);
  FactorTable tc = table_TC.reordered(order_tc);

  const std::size_t ncs = std::size_t{1} << nc;
  std::vector<double> pc_s(ncs, 0.0), pc_t(ncs, 0.0);
  for (std::size_t idx = 0; idx < sc.size(); ++idx) pc_s[idx >> ns] += sc[idx];
  for (std::size_t idx = 0; idx < tc.size(); ++idx) pc_t[idx >> nt] += tc[idx];
  double tv = 0.0;
  for (std::size_t c = 0; c < ncs; ++c) tv += 0.5 * std::abs(pc_s[c] - pc_t[c]);
  if (tv > tol.eps_consistent)
    throw Error(ErrorKind::Inconsistency, "C-marginals of the merge inputs differ by " +
                                              format_real(tv));

  std::vector<Node> order = C;
  order.insert(order.end(), S.begin(), S.end());
  order.insert(order.end(), T.begin(), T.end());
  std::vector<double> vals(std::size_t{1} << (nc + ns + nt), 0.0);
  for (std::size_t c = 0; c < ncs; ++c) {
    if (pc_t[c] <= tol.eps_zero)
      throw Error(ErrorKind::DegenerateEvent, "C-assignment with probability " +
                                                  format_real(pc_t[c]));
    for (std::size_t s = 0; s < (std::size_t{1} << ns); ++s)
      for (std::size_t t = 0; t < (std::size_t{1} << nt); ++t)
        vals[(((c << ns) | s) << nt) | t] = sc[(c << ns) | s] * tc[(c << nt) | t] / pc_t[c];
  }
  return FactorTable::normalized(order, std::move(vals), tol.eps_solve).canonical();
}

FactorTable linear_view(const FactorTable& table_ij, const FactorTable& table_Sj, Node i, Node j,
                        const Tolerances& tol) {
  if (table_ij.arity() != 2 || !table_ij.hasVariable(i) || !table_ij.hasVariable(j))
    throw Error(ErrorKind::Validation, "linear_view: pair table must be over {i,j}");
  if (!table_Sj.hasVariable(j) || table_Sj.hasVariable(i))
    throw Error(ErrorKind::Validation, "linear_view: second table must contain j and not i");
  NodeSet S = set_minus(table_Sj.scopeSet(), {j});
  if (S.empty()) throw Error(ErrorKind::Validation, "linear_view: empty S");
  FactorTable ji = table_ij.reordered({j, i});
  Mat2 Q{{{ji[0], ji[1]}, {ji[2], ji[3]}}};  // Q[a][b] = P(j=a, i=b)
  Mat2 Qinv = inverse2(Q, tol.cond_max, "pairwise joint P(x_j, x_i)");

  std::vector<Node> order{j};
  order.insert(order.end(), S.begin(), S.end());
  FactorTable js = table_Sj.reordered(order);
  const int ns = static_cast<int>(S.size());
  const std::size_t nss = std::size_t{1} << ns;
  double pj1 = 0.0;
  for (std::size_t s = 0; s < nss; ++s) pj1 += js[nss + s];
  double tv = std::abs(pj1 - (Q[1][0] + Q[1][1]));
  if (tv > tol.eps_consistent)
    throw Error(ErrorKind::Inconsistency, "j-marginals of the linear_view inputs differ by " +
                                              format_real(tv));
  // Q^{-1} amplifies any leftover mismatch, so take the j-marginal from Q.
  std::array<double, 2> pj{1.0 - pj1, pj1};
  std::array<double, 2> scale{};
  for (int a = 0; a < 2; ++a) scale[a] = pj[a] > 0 ? (Q[a][0] + Q[a][1]) / pj[a] : 0.0;

  // Output layout: i, j, then S.
  std::vector<Node> out_order{i, j};
  out_order.insert(out_order.end(), S.begin(), S.end());
  std::vector<double> vals(std::size_t{4} << ns, 0.0);
  std::array<double, 2> colsum{0.0, 0.0};
  for (std::size_t s = 0; s < nss; ++s) {
    double p0 = js[s] * scale[0], p1 = js[nss + s] * scale[1];
    for (int b = 0; b < 2; ++b) {
      double cond = Qinv[b][0] * p0 + Qinv[b][1] * p1;  // P(S=s | i=b)
      if (!(cond >= -tol.eps_solve && cond <= 1 + tol.eps_solve))
        throw Error(ErrorKind::InvalidResult, "recovered conditional " + format_real(cond) +
                                                  " outside [0,1]");
      colsum[b] += cond;
      for (int a = 0; a < 2; ++a)
        vals[((static_cast<std::size_t>(b) << 1 | a) << ns) | s] = cond * Q[a][b];
    }
  }
  for (int b = 0; b < 2; ++b)
    if (std::abs(colsum[b] - 1) > std::max(tol.eps_solve, 1e-9))
      throw Error(ErrorKind::InvalidResult, "recovered conditional does not sum to 1");
  return FactorTable::normalized(out_order, std::move(vals), tol.eps_solve).canonical();
}

FactorTable exclusive_view_merge(const ExclusiveViewInstance& inst, const FactorTable& table_E,
                                 const std::map<Node, FactorTable>& pair_tables,
                                 const Tolerances& tol, int max_core) {
  const int n = static_cast<int>(inst.core.size());
  if (n == 0) throw Error(ErrorKind::Validation, "exclusive_view_merge: empty core");
  if (n > max_core) throw Error(ErrorKind::Resource, "exclusive_view_merge: core too large");
  // Order E-table axes by the core node they witness.
  std::vector<Node> views, core;
  for (auto [i, v] : inst.view_map) {
    core.push_back(i);
    views.push_back(v);
  }
  if (make_set(views) != table_E.scopeSet())
    throw Error(ErrorKind::Validation, "exclusive_view_merge: view table scope mismatch");
  std::vector<Mat2> A(n), Ainv(n);
  for (int k = 0; k < n; ++k) {
    auto it = pair_tables.find(core[k]);
    if (it == pair_tables.end())
      throw Error(ErrorKind::Validation, "exclusive_view_merge: missing pair table");
    FactorTable p = it->second.reordered({views[k], core[k]});
    for (int s = 0; s < 2; ++s) {
      double ps = p[s] + p[2 + s];
      if (ps <= tol.eps_zero) throw Error(ErrorKind::RankDeficiency, "core node never takes a value");
      A[k][0][s] = p[s] / ps;
      A[k][1][s] = p[2 + s] / ps;
    }
    Ainv[k] = inverse2(A[k], tol.cond_max, "view conditional P(view | core)");
  }
  FactorTable e = table_E.reordered(views);
  std::vector<double> ps(e.values());
  // Apply A_k^{-1} along each axis.
  for (int k = 0; k < n; ++k) {
    std::size_t bitk = std::size_t{1} << (n - 1 - k);
    for (std::size_t idx = 0; idx < ps.size(); ++idx) {
      if (idx & bitk) continue;
      double x0 = ps[idx], x1 = ps[idx | bitk];
      ps[idx] = Ainv[k][0][0] * x0 + Ainv[k][0][1] * x1;
      ps[idx | bitk] = Ainv[k][1][0] * x0 + Ainv[k][1][1] * x1;
    }
  }
  for (double v : ps)
    if (!(v >= -tol.eps_solve && v <= 1 + tol.eps_solve))
      throw Error(ErrorKind::InvalidResult, "solved core marginal entry " + format_real(v) +
                                                " outside [0,1]");
  std::vector<Node> order = core;
  order.insert(order.end(), views.begin(), views.end());
  std::vector<double> vals(std::size_t{1} << (2 * n), 0.0);
  for (std::size_t s = 0; s < ps.size(); ++s)
    for (std::size_t v = 0; v < ps.size(); ++v) {
      double p = std::max(0.0, ps[s]);
      for (int k = 0; k < n; ++k) {
        int sb = (s >> (n - 1 - k)) & 1, vb = (v >> (n - 1 - k)) & 1;
        p *= A[k][vb][sb];
      }
      vals[(s << n) | v] = p;
    }
  FactorTable out = FactorTable::normalized(order, std::move(vals), tol.eps_solve);
  double err = table_distance(marginalize_table(out, make_set(views)), table_E);
  if (err > tol.eps_solve)
    throw Error(ErrorKind::InvalidResult, "merged table misses the view marginal by " +
                                              format_real(err));
  return out.canonical();
}

// ---------------------------------------------------------------- labels

double label_preference(const FactorTable& table, Node target, Node reference) {
  FactorTable p = marginalize_table(table, {target, reference}).reordered({target, reference});
  double t0 = p[0] + p[1], t1 = p[2] + p[3];
  double r_given_1 = t1 > 0 ? p[3] / t1 : 0.0;
  double r_given_0 = t0 > 0 ? p[1] / t0 : 0.0;
  if (r_given_1 <= 0 && r_given_0 <= 0) return 0.0;
  return std::log(r_given_1) - std::log(r_given_0);
}

std::vector<FactorTable> fix_labels(const std::vector<FactorTable>& tables, const LabelRule& rule,
                                    const Tolerances& tol) {
  if (rule.preference != 1 && rule.preference != -1)
    throw Error(ErrorKind::Validation, "label preference must be +1 or -1");
  std::vector<FactorTable> out;
  out.reserve(tables.size());
  for (const FactorTable& t : tables) {
    if (!t.hasVariable(rule.target) || !t.hasVariable(rule.reference))
      throw Error(ErrorKind::Validation, "fix_labels: table lacks target or reference");
    double pref = label_preference(t, rule.target, rule.reference);
    if (!(std::abs(pref) >= tol.eps_pref))
      throw Error(ErrorKind::AmbiguousLabel, "preference magnitude " + format_real(pref) +
                                                 " for node " + std::to_string(rule.target));
    int sign = pref > 0 ? 1 : -1;
    out.push_back(sign == rule.preference ? t : t.flipped(rule.target));
  }
  return out;
}

FactorTable canonical_label_by_degeneracy(const FactorTable& table, Node target, double eps_deg) {
  int pos = table.position(target);
  if (pos < 0) throw Error(ErrorKind::Validation, "canonical label: target not in scope");
  double p1 = 0.0;
  for (std::size_t idx = 0; idx < table.size(); ++idx)
    if (table.bit(idx, pos)) p1 += table[idx];
  if (std::abs(p1 - 0.5) <= eps_deg)
    throw Error(ErrorKind::DegenerateLabel, "P(x_" + std::to_string(target) + "=1) = " +
                                                format_real(p1) + " is too close to 0.5");
  return p1 > 0.5 ? table : table.flipped(target);
}

// ---------------------------------------------------------------- conditioning helpers

std::vector<FactorTable> condition_all(const FactorTable& table, const NodeSet& C,
                                       const Tolerances& tol) {
  std::vector<FactorTable> out;
  const int nc = static_cast<int>(C.size());
  for (std::size_t c = 0; c < (std::size_t{1} << nc); ++c) {
    std::map<Node, int> a;
    for (int k = 0; k < nc; ++k) a[C[k]] = (c >> (nc - 1 - k)) & 1;
    out.push_back(condition_table(table, a, tol.eps_zero).canonical());
  }
  return out;
}

FactorTable join_with_marginal(const std::vector<FactorTable>& conds, const FactorTable& P_C,
                               const Tolerances& tol) {
  FactorTable pc = P_C.canonical();
  const NodeSet& C = pc.scope();
  const int nc = static_cast<int>(C.size());
  if (conds.size() != (std::size_t{1} << nc))
    throw Error(ErrorKind::Validation, "join_with_marginal: one table per C-assignment expected");
  NodeSet R = conds.front().scopeSet();
  const int nr = static_cast<int>(R.size());
  std::vector<Node> order = C;
  order.insert(order.end(), R.begin(), R.end());
  std::vector<double> vals(std::size_t{1} << (nc + nr), 0.0);
  for (std::size_t c = 0; c < conds.size(); ++c) {
    FactorTable t = conds[c].reordered(R);
    for (std::size_t r = 0; r < t.size(); ++r) vals[(c << nr) | r] = pc[c] * t[r];
  }
  return FactorTable::normalized(order, std::move(vals), tol.eps_solve).canonical();
}

}  // namespace lseq
