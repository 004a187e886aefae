// Command-line driver: generate, sample, analyze, learn, verify.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "lseq/instances.hpp"
#include "lseq/io.hpp"
#include "lseq/mle.hpp"
#include "lseq/scheduler.hpp"

using namespace lseq;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitInput = 2;
constexpr int kExitPartial = 3;
constexpr int kExitInconsistent = 4;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::string> letter_names(int n) {
  std::vector<std::string> names;
  for (int v = 0; v < n; ++v) {
    std::string s;
    int x = v;
    do {
      s.insert(s.begin(), static_cast<char>('a' + x % 26));
      x = x / 26 - 1;
    } while (x >= 0);
    names.push_back(s);
  }
  return names;
}

// Latent labels follow the store convention: P(x_i = 1) > 0.5.
GMParams canonical_params(const Graph& g, const GMParams& p) {
  GMParams q = p;
  for (Node v : g.latent())
    if (exact_marginal(g, q, {v})[1] < 0.5) q = relabel_params(g, q, v);
  return q;
}

CondMode parse_cond_mode(const std::string& s) {
  if (s == "auto") return CondMode::Auto;
  if (s == "exhaustive") return CondMode::Exhaustive;
  if (s == "neighborhood") return CondMode::Neighborhood;
  throw Error(ErrorKind::Validation, "unknown conditioning mode '" + s + "'");
}

const char* cond_mode_name(CondMode m) {
  switch (m) {
    case CondMode::Auto: return "auto";
    case CondMode::Exhaustive: return "exhaustive";
    case CondMode::Neighborhood: return "neighborhood";
  }
  return "?";
}

struct SchedOpts {
  int K = 3, L = 4, budget = 6, max_rounds = 20;
  std::string cond_mode = "auto";
  std::string label_mode = "auto";
  std::string rules_file;
  double fallback_mass = 0.0;
  std::vector<std::string> tol_overrides;
  CLI::Option* budget_flag = nullptr;
};

// Applies "name=value" overrides to a tolerance bundle.
void apply_overrides(Tolerances& t, const std::vector<std::string>& overrides) {
  const std::map<std::string, double Tolerances::*> fields{
      {"eps_solve", &Tolerances::eps_solve},   {"eps_eig", &Tolerances::eps_eig},
      {"eps_imag", &Tolerances::eps_imag},     {"cond_max", &Tolerances::cond_max},
      {"eps_zero", &Tolerances::eps_zero},     {"eps_pref", &Tolerances::eps_pref},
      {"eps_deg", &Tolerances::eps_deg},       {"eps_consistent", &Tolerances::eps_consistent},
      {"eps_store", &Tolerances::eps_store}};
  for (const auto& item : overrides) {
    auto eq = item.find('=');
    auto it = fields.find(item.substr(0, eq));
    if (eq == std::string::npos || it == fields.end())
      throw Error(ErrorKind::Validation, "bad tolerance override '" + item + "'");
    try {
      t.*(it->second) = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error(ErrorKind::Validation, "bad tolerance value in '" + item + "'");
    }
  }
}

void add_sched_flags(CLI::App* cmd, SchedOpts& o) {
  cmd->add_option("--K", o.K, "Largest conditioning set")->check(CLI::NonNegativeNumber);
  cmd->add_option("--L", o.L, "Largest local structure")->check(CLI::Range(3, 64));
  o.budget_flag = cmd->add_option("--budget", o.budget, "Size of the observed subsets available initially")
                      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--max-rounds", o.max_rounds, "Round cap")->check(CLI::PositiveNumber);
  cmd->add_option("--cond-mode", o.cond_mode, "auto|exhaustive|neighborhood");
  cmd->add_option("--label-mode", o.label_mode, "auto|attractive|forced");
  cmd->add_option("--rules", o.rules_file, "Explicit label rules (JSON)");
  cmd->add_option("--tol", o.tol_overrides, "Tolerance override, e.g. eps_store=1e-6 (repeatable)");
}

SchedulerConfig make_config(const SchedOpts& o, bool empirical) {
  SchedulerConfig cfg;
  cfg.K = o.K;
  cfg.L = o.L;
  cfg.max_rounds = o.max_rounds;
  cfg.cond_mode = parse_cond_mode(o.cond_mode);
  if (empirical) cfg.tolerances = Tolerances::empirical();
  apply_overrides(cfg.tolerances, o.tol_overrides);
  cfg.fallback_mass = o.fallback_mass;
  return cfg;
}

LabelRuleSet make_rules(const SchedOpts& o, const ModelFile& m) {
  LabelRuleSet rules;
  if (!o.rules_file.empty()) {
    json j = read_json_file(o.rules_file);
    rules.mode = LabelRuleSet::Mode::Explicit;
    const json& list = j.is_array() ? j : j.at("rules");
    for (const auto& r : list) rules.rules.push_back(rule_from_json(r));
    return rules;
  }
  std::string mode = o.label_mode;
  if (mode == "auto") {
    bool attractive = m.has_params;
    for (const auto& [e, b] : m.params.beta) attractive = attractive && b > 0;
    mode = attractive ? "attractive" : "forced";
  }
  if (mode == "attractive") rules.mode = LabelRuleSet::Mode::Attractive;
  else if (mode == "forced") rules.mode = LabelRuleSet::Mode::Forced;
  else throw Error(ErrorKind::Validation, "unknown label mode '" + mode + "'");
  return rules;
}

json config_json(const SchedulerConfig& c, int budget) {
  const Tolerances& t = c.tolerances;
  return {{"K", c.K},
          {"L", c.L},
          {"budget", budget},
          {"max_rounds", c.max_rounds},
          {"cond_mode", cond_mode_name(c.cond_mode)},
          {"fallback_mass", c.fallback_mass},
          {"tolerances",
           {{"eps_solve", t.eps_solve},
            {"eps_eig", t.eps_eig},
            {"eps_imag", t.eps_imag},
            {"cond_max", t.cond_max},
            {"eps_zero", t.eps_zero},
            {"eps_pref", t.eps_pref},
            {"eps_deg", t.eps_deg},
            {"eps_consistent", t.eps_consistent},
            {"eps_store", t.eps_store}}}};
}

void log_report(const RecoveryReport& r, const std::vector<std::string>& names) {
  spdlog::info("halted ({}) after {} rounds; {} pairs recovered, {} missing", r.halt_reason,
               r.rounds_executed, r.recovered_pairs.size(), r.missing_pairs.size());
  for (const Edge& e : r.missing_pairs)
    spdlog::warn("missing pair {}-{}", node_name(names, e.first), node_name(names, e.second));
  for (const auto& e : r.errors) spdlog::debug("round {} step {} failed: {}", e.round, e.step, e.message);
}

// ---------------------------------------------------------------- generate

struct GenerateOpts {
  std::string kind = "grid";
  int rows = 4, cols = 5;
  CrbmSpec crbm;
  RegularSpec regular;
  std::string input;
  std::uint64_t seed = 0;
  double lo = 0.2, hi = 2.0;
  bool attractive = false, structure_only = false;
  std::string out = "model.json";
};

int cmd_generate(const GenerateOpts& o) {
  auto t0 = Clock::now();
  ModelFile m;
  if (o.kind == "grid") {
    m.graph = make_grid(o.rows, o.cols);
    m.names = letter_names(m.graph.idSpace());
  } else if (o.kind == "crbm") {
    m.graph = make_crbm(o.crbm);
    m.names = letter_names(m.graph.idSpace());
  } else if (o.kind == "regular") {
    RegularSpec spec = o.regular;
    spec.seed = o.seed;
    m.graph = make_random_regular(spec);
  } else if (o.kind == "custom") {
    if (o.input.empty()) throw Error(ErrorKind::Validation, "--kind custom needs --input");
    ModelFile in = model_from_json(read_json_file(o.input));
    m.graph = in.graph;
    m.names = in.names;
  } else {
    throw Error(ErrorKind::Validation, "unknown kind '" + o.kind + "'");
  }
  if (!o.structure_only) {
    m.params = random_params(m.graph, o.lo, o.hi, o.seed, o.attractive);
    m.has_params = true;
  }
  write_json_file(o.out, model_to_json(m));
  json manifest = {{"command", "generate"},
                   {"kind", o.kind},
                   {"seeds", {o.seed}},
                   {"config", {{"lo", o.lo}, {"hi", o.hi}, {"attractive", o.attractive}}},
                   {"inputs", o.input.empty() ? json::array() : json::array({o.input})},
                   {"outputs", {o.out}},
                   {"timings", {{"generate", seconds_since(t0)}}}};
  write_json_file(o.out + ".manifest.json", manifest);
  spdlog::info("wrote {} ({} nodes, {} edges)", o.out, m.graph.nodeCount(), m.graph.edges().size());
  return kExitOk;
}

// ---------------------------------------------------------------- sample

int cmd_sample(const std::string& model_path, std::size_t n, std::uint64_t seed, const std::string& out) {
  ModelFile m = model_from_json(read_json_file(model_path));
  if (!m.has_params) throw Error(ErrorKind::Validation, "model file has no parameters");
  SampleSet s = sample(m.graph, m.params, n, seed);
  std::ofstream os(out);
  if (!os) throw Error(ErrorKind::Validation, "cannot write " + out);
  write_samples_csv(os, s);
  spdlog::info("wrote {} samples of {} visible nodes to {}", n, s.visible_scope.size(), out);
  return kExitOk;
}

// ---------------------------------------------------------------- analyze

int cmd_analyze(const std::string& model_path, const SchedOpts& o, const std::string& out) {
  ModelFile m = model_from_json(read_json_file(model_path));
  SchedulerConfig cfg = make_config(o, false);
  MarginalStore init = MarginalStore::fromProvider(m.graph.visible(), o.budget, nullptr);
  RecoveryReport rep = analyze_recoverability(m.graph, init, make_rules(o, m), cfg);
  log_report(rep, m.names);
  json j = report_to_json(rep);
  j["config"] = config_json(cfg, o.budget);
  if (out.empty()) std::cout << j.dump(2) << "\n";
  else write_json_file(out, j);
  return rep.missing_pairs.empty() ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------- learn

struct LearnOpts {
  std::string model, samples, plan, out_dir = "out";
  SchedOpts sched;
  double fit_tol = 1e-8;
  int fit_iters = 50000;
};

int cmd_learn(const LearnOpts& o) {
  auto t0 = Clock::now();
  json timings = json::object();
  ModelFile m = model_from_json(read_json_file(o.model));
  const Graph& g = m.graph;
  const bool empirical = !o.samples.empty();
  MarginalStore::Provider provider;
  SampleSet samples;
  if (empirical) {
    std::ifstream in(o.samples);
    if (!in) throw Error(ErrorKind::Validation, "cannot open " + o.samples);
    samples = read_samples_csv(in);
    if (make_set(samples.visible_scope) != g.visible())
      throw Error(ErrorKind::Validation, "samples header does not match the visible nodes");
    provider = [&samples](const NodeSet& X) { return empirical_marginal(samples, X); };
  } else {
    if (!m.has_params) throw Error(ErrorKind::Validation, "exact marginals need model parameters");
    provider = [&g, &m](const NodeSet& X) { return exact_marginal(g, m.params, X); };
  }
  timings["load"] = seconds_since(t0);

  SchedulerConfig cfg = make_config(o.sched, empirical);
  LabelRuleSet rules = make_rules(o.sched, m);
  json pj;
  int budget = o.sched.budget;
  if (!o.plan.empty()) {
    pj = read_json_file(o.plan);
    if (pj.contains("budget") && o.sched.budget_flag->count() == 0) budget = pj.at("budget").get<int>();
  }
  MarginalStore init = MarginalStore::fromProvider(g.visible(), budget, provider);
  auto t1 = Clock::now();
  std::pair<MarginalStore, RecoveryReport> result;
  try {
    if (!o.plan.empty()) {
      std::vector<RecoveryStep> steps;
      for (const auto& s : pj.at("steps")) steps.push_back(step_from_json(s));
      if (pj.contains("rules")) {
        rules.mode = LabelRuleSet::Mode::Explicit;
        for (const auto& r : pj.at("rules")) rules.rules.push_back(rule_from_json(r));
      }
      result = execute_plan(g, init, steps, rules, cfg);
    } else {
      result = run_sequential(g, init, rules, cfg);
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Inconsistency) throw;
    spdlog::error("{}", e.what());
    return kExitInconsistent;
  }
  auto& [store, rep] = result;
  timings["recover"] = seconds_since(t1);
  log_report(rep, m.names);

  fs::create_directories(o.out_dir);
  json report = report_to_json(rep);
  report["config"] = config_json(cfg, budget);
  write_json_file((fs::path(o.out_dir) / "report.json").string(), report);

  json tables = json::array();
  for (Node v : g.nodes())
    if (store.covers(NodeSet{v})) tables.push_back(table_to_json(store.query({v})));
  for (const Edge& e : rep.recovered_pairs) tables.push_back(table_to_json(store.query({e.first, e.second})));
  write_json_file((fs::path(o.out_dir) / "tables.json").string(), {{"tables", tables}});

  bool converged = false;
  std::vector<std::string> outputs{"report.json", "tables.json"};
  if (rep.missing_pairs.empty()) {
    auto t2 = Clock::now();
    MomentTargets targets = moments_from_store(store, g);
    FitOptions fo;
    fo.tol = o.fit_tol;
    fo.max_iters = o.fit_iters;
    try {
      FitResult fit = fit_from_moments(g, targets, fo);
      converged = fit.converged;
      write_json_file((fs::path(o.out_dir) / "fit.json").string(), fit_to_json(fit));
      outputs.push_back("fit.json");
      spdlog::info("MLE {} after {} iterations (gradient {:.3g})", fit.converged ? "converged" : "stopped",
                   fit.iterations, fit.final_gradient_norm);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Boundary) throw;
      spdlog::error("MLE skipped: {}", e.what());
    }
    timings["fit"] = seconds_since(t2);
  }
  json manifest = {{"command", "learn"},
                   {"inputs", {o.model}},
                   {"samples", o.samples},
                   {"plan", o.plan},
                   {"seeds", json::array()},
                   {"config", config_json(cfg, budget)},
                   {"outputs", outputs},
                   {"timings", timings}};
  write_json_file((fs::path(o.out_dir) / "manifest.json").string(), manifest);
  if (!rep.missing_pairs.empty()) return kExitPartial;
  return converged ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------- verify

int cmd_verify(const std::string& model_path, const std::string& tables_path, const std::string& fit_path,
               double tv_tol, double param_tol) {
  ModelFile m = model_from_json(read_json_file(model_path));
  if (!m.has_params) throw Error(ErrorKind::Validation, "verification needs the true parameters");
  const Graph& g = m.graph;
  json tj = read_json_file(tables_path);
  const json& list = tj.is_array() ? tj : tj.at("tables");
  if (list.empty()) throw Error(ErrorKind::Validation, "tables file holds no tables");
  GMParams truth = canonical_params(g, m.params);
  bool ok = true;
  double worst_tv = 0;
  for (const auto& item : list) {
    FactorTable t = table_from_json(item);
    for (Node v : t.scope())
      if (!g.contains(v)) throw Error(ErrorKind::Validation, "table mentions unknown node " + std::to_string(v));
    double tv = table_distance(t.canonical(), exact_marginal(g, truth, t.scopeSet()));
    worst_tv = std::max(worst_tv, tv);
    if (tv > tv_tol) {
      ok = false;
      std::string scope;
      for (Node v : t.scopeSet()) scope += (scope.empty() ? "" : ",") + node_name(m.names, v);
      spdlog::error("table {{{}}} off by {:.3g} TV", scope, tv);
    }
  }
  std::cout << "tables: " << list.size() << " checked, worst TV " << worst_tv << "\n";
  if (!fit_path.empty()) {
    FitResult fit = fit_from_json(read_json_file(fit_path));
    double worst = 0;
    for (const auto& [e, b] : truth.beta) {
      auto it = fit.params.beta.find(e);
      if (it == fit.params.beta.end()) throw Error(ErrorKind::Validation, "fit lacks an edge coupling");
      worst = std::max(worst, std::abs(it->second - b));
    }
    for (const auto& [v, c] : truth.gamma) {
      auto it = fit.params.gamma.find(v);
      if (it == fit.params.gamma.end()) throw Error(ErrorKind::Validation, "fit lacks a node field");
      worst = std::max(worst, std::abs(it->second - c));
    }
    std::cout << "params: worst abs error " << worst << "\n";
    if (worst > param_tol) {
      ok = false;
      spdlog::error("parameter error {:.3g} above {:.3g}", worst, param_tol);
    }
  }
  std::cout << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kExitOk : kExitVerifyFailed;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("lseq");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("LSEQ_LOG_LEVEL");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Sequential local learning of latent pairwise binary models"};
  app.require_subcommand(1);

  GenerateOpts gen;
  auto* g = app.add_subcommand("generate", "Write a model file");
  g->add_option("--kind", gen.kind, "grid|crbm|regular|custom");
  g->add_option("--rows", gen.rows);
  g->add_option("--cols", gen.cols);
  g->add_option("--N", gen.crbm.visible_rows, "CRBM visible rows");
  g->add_option("--M", gen.crbm.visible_cols, "CRBM visible columns");
  g->add_option("--n", gen.crbm.filter_rows, "CRBM filter rows");
  g->add_option("--m", gen.crbm.filter_cols, "CRBM filter columns");
  g->add_option("--stride", gen.crbm.stride);
  g->add_option("--nodes", gen.regular.node_count);
  g->add_option("--degree", gen.regular.degree);
  g->add_option("--latent", gen.regular.latent_count);
  g->add_option("--input", gen.input, "Structure file for --kind custom");
  g->add_option("--seed", gen.seed);
  g->add_option("--lo", gen.lo, "Smallest coupling magnitude");
  g->add_option("--hi", gen.hi, "Largest coupling magnitude");
  g->add_flag("--attractive", gen.attractive, "Positive couplings only");
  g->add_flag("--structure-only", gen.structure_only, "Omit parameters");
  g->add_option("--out", gen.out);

  std::string s_model, s_out = "samples.csv";
  std::size_t s_n = 100000;
  std::uint64_t s_seed = 0;
  auto* s = app.add_subcommand("sample", "Draw visible samples from a model");
  s->add_option("--model", s_model)->required();
  s->add_option("--n", s_n)->check(CLI::PositiveNumber);
  s->add_option("--seed", s_seed);
  s->add_option("--out", s_out);

  std::string a_model, a_out;
  SchedOpts a_opts;
  auto* a = app.add_subcommand("analyze", "Structure-only recoverability analysis");
  a->add_option("--model", a_model)->required();
  add_sched_flags(a, a_opts);
  a->add_option("--out", a_out);

  LearnOpts l;
  auto* le = app.add_subcommand("learn", "Recover marginals and fit parameters");
  le->add_option("--model", l.model)->required();
  le->add_option("--samples", l.samples, "Samples CSV (exact marginals when omitted)");
  le->add_option("--plan", l.plan, "Scripted plan (JSON)");
  le->add_option("--out", l.out_dir);
  le->add_option("--fit-tol", l.fit_tol);
  le->add_option("--fit-iters", l.fit_iters);
  le->add_option("--fallback-mass", l.sched.fallback_mass);
  add_sched_flags(le, l.sched);

  std::string v_model, v_tables, v_fit;
  double v_tv = 1e-6, v_param = 1e-4;
  auto* v = app.add_subcommand("verify", "Compare learned output with the true model");
  v->add_option("--model", v_model)->required();
  v->add_option("--tables", v_tables)->required();
  v->add_option("--params", v_fit, "fit.json from learn");
  v->add_option("--tv-tol", v_tv);
  v->add_option("--param-tol", v_param);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (g->parsed()) return cmd_generate(gen);
    if (s->parsed()) return cmd_sample(s_model, s_n, s_seed, s_out);
    if (a->parsed()) return cmd_analyze(a_model, a_opts, a_out);
    if (le->parsed()) return cmd_learn(l);
    if (v->parsed()) return cmd_verify(v_model, v_tables, v_fit, v_tv, v_param);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.kind() == ErrorKind::Inconsistency ? kExitInconsistent : kExitInput;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitInput;
  }
  return kExitInput;
}
