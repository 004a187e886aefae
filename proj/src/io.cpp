#include "lseq/io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace lseq {

namespace {

std::string edge_key(const Edge& e) { return std::to_string(e.first) + "-" + std::to_string(e.second); }

Edge parse_edge_key(const std::string& k) {
  auto dash = k.find('-');
  if (dash == std::string::npos) throw Error(ErrorKind::Validation, "bad edge key '" + k + "'");
  try {
    return make_edge(std::stoi(k.substr(0, dash)), std::stoi(k.substr(dash + 1)));
  } catch (const std::exception&) {
    throw Error(ErrorKind::Validation, "bad edge key '" + k + "'");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

// json::at and get throw their own exception types; present them as validation errors.
template <class Fn>
auto guarded(const char* what, Fn fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, std::string(what) + ": " + e.what());
  }
}

}  // namespace

json graph_to_json(const Graph& g) {
  json edges = json::array();
  for (const Edge& e : g.edges()) edges.push_back({e.first, e.second});
  return {{"nodes", g.idSpace()}, {"edges", edges}, {"visible", g.visible()}};
}

json params_to_json(const GMParams& p) {
  json beta = json::object(), gamma = json::object();
  for (const auto& [e, b] : p.beta) beta[edge_key(e)] = b;
  for (const auto& [v, c] : p.gamma) gamma[std::to_string(v)] = c;
  return {{"beta", beta}, {"gamma", gamma}};
}

GMParams params_from_json(const json& j) {
  return guarded("params", [&] {
    GMParams p;
    for (const auto& [k, v] : j.at("beta").items()) p.beta[parse_edge_key(k)] = v.get<double>();
    for (const auto& [k, v] : j.at("gamma").items()) p.gamma[std::stoi(k)] = v.get<double>();
    return p;
  });
}

json model_to_json(const ModelFile& m) {
  json j = graph_to_json(m.graph);
  if (m.has_params) {
    json p = params_to_json(m.params);
    j["beta"] = p["beta"];
    j["gamma"] = p["gamma"];
  }
  if (!m.names.empty()) j["names"] = m.names;
  return j;
}

ModelFile model_from_json(const json& j) {
  return guarded("model", [&] {
    ModelFile m;
    int n = j.at("nodes").get<int>();
    if (n <= 0) throw Error(ErrorKind::Validation, "model needs a positive node count");
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
      if (e.size() != 2) throw Error(ErrorKind::Validation, "edges must be pairs");
      edges.push_back({e[0].get<int>(), e[1].get<int>()});
    }
    m.graph = Graph(n, edges, j.at("visible").get<NodeSet>());
    if (j.contains("beta") || j.contains("gamma")) {
      m.params = params_from_json(j);
      validate_params(m.graph, m.params);
      m.has_params = true;
    }
    m.names = get_or<std::vector<std::string>>(j, "names", {});
    if (!m.names.empty() && static_cast<int>(m.names.size()) != n)
      throw Error(ErrorKind::Validation, "names must list every node");
    return m;
  });
}

json table_to_json(const FactorTable& t) { return {{"scope", t.scope()}, {"values", t.values()}}; }

FactorTable table_from_json(const json& j) {
  return guarded("table", [&] {
    return FactorTable(j.at("scope").get<std::vector<Node>>(), j.at("values").get<std::vector<double>>());
  });
}

json rule_to_json(const LabelRule& r) {
  return {{"target", r.target}, {"reference", r.reference}, {"preference", r.preference}, {"C", r.condition_set}};
}

LabelRule rule_from_json(const json& j) {
  return guarded("rule", [&] {
    LabelRule r;
    r.target = j.at("target").get<int>();
    r.reference = j.at("reference").get<int>();
    r.preference = get_or<int>(j, "preference", 1);
    if (r.preference != 1 && r.preference != -1)
      throw Error(ErrorKind::Validation, "rule preference must be +1 or -1");
    r.condition_set = make_set(get_or<NodeSet>(j, "C", {}));
    return r;
  });
}

json step_to_json(const RecoveryStep& s) {
  json rules = json::array();
  for (const auto& r : s.rules) rules.push_back(rule_to_json(r));
  json j = {{"kind", to_string(s.kind)}, {"C", s.conditioned_on}, {"inputs", s.inputs},
            {"output", s.output}, {"rules", rules}};
  if (s.center >= 0) j["center"] = s.center;
  if (!s.views.empty()) j["views"] = s.views;
  if (s.anchor >= 0) j["anchor"] = s.anchor;
  if (!s.block.empty()) j["S"] = s.block;
  if (!s.other.empty()) j["T"] = s.other;
  if (!s.view_map.empty()) {
    json vm = json::object();
    for (auto [i, v] : s.view_map) vm[std::to_string(i)] = v;
    j["view_map"] = vm;
  }
  if (s.family) {
    j["family"] = true;
    j["parent"] = s.parent;
    j["pool"] = s.pool;
    j["budget"] = s.budget;
  }
  if (s.round > 0) j["round"] = s.round;
  return j;
}

RecoveryStep step_from_json(const json& j) {
  return guarded("step", [&] {
    RecoveryStep s;
    s.kind = step_kind_from_string(j.at("kind").get<std::string>());
    s.conditioned_on = make_set(get_or<NodeSet>(j, "C", {}));
    s.inputs = get_or<std::vector<NodeSet>>(j, "inputs", {});
    s.output = get_or<NodeSet>(j, "output", {});
    if (j.contains("rules"))
      for (const auto& r : j.at("rules")) s.rules.push_back(rule_from_json(r));
    s.center = get_or<int>(j, "center", -1);
    s.views = get_or<std::vector<Node>>(j, "views", {});
    s.anchor = get_or<int>(j, "anchor", -1);
    s.block = make_set(get_or<NodeSet>(j, "S", {}));
    s.other = make_set(get_or<NodeSet>(j, "T", {}));
    if (j.contains("view_map"))
      for (const auto& [k, v] : j.at("view_map").items()) s.view_map[std::stoi(k)] = v.get<int>();
    s.family = get_or<bool>(j, "family", false);
    s.parent = get_or<int>(j, "parent", -1);
    s.pool = get_or<NodeSet>(j, "pool", {});
    s.budget = get_or<int>(j, "budget", 0);
    s.round = get_or<int>(j, "round", 0);
    return s;
  });
}

json report_to_json(const RecoveryReport& r) {
  json pairs = json::array(), missing = json::array(), steps = json::array(), errors = json::array();
  for (const Edge& e : r.recovered_pairs) pairs.push_back({{"pair", {e.first, e.second}}, {"round", r.pair_round.at(e)}});
  for (const Edge& e : r.missing_pairs) missing.push_back({e.first, e.second});
  for (const auto& s : r.steps) steps.push_back(step_to_json(s));
  for (const auto& e : r.errors) errors.push_back({{"round", e.round}, {"step", e.step}, {"message", e.message}});
  return {{"rounds_executed", r.rounds_executed},
          {"halt_reason", r.halt_reason},
          {"cond_mode", r.cond_mode},
          {"recovered_pairs", pairs},
          {"missing_pairs", missing},
          {"families_per_round", r.families_per_round},
          {"termination_bound", r.termination_bound},
          {"errors", errors},
          {"plan", {{"steps", steps}}}};
}

json fit_to_json(const FitResult& f) {
  json j = params_to_json(f.params);
  j["final_gradient_norm"] = f.final_gradient_norm;
  j["iterations"] = f.iterations;
  j["converged"] = f.converged;
  return j;
}

FitResult fit_from_json(const json& j) {
  return guarded("fit", [&] {
    FitResult f;
    f.params = params_from_json(j);
    f.final_gradient_norm = get_or<double>(j, "final_gradient_norm", 0.0);
    f.iterations = get_or<int>(j, "iterations", 0);
    f.converged = get_or<bool>(j, "converged", false);
    return f;
  });
}

void write_samples_csv(std::ostream& os, const SampleSet& s) {
  for (std::size_t k = 0; k < s.visible_scope.size(); ++k) os << (k ? "," : "") << s.visible_scope[k];
  os << "\n";
  std::string row;
  for (std::size_t r = 0; r < s.count; ++r) {
    row.clear();
    for (std::size_t k = 0; k < s.visible_scope.size(); ++k) {
      if (k) row += ',';
      row += static_cast<char>('0' + s.at(r, k));
    }
    os << row << "\n";
  }
}

SampleSet read_samples_csv(std::istream& is) {
  SampleSet s;
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorKind::Validation, "samples file is empty");
  std::stringstream header(line);
  std::string cell;
  while (std::getline(header, cell, ',')) {
    try {
      s.visible_scope.push_back(std::stoi(cell));
    } catch (const std::exception&) {
      throw Error(ErrorKind::Validation, "bad node id '" + cell + "' in samples header");
    }
  }
  const std::size_t width = s.visible_scope.size();
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t cols = 0;
    for (char ch : line) {
      if (ch == ',' || ch == '\r') continue;
      if (ch != '0' && ch != '1')
        throw Error(ErrorKind::Validation, "samples row " + std::to_string(s.count + 1) + " has a non-binary entry");
      s.data.push_back(static_cast<std::uint8_t>(ch - '0'));
      ++cols;
    }
    if (cols != width)
      throw Error(ErrorKind::Validation, "samples row " + std::to_string(s.count + 1) + " has the wrong width");
    ++s.count;
  }
  return s;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Validation, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Validation, "cannot write " + path);
  out << j.dump(2) << "\n";
}

std::string node_name(const std::vector<std::string>& names, Node v) {
  if (v >= 0 && v < static_cast<int>(names.size())) return names[v];
  return std::to_string(v);
}

}  // namespace lseq
