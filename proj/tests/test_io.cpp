#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "lseq/instances.hpp"
#include "lseq/io.hpp"

using namespace lseq;

namespace {

template <class Fn>
std::optional<ErrorKind> kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("models round-trip") {
  ModelFile m;
  m.graph = make_grid(3, 4);
  m.params = random_params(m.graph, 0.2, 2.0, 3);
  m.has_params = true;
  for (int v = 0; v < 12; ++v) m.names.push_back(std::string(1, static_cast<char>('a' + v)));
  json j = model_to_json(m);
  ModelFile back = model_from_json(json::parse(j.dump()));
  CHECK(back.graph.edges() == m.graph.edges());
  CHECK(back.graph.visible() == m.graph.visible());
  CHECK(back.params.beta == m.params.beta);
  CHECK(back.params.gamma == m.params.gamma);
  CHECK(back.names == m.names);
  CHECK(model_to_json(back) == j);

  ModelFile bare;
  bare.graph = m.graph;
  ModelFile b2 = model_from_json(model_to_json(bare));
  CHECK_FALSE(b2.has_params);
  CHECK(node_name(b2.names, 5) == "5");
  CHECK(node_name(m.names, 5) == "f");
}

TEST_CASE("malformed models are validation errors") {
  json good = model_to_json({make_grid(3, 3), {}, false, {}});
  auto bad = [&](auto edit) {
    json j = good;
    edit(j);
    return kind_of([&] { model_from_json(j); });
  };
  CHECK(bad([](json& j) { j.erase("nodes"); }) == ErrorKind::Validation);
  CHECK(bad([](json& j) { j["nodes"] = 0; }) == ErrorKind::Validation);
  CHECK(bad([](json& j) { j["nodes"] = "nine"; }) == ErrorKind::Validation);
  CHECK(bad([](json& j) { j["edges"][0] = {0, 1, 2}; }) == ErrorKind::Validation);
  CHECK(bad([](json& j) { j["edges"].push_back({0, 0}); }) == ErrorKind::Validation);
  CHECK(bad([](json& j) { j["names"] = {"a"}; }) == ErrorKind::Validation);
  CHECK(bad([](json& j) { j["beta"] = {{"0_1", 1.0}}; j["gamma"] = json::object(); }) == ErrorKind::Validation);
  CHECK(bad([](json& j) { j["beta"] = json::object(); j["gamma"] = json::object(); }) == ErrorKind::Validation);
}

TEST_CASE("tables, rules and steps round-trip") {
  FactorTable t({3, 1}, {0.1, 0.2, 0.3, 0.4});
  FactorTable tb = table_from_json(table_to_json(t));
  CHECK(tb.scope() == t.scope());
  CHECK(tb.values() == t.values());
  CHECK(kind_of([] { table_from_json({{"scope", {0}}, {"values", {0.5, 0.6}}}); }) == ErrorKind::Validation);
  CHECK(kind_of([] { table_from_json({{"scope", {0}}}); }) == ErrorKind::Validation);

  LabelRule r{7, 2, -1, {1, 5}};
  LabelRule rb = rule_from_json(rule_to_json(r));
  CHECK(rb.target == 7);
  CHECK(rb.reference == 2);
  CHECK(rb.preference == -1);
  CHECK(rb.condition_set == NodeSet{1, 5});
  CHECK(kind_of([] { rule_from_json({{"target", 1}, {"reference", 2}, {"preference", 0}}); }) ==
        ErrorKind::Validation);

  RecoveryStep s;
  s.kind = StepKind::LinearView;
  s.center = 6;
  s.anchor = 1;
  s.block = {2, 3};
  s.conditioned_on = {0, 10};
  s.inputs = {{0, 1, 6}, {1, 2, 3}};
  s.output = {0, 1, 2, 3, 6};
  s.rules = {r};
  s.round = 2;
  json j = step_to_json(s);
  CHECK(step_to_json(step_from_json(j)) == j);
  CHECK(kind_of([] { step_from_json({{"kind", "Bogus"}}); }) == ErrorKind::Validation);
}

TEST_CASE("fit results round-trip") {
  FitResult f;
  f.params = random_params(make_grid(3, 3), 0.2, 2.0, 1);
  f.final_gradient_norm = 3e-9;
  f.iterations = 12;
  f.converged = true;
  FitResult b = fit_from_json(json::parse(fit_to_json(f).dump()));
  CHECK(b.params.beta == f.params.beta);
  CHECK(b.params.gamma == f.params.gamma);
  CHECK(b.iterations == 12);
  CHECK(b.converged);
  CHECK(b.final_gradient_norm == 3e-9);
}

TEST_CASE("samples round-trip through csv") {
  Graph g = make_grid(3, 3);
  SampleSet s = sample(g, random_params(g, 0.2, 2.0, 2), 200, 5);
  std::stringstream buf;
  write_samples_csv(buf, s);
  SampleSet back = read_samples_csv(buf);
  CHECK(back.visible_scope == s.visible_scope);
  CHECK(back.count == s.count);
  CHECK(back.data == s.data);

  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return kind_of([&] { read_samples_csv(in); });
  };
  CHECK(parse("") == ErrorKind::Validation);
  CHECK(parse("0,x\n1,0\n") == ErrorKind::Validation);
  CHECK(parse("0,1\n1,2\n") == ErrorKind::Validation);
  CHECK(parse("0,1\n1\n") == ErrorKind::Validation);
  CHECK_FALSE(parse("0,1\n1,0\n0,0\n").has_value());
}

TEST_CASE("json files") {
  auto dir = std::filesystem::temp_directory_path() / "lseq_test_io";
  std::filesystem::create_directories(dir);
  std::string path = (dir / "m.json").string();
  json j = {{"x", 1}};
  write_json_file(path, j);
  CHECK(read_json_file(path) == j);
  {
    std::ofstream(path) << "{not json";
  }
  CHECK(kind_of([&] { read_json_file(path); }) == ErrorKind::Validation);
  CHECK(kind_of([&] { read_json_file((dir / "absent.json").string()); }) == ErrorKind::Validation);
  std::filesystem::remove_all(dir);
}
