#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "lseq/mle.hpp"
#include "lseq/model.hpp"
#include "lseq/scheduler.hpp"

namespace lseq {

using json = nlohmann::json;

// Model files: {"nodes": n, "edges": [[i,j],...], "visible": [...],
//               "beta": {"i-j": b}, "gamma": {"i": g}, "names": [...]?}
struct ModelFile {
  Graph graph;
  GMParams params;
  bool has_params = false;
  std::vector<std::string> names;
};

json graph_to_json(const Graph& graph);
json params_to_json(const GMParams& params);
json model_to_json(const ModelFile& model);
ModelFile model_from_json(const json& j);

GMParams params_from_json(const json& j);

json table_to_json(const FactorTable& t);
FactorTable table_from_json(const json& j);

json rule_to_json(const LabelRule& r);
LabelRule rule_from_json(const json& j);

json step_to_json(const RecoveryStep& s);
RecoveryStep step_from_json(const json& j);

json report_to_json(const RecoveryReport& r);
json fit_to_json(const FitResult& f);
FitResult fit_from_json(const json& j);

/// CSV with a header of node ids and one 0/1 row per sample.
void write_samples_csv(std::ostream& os, const SampleSet& s);
SampleSet read_samples_csv(std::istream& is);

/// Reads and parses a JSON file; I/O and syntax problems become validation errors.
json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& j);

/// Human-readable name of a node ("a".."z" style names when the file provides them).
std::string node_name(const std::vector<std::string>& names, Node v);

}  // namespace lseq
