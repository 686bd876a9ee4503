/*
 * Copyright 2026 The Fidelity Eval Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fidelity/serialization.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "fidelity/errors.h"

namespace fidelity {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Json OptionalNumber(const std::optional<double>& value) {
  return value ? Json(*value) : Json(nullptr);
}

Json BoundToJson(double bound) {
  return std::isinf(bound) ? Json(nullptr) : Json(bound);
}

double BoundFromJson(const Json& json, double infinite_value) {
  return json.is_null() ? infinite_value : json.get<double>();
}

std::string OptionalCsv(const std::optional<double>& value) {
  return value ? FormatDouble(*value) : std::string();
}

std::string FeatureSetCsv(const FeatureSet& features) {
  std::string out;
  for (const int f : features) {
    if (!out.empty()) out += ' ';
    out += std::to_string(f);
  }
  return out;
}

Json NodeToJson(const DecisionTree& tree, int index) {
  const TreeNode& node = tree.node(index);
  if (node.is_leaf()) return {{"leaf", node.value}, {"cover", node.cover}};
  return {{"feature", node.feature},
          {"threshold", node.threshold},
          {"cover", node.cover},
          {"left", NodeToJson(tree, node.left)},
          {"right", NodeToJson(tree, node.right)}};
}

int NodeFromJson(const Json& json, std::vector<TreeNode>& nodes) {
  const int index = static_cast<int>(nodes.size());
  nodes.emplace_back();
  const int64_t cover = json.value("cover", int64_t{0});
  if (json.contains("leaf")) {
    nodes[index].value = json.at("leaf").get<double>();
    nodes[index].cover = cover;
    return index;
  }
  const int feature = json.at("feature").get<int>();
  if (feature < 0) throw DataError("negative split feature in model file");
  const double threshold = json.at("threshold").get<double>();
  const int left = NodeFromJson(json.at("left"), nodes);
  const int right = NodeFromJson(json.at("right"), nodes);
  TreeNode& node = nodes[index];
  node.feature = feature;
  node.threshold = threshold;
  node.left = left;
  node.right = right;
  node.cover = cover;
  return index;
}

DecisionTree TreeFromJson(const Json& json, Task task, int num_features) {
  std::vector<TreeNode> nodes;
  NodeFromJson(json.at("root"), nodes);
  return DecisionTree(std::move(nodes), task, num_features);
}

template <typename Fn>
auto Guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed ") + what + ": " + e.what());
  }
}

Json SkipCounts(const std::map<std::string, int>& counts) {
  Json json = Json::object();
  for (const auto& [reason, count] : counts) json[reason] = count;
  return json;
}

}  // namespace

std::string FormatDouble(double value) { return Json(value).dump(); }

Json DatasetToJson(const Dataset& dataset) {
  Json schema = Json::array();
  for (const auto& f : dataset.schema) {
    schema.push_back({{"name", f.name},
                      {"kind", FeatureKindName(f.kind)},
                      {"observed_min", f.observed_min},
                      {"observed_max", f.observed_max},
                      {"observed_std", f.observed_std},
                      {"quartile_bounds", f.quartile_bounds},
                      {"source_categorical", f.source_categorical
                                                 ? Json(*f.source_categorical)
                                                 : Json(nullptr)}});
  }
  return {{"schema", schema},
          {"rows", dataset.rows},
          {"targets", dataset.targets},
          {"task", TaskName(dataset.task)}};
}

Dataset DatasetFromJson(const Json& json) {
  return Guarded("dataset", [&] {
    Dataset dataset;
    for (const auto& f : json.at("schema")) {
      FeatureSchema feature;
      feature.name = f.at("name").get<std::string>();
      feature.kind = ParseFeatureKind(f.at("kind").get<std::string>());
      feature.observed_min = f.at("observed_min").get<double>();
      feature.observed_max = f.at("observed_max").get<double>();
      feature.observed_std = f.at("observed_std").get<double>();
      feature.quartile_bounds = f.at("quartile_bounds").get<std::array<double, 3>>();
      if (f.contains("source_categorical") && !f.at("source_categorical").is_null()) {
        feature.source_categorical = f.at("source_categorical").get<std::string>();
      }
      dataset.schema.push_back(std::move(feature));
    }
    dataset.rows = json.at("rows").get<std::vector<Instance>>();
    dataset.targets = json.at("targets").get<std::vector<double>>();
    try {
      dataset.task = ParseTask(json.at("task").get<std::string>());
    } catch (const UsageError& e) {
      throw DataError(e.what());
    }
    dataset.Validate();
    return dataset;
  });
}

Json ModelToJson(const Model& model) {
  if (const auto* tree = std::get_if<DecisionTree>(&model)) {
    return {{"kind", "tree"},
            {"task", TaskName(tree->task())},
            {"num_features", tree->num_features()},
            {"root", NodeToJson(*tree, 0)}};
  }
  const auto& ensemble = std::get<TreeEnsemble>(model);
  Json trees = Json::array();
  for (const auto& tree : ensemble.trees) trees.push_back({{"root", NodeToJson(tree, 0)}});
  return {{"kind", "ensemble"},
          {"task", TaskName(ensemble.task)},
          {"num_features", ensemble.num_features},
          {"learning_rate", ensemble.learning_rate},
          {"base_score", ensemble.base_score},
          {"trees", trees}};
}

Model ModelFromJson(const Json& json) {
  return Guarded("model", [&]() -> Model {
    Task task;
    try {
      task = ParseTask(json.at("task").get<std::string>());
    } catch (const UsageError& e) {
      throw DataError(e.what());
    }
    const int num_features = json.at("num_features").get<int>();
    const std::string kind = json.at("kind").get<std::string>();
    if (kind == "tree") return TreeFromJson(json, task, num_features);
    if (kind != "ensemble") throw DataError("unknown model kind '" + kind + "'");
    TreeEnsemble ensemble;
    ensemble.task = task;
    ensemble.num_features = num_features;
    ensemble.learning_rate = json.at("learning_rate").get<double>();
    ensemble.base_score = json.at("base_score").get<double>();
    for (const auto& tree : json.at("trees")) {
      ensemble.trees.push_back(TreeFromJson(tree, Task::kRegression, num_features));
    }
    return ensemble;
  });
}

Json IntervalsToJson(const FeatureIntervalMap& intervals) {
  Json json = Json::object();
  for (const auto& [feature, interval] : intervals) {
    json[std::to_string(feature)] = {BoundToJson(interval.lo), BoundToJson(interval.hi)};
  }
  return json;
}

FeatureIntervalMap IntervalsFromJson(const Json& json) {
  return Guarded("intervals", [&] {
    FeatureIntervalMap intervals;
    for (const auto& [key, bounds] : json.items()) {
      intervals[std::stoi(key)] = {BoundFromJson(bounds.at(0), -kInf),
                                   BoundFromJson(bounds.at(1), kInf)};
    }
    return intervals;
  });
}

Json ExplanationToJson(const Explanation& explanation) {
  return {{"weights", explanation.weights},
          {"intervals", explanation.intervals ? IntervalsToJson(*explanation.intervals)
                                              : Json(nullptr)},
          {"base_value", OptionalNumber(explanation.base_value)},
          {"explained_output", explanation.explained_output}};
}

Explanation ExplanationFromJson(const Json& json) {
  return Guarded("explanation", [&] {
    Explanation explanation;
    explanation.weights = json.at("weights").get<std::vector<double>>();
    if (json.contains("intervals") && !json.at("intervals").is_null()) {
      explanation.intervals = IntervalsFromJson(json.at("intervals"));
    }
    if (json.contains("base_value") && !json.at("base_value").is_null()) {
      explanation.base_value = json.at("base_value").get<double>();
    }
    explanation.explained_output = json.at("explained_output").get<double>();
    return explanation;
  });
}

Json Phase1ReportToJson(const Phase1Report& report) {
  Json records = Json::array();
  for (const auto& r : report.records) {
    records.push_back({{"instance_id", r.instance_id},
                       {"recall", OptionalNumber(r.recall)},
                       {"precision", OptionalNumber(r.precision)},
                       {"n_used", r.n_used},
                       {"true_feature_count", r.true_feature_count},
                       {"skip_reason", r.skip_reason ? Json(*r.skip_reason)
                                                     : Json(nullptr)}});
  }
  return {{"records", records},
          {"mean_recall", OptionalNumber(report.mean_recall)},
          {"mean_precision", OptionalNumber(report.mean_precision)},
          {"skipped", SkipCounts(report.skipped)}};
}

Json Phase2ReportToJson(const DecileSearchResult& deciles,
                        const std::optional<BinSearchResult>& bins) {
  Json per_d = Json::object();
  for (int d = 1; d <= kNumDeciles; ++d) {
    per_d[std::to_string(d)] = deciles.per_d_scores[d - 1];
  }
  Json skipped = Json::object();
  skipped["decile_search"] = SkipCounts(deciles.skipped);
  Json json = {{"per_d_scores", per_d},
               {"optimal_d", deciles.optimal_d},
               {"decile_evaluated", deciles.evaluated},
               {"per_p_distances", nullptr},
               {"optimal_p", nullptr}};
  if (bins) {
    Json per_p = Json::object();
    for (size_t j = 0; j < bins->candidate_ps.size(); ++j) {
      per_p[FormatDouble(bins->candidate_ps[j])] = bins->per_p_distances[j];
    }
    json["per_p_distances"] = per_p;
    json["optimal_p"] = bins->optimal_p;
    json["bin_evaluated"] = bins->evaluated;
    skipped["bin_search"] = SkipCounts(bins->skipped);
  }
  json["skipped"] = skipped;
  return json;
}

Json Phase3ReportToJson(const Phase3Report& report) {
  Json records = Json::array();
  for (const auto& r : report.records) {
    records.push_back(
        {{"instance_id", r.instance_id},
         {"supporting", OptionalNumber(r.supporting)},
         {"contrary", OptionalNumber(r.contrary)},
         {"y_original", r.y_original},
         {"selected_features", r.selected_features},
         {"skipped_features", r.skipped_features},
         {"supporting_excluded", r.supporting_excluded ? Json(*r.supporting_excluded)
                                                       : Json(nullptr)},
         {"contrary_excluded", r.contrary_excluded ? Json(*r.contrary_excluded)
                                                   : Json(nullptr)}});
  }
  return {{"records", records},
          {"mean_supporting", OptionalNumber(report.mean_supporting)},
          {"mean_contrary", OptionalNumber(report.mean_contrary)},
          {"excluded", SkipCounts(report.excluded)}};
}

Json ValidationToJson(const Phase2Validation& validation) {
  Json rows = Json::array();
  for (const auto& r : validation.rows) {
    rows.push_back({{"instance_id", r.instance_id},
                    {"recall", OptionalNumber(r.recall)},
                    {"precision", OptionalNumber(r.precision)},
                    {"supporting", OptionalNumber(r.supporting)},
                    {"contrary", OptionalNumber(r.contrary)}});
  }
  return {{"rows", rows},
          {"mean_recall", OptionalNumber(validation.phase1.mean_recall)},
          {"mean_precision", OptionalNumber(validation.phase1.mean_precision)},
          {"mean_supporting", OptionalNumber(validation.phase3.mean_supporting)},
          {"mean_contrary", OptionalNumber(validation.phase3.mean_contrary)},
          {"skipped", SkipCounts(validation.phase1.skipped)},
          {"excluded", SkipCounts(validation.phase3.excluded)}};
}

std::string Phase1ReportToCsv(const Phase1Report& report) {
  std::ostringstream out;
  out << "instance_id,recall,precision,n_used,true_feature_count,skip_reason\n";
  for (const auto& r : report.records) {
    out << r.instance_id << ',' << OptionalCsv(r.recall) << ','
        << OptionalCsv(r.precision) << ',' << r.n_used << ','
        << r.true_feature_count << ',' << r.skip_reason.value_or("") << '\n';
  }
  return out.str();
}

std::string Phase2CurvesToCsv(const DecileSearchResult& deciles,
                              const std::optional<BinSearchResult>& bins) {
  std::ostringstream out;
  out << "curve,parameter,value\n";
  for (int d = 1; d <= kNumDeciles; ++d) {
    out << "decile_f1," << d << ',' << FormatDouble(deciles.per_d_scores[d - 1])
        << '\n';
  }
  if (bins) {
    for (size_t j = 0; j < bins->candidate_ps.size(); ++j) {
      out << "bin_distance," << FormatDouble(bins->candidate_ps[j]) << ','
          << FormatDouble(bins->per_p_distances[j]) << '\n';
    }
  }
  return out.str();
}

std::string Phase3ReportToCsv(const Phase3Report& report) {
  std::ostringstream out;
  out << "instance_id,supporting,contrary,y_original,selected_features,"
         "skipped_features,supporting_excluded,contrary_excluded\n";
  for (const auto& r : report.records) {
    out << r.instance_id << ',' << OptionalCsv(r.supporting) << ','
        << OptionalCsv(r.contrary) << ',' << FormatDouble(r.y_original) << ','
        << FeatureSetCsv(r.selected_features) << ','
        << FeatureSetCsv(r.skipped_features) << ','
        << r.supporting_excluded.value_or("") << ','
        << r.contrary_excluded.value_or("") << '\n';
  }
  return out.str();
}

std::string ReadTextFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void WriteTextFile(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << content;
  if (!out) throw DataError("failed writing '" + path + "'");
}

Json ReadJsonFile(const std::string& path) {
  const std::string text = ReadTextFile(path);
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void WriteJsonFile(const std::string& path, const Json& json) {
  WriteTextFile(path, json.dump(2) + "\n");
}

}  // namespace fidelity
