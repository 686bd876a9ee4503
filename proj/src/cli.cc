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

#include "fidelity/cli.h"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "fidelity/errors.h"
#include "fidelity/explainers.h"
#include "fidelity/models.h"
#include "fidelity/parallel.h"
#include "fidelity/phase1.h"
#include "fidelity/phase2.h"
#include "fidelity/phase3.h"
#include "fidelity/random.h"
#include "fidelity/tabular.h"
#include "fidelity/validation.h"

namespace fidelity {
namespace {

namespace fs = std::filesystem;

constexpr char kManifestFile[] = "manifest.json";
constexpr char kTrainFile[] = "train.json";
constexpr char kTestFile[] = "test.json";

constexpr uint64_t kBalanceStream = 1;
constexpr uint64_t kSplitStream = 2;
constexpr uint64_t kPhase1Stream = 3;
constexpr uint64_t kPhase2Stream = 4;
constexpr uint64_t kValidationStream = 5;
constexpr uint64_t kPhase3Stream = 6;

struct Flags {
  std::string config_path;
  std::string out_dir;
  std::optional<uint64_t> seed;
  std::optional<std::string> model;
  std::optional<std::string> explainer;
  std::optional<int> k;
  std::optional<int> d;
  std::optional<double> p;
  std::optional<int> repeats;
  std::optional<int> jobs;
  std::optional<std::string> data;
  std::optional<std::string> target;
  std::optional<std::string> task;
  std::optional<std::string> name;
  std::optional<double> split;
  std::optional<int> max_depth;
  bool balance = false;
  std::vector<std::string> runs;
};

struct RunSettings {
  std::string dataset_name;
  std::string data_path;
  std::string target_column;
  Task task = Task::kClassification;
  bool balance = false;
  double split_fraction = 0.7;
  uint64_t seed = 0;
  std::string model_kind;
  CartParams cart;
  GbtParams gbt;
  ExplainerConfig explainer;
  std::vector<double> candidate_ps;
  int grid_points = 100;
  std::optional<int> optimal_d;
  std::optional<double> optimal_p;
  double margin = kDefaultContraryMargin;
  int repeats = 10;
  int jobs = 0;
};

template <typename T>
std::optional<T> OptionalField(const Json& object, const char* key) {
  if (!object.contains(key) || object.at(key).is_null()) return std::nullopt;
  return object.at(key).get<T>();
}

Json ReadConfigFile(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("config file '" + path + "' does not exist");
  try {
    return Json::parse(ReadTextFile(path));
  } catch (const Json::exception& e) {
    throw UsageError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

std::string ResolveOutDir(const Flags& flags, const Json& file_config) {
  if (!flags.out_dir.empty()) return flags.out_dir;
  if (file_config.contains("output_dir") && file_config["output_dir"].is_string()) {
    return file_config["output_dir"].get<std::string>();
  }
  throw UsageError("no output directory: pass --out or set output_dir in --config");
}

// Configuration stored in the manifest: defaults, the stored snapshot,
// --config and the dataset/hyperparameter flags.
Json AssembleBaseConfig(const Flags& flags, const fs::path& out_dir,
                        const Json& file_config) {
  Json config = DefaultRunConfig();
  const fs::path manifest_path = out_dir / kManifestFile;
  if (fs::exists(manifest_path)) {
    const Json manifest = ReadJsonFile(manifest_path.string());
    if (manifest.contains("config")) config.merge_patch(manifest["config"]);
  }
  if (!file_config.is_null()) config.merge_patch(file_config);

  if (flags.seed) config["dataset"]["seed"] = *flags.seed;
  if (flags.data) config["dataset"]["path"] = *flags.data;
  if (flags.target) config["dataset"]["target_column"] = *flags.target;
  if (flags.task) config["dataset"]["task"] = *flags.task;
  if (flags.name) config["dataset"]["name"] = *flags.name;
  if (flags.split) config["dataset"]["split_fraction"] = *flags.split;
  if (flags.balance) config["dataset"]["balance"] = true;
  if (flags.max_depth) {
    const std::string kind = flags.model.value_or(config["model"].value("kind", "tree"));
    config["model"][kind]["max_depth"] = *flags.max_depth;
  }
  config["output_dir"] = out_dir.string();
  return config;
}

// Base configuration plus the selectors that apply to one invocation only.
Json ApplyCommandFlags(const Flags& flags, Json config) {
  if (flags.model) config["model"]["kind"] = *flags.model;
  if (flags.explainer) config["explainer"]["kind"] = *flags.explainer;
  if (flags.k) config["explainer"]["k_repeats"] = *flags.k;
  if (flags.d) config["phase3"]["optimal_d"] = *flags.d;
  if (flags.p) config["phase3"]["optimal_p"] = *flags.p;
  if (flags.repeats) config["phase3"]["repeats"] = *flags.repeats;
  if (flags.jobs) config["jobs"] = *flags.jobs;
  return config;
}

RunSettings ParseSettings(const Json& config) {
  RunSettings s;
  try {
    const Json& dataset = config.at("dataset");
    s.data_path = dataset.value("path", "");
    s.target_column = dataset.value("target_column", "");
    s.task = ParseTask(dataset.value("task", "classification"));
    s.balance = dataset.value("balance", false);
    s.split_fraction = dataset.value("split_fraction", 0.7);
    s.seed = dataset.value("seed", uint64_t{0});
    s.dataset_name = dataset.value("name", "");
    if (s.dataset_name.empty() && !s.data_path.empty()) {
      s.dataset_name = fs::path(s.data_path).stem().string();
    }

    const Json& model = config.at("model");
    s.model_kind = model.value("kind", "tree");
    if (s.model_kind != "tree" && s.model_kind != "ensemble") {
      throw UsageError("model kind must be 'tree' or 'ensemble', got '" +
                       s.model_kind + "'");
    }
    const Json tree = model.value("tree", Json::object());
    s.cart.max_depth = OptionalField<int>(tree, "max_depth");
    s.cart.min_samples_split = tree.value("min_samples_split", 2);
    s.cart.min_samples_leaf = tree.value("min_samples_leaf", 1);
    const Json ensemble = model.value("ensemble", Json::object());
    s.gbt.num_trees = ensemble.value("num_trees", 100);
    s.gbt.learning_rate = ensemble.value("learning_rate", 0.3);
    s.gbt.max_depth = ensemble.value("max_depth", 6);
    s.gbt.min_samples_leaf = ensemble.value("min_samples_leaf", 1);

    const Json& explainer = config.at("explainer");
    s.explainer.kind = ParseExplainerKind(explainer.value("kind", "tree_shapley"));
    s.explainer.k_repeats = explainer.value("k_repeats", 10);
    s.explainer.surrogate_samples = explainer.value("surrogate_samples", 1000);
    s.explainer.kernel_width = OptionalField<double>(explainer, "kernel_width");
    s.explainer.ridge_lambda = explainer.value("ridge_lambda", 1.0);
    s.explainer.Validate();

    const Json phase2 = config.value("phase2", Json::object());
    s.candidate_ps = phase2.value("candidate_ps", kDefaultCandidatePs);
    s.grid_points = phase2.value("grid_points", 100);

    const Json phase3 = config.value("phase3", Json::object());
    s.optimal_d = OptionalField<int>(phase3, "optimal_d");
    s.optimal_p = OptionalField<double>(phase3, "optimal_p");
    s.margin = phase3.value("margin", kDefaultContraryMargin);
    s.repeats = phase3.value("repeats", 10);
    s.jobs = config.value("jobs", 0);
  } catch (const Json::exception& e) {
    throw UsageError(std::string("invalid configuration: ") + e.what());
  }
  if (!(s.split_fraction > 0.0 && s.split_fraction < 1.0)) {
    throw UsageError("split fraction must lie in (0, 1)");
  }
  if (s.grid_points < 2) throw UsageError("grid_points must be at least 2");
  if (s.repeats < 1) throw UsageError("phase3 repeats must be at least 1");
  s.jobs = ResolveJobs(s.jobs);
  return s;
}

// Reads and updates the manifest of one output directory.
class Manifest {
 public:
  explicit Manifest(fs::path dir) : dir_(std::move(dir)) {
    const fs::path path = dir_ / kManifestFile;
    if (fs::exists(path)) json_ = ReadJsonFile(path.string());
    if (!json_.is_object()) json_ = Json::object();
    if (!json_.contains("steps")) json_["steps"] = Json::object();
  }

  const Json& json() const { return json_; }

  void RecordStep(const std::string& step, const Json& base_config,
                  const Json& step_config, const std::vector<std::string>& artifacts,
                  double seconds) {
    json_["tool_version"] = kToolVersion;
    json_["config"] = base_config;
    json_["config_hash"] = ConfigHash(base_config);
    json_["steps"][step] = {{"config", step_config},
                            {"config_hash", ConfigHash(step_config)},
                            {"artifacts", artifacts},
                            {"seconds", seconds}};
    std::set<std::string> all;
    for (const auto& [name, entry] : json_["steps"].items()) {
      for (const auto& artifact : entry["artifacts"]) {
        all.insert(artifact.get<std::string>());
      }
    }
    json_["artifacts"] = all;
    WriteJsonFile((dir_ / kManifestFile).string(), json_);
  }

 private:
  fs::path dir_;
  Json json_;
};

// Writes files into the output directory and remembers their names.
class ArtifactWriter {
 public:
  ArtifactWriter(fs::path dir, std::ostream& out) : dir_(std::move(dir)), out_(out) {}

  void WriteJson(const std::string& name, const fidelity::Json& json) {
    WriteJsonFile((dir_ / name).string(), json);
    Record(name);
  }

  void WriteText(const std::string& name, const std::string& text) {
    WriteTextFile((dir_ / name).string(), text);
    Record(name);
  }

  const std::vector<std::string>& names() const { return names_; }

 private:
  void Record(const std::string& name) {
    names_.push_back(name);
    out_ << "wrote " << (dir_ / name).string() << '\n';
  }

  fs::path dir_;
  std::ostream& out_;
  std::vector<std::string> names_;
};

fidelity::Json RequireJson(const fs::path& dir, const std::string& file,
                           const std::string& step) {
  const fs::path path = dir / file;
  if (!fs::exists(path)) {
    throw MissingPrerequisiteError("missing " + path.string() + ": run " + step +
                                   " first");
  }
  return ReadJsonFile(path.string());
}

fidelity::Json RunInfo(const RunSettings& s, const std::string& model_kind,
                       bool with_explainer) {
  fidelity::Json info = {{"dataset", s.dataset_name},
                         {"model", model_kind},
                         {"seed", s.seed}};
  info["explainer"] =
      with_explainer ? fidelity::Json(ExplainerKindName(s.explainer.kind))
                     : fidelity::Json("");
  if (with_explainer) info["k_repeats"] = s.explainer.k_repeats;
  return info;
}

std::string ExplainerSuffix(const RunSettings& s) {
  return std::string(ExplainerKindName(s.explainer.kind));
}

// Loaded train/test pair and one model.
struct Workspace {
  Dataset train;
  Dataset test;
  Model model = DecisionTree::Constant(0.0, Task::kRegression, 1);
};

Workspace LoadWorkspace(const fs::path& dir, const std::string& model_kind) {
  Workspace w;
  w.train = DatasetFromJson(RequireJson(dir, kTrainFile, "prep"));
  w.test = DatasetFromJson(RequireJson(dir, kTestFile, "prep"));
  w.model = ModelFromJson(RequireJson(dir, "model-" + model_kind + ".json",
                                      "train --model " + model_kind));
  if (NumFeatures(w.model) != static_cast<int>(w.train.num_features())) {
    throw DataError("model width does not match the prepared datasets");
  }
  return w;
}

void CommandPrep(const RunSettings& s, ArtifactWriter& writer, std::ostream& out) {
  if (s.data_path.empty()) throw UsageError("prep needs --data or dataset.path");
  if (s.target_column.empty()) {
    throw UsageError("prep needs --target or dataset.target_column");
  }
  if (s.balance && s.task != Task::kClassification) {
    throw UsageError("--balance applies to classification datasets only");
  }
  Dataset data = LoadCsv(s.data_path, s.target_column, s.task);
  if (s.balance) data = BalanceDownsample(data, DeriveSeed(s.seed, {kBalanceStream}));
  auto [train, test] =
      TrainTestSplit(data, s.split_fraction, DeriveSeed(s.seed, {kSplitStream}));
  out << "rows: " << data.num_rows() << " train: " << train.num_rows()
      << " test: " << test.num_rows() << '\n';
  writer.WriteJson(kTrainFile, DatasetToJson(train));
  writer.WriteJson(kTestFile, DatasetToJson(test));
}

void CommandTrain(const RunSettings& s, const fs::path& dir, ArtifactWriter& writer,
                  std::ostream& out) {
  const Dataset train = DatasetFromJson(RequireJson(dir, kTrainFile, "prep"));
  const Dataset test = DatasetFromJson(RequireJson(dir, kTestFile, "prep"));
  const Model model = s.model_kind == "tree" ? Model(FitCart(train, s.cart))
                                             : Model(FitGbt(train, s.gbt));
  const AccuracyReport accuracy = EvaluateAccuracy(model, test);
  fidelity::Json report = {{"run", RunInfo(s, s.model_kind, false)},
                           {"train_rows", train.num_rows()},
                           {"test_rows", test.num_rows()},
                           {"f1", nullptr},
                           {"mae", nullptr},
                           {"mape", nullptr},
                           {"mape_skipped", accuracy.mape_skipped}};
  if (accuracy.f1) report["f1"] = *accuracy.f1;
  if (accuracy.mae) report["mae"] = *accuracy.mae;
  if (accuracy.mape) report["mape"] = *accuracy.mape;
  if (const auto* tree = std::get_if<DecisionTree>(&model)) {
    report["depth"] = tree->max_depth();
  }
  if (accuracy.f1) out << "test f1: " << FormatDouble(*accuracy.f1) << '\n';
  if (accuracy.mape) out << "test mape: " << FormatDouble(*accuracy.mape) << '\n';
  writer.WriteJson("model-" + s.model_kind + ".json", ModelToJson(model));
  writer.WriteJson("accuracy-" + s.model_kind + ".json", report);
}

void CommandPhase1(const RunSettings& s, const fs::path& dir, ArtifactWriter& writer,
                   std::ostream& out) {
  const Workspace w = LoadWorkspace(dir, "tree");
  const Explainer explainer = MakeExplainer(w.model, w.train, s.explainer);
  const Phase1Report report =
      RunPhase1(std::get<DecisionTree>(w.model), explainer, w.test,
                {.k_repeats = s.explainer.k_repeats,
                 .seed = DeriveSeed(s.seed, {kPhase1Stream}),
                 .jobs = s.jobs});
  fidelity::Json json = Phase1ReportToJson(report);
  json["run"] = RunInfo(s, "tree", true);
  if (report.mean_recall) out << "mean recall: " << FormatDouble(*report.mean_recall) << '\n';
  if (report.mean_precision) {
    out << "mean precision: " << FormatDouble(*report.mean_precision) << '\n';
  }
  const std::string suffix = ExplainerSuffix(s);
  writer.WriteJson("phase1-" + suffix + ".json", json);
  writer.WriteText("phase1-" + suffix + ".csv", Phase1ReportToCsv(report));
}

void CommandPhase2(const RunSettings& s, const fs::path& dir, ArtifactWriter& writer,
                   std::ostream& out) {
  const Workspace w = LoadWorkspace(dir, "tree");
  const auto& tree = std::get<DecisionTree>(w.model);
  const Explainer explainer = MakeExplainer(w.model, w.train, s.explainer);
  const SearchOptions options{.k_repeats = s.explainer.k_repeats,
                              .seed = DeriveSeed(s.seed, {kPhase2Stream}),
                              .jobs = s.jobs,
                              .grid_points = s.grid_points};
  const DecileSearchResult deciles = DecileSearch(tree, explainer, w.test, options);
  std::optional<BinSearchResult> bins;
  if (!explainer.provides_intervals) {
    bins = BinSizeSearch(tree, explainer, w.test, s.candidate_ps, options);
  }
  out << "optimal d: " << deciles.optimal_d << '\n';
  if (bins) out << "optimal p: " << FormatDouble(bins->optimal_p) << '\n';

  Phase3Params params;
  params.optimal_d = deciles.optimal_d;
  if (bins) params.optimal_p = bins->optimal_p;
  params.k_repeats = s.explainer.k_repeats;
  params.perturbation_repeats = s.repeats;
  params.margin = s.margin;
  params.grid_points = s.grid_points;
  params.seed = DeriveSeed(s.seed, {kValidationStream});
  params.jobs = s.jobs;
  const Phase2Validation validation = ValidatePhase2(tree, explainer, w.test, params);

  const std::string suffix = ExplainerSuffix(s);
  fidelity::Json json = Phase2ReportToJson(deciles, bins);
  json["run"] = RunInfo(s, "tree", true);
  fidelity::Json validation_json = ValidationToJson(validation);
  validation_json["run"] = RunInfo(s, "tree", true);
  validation_json["optimal_d"] = params.optimal_d;
  validation_json["optimal_p"] =
      params.optimal_p ? fidelity::Json(*params.optimal_p) : fidelity::Json(nullptr);
  writer.WriteJson("phase2-" + suffix + ".json", json);
  writer.WriteText("phase2-curves-" + suffix + ".csv", Phase2CurvesToCsv(deciles, bins));
  writer.WriteJson("phase2-validation-" + suffix + ".json", validation_json);
}

void CommandPhase3(const RunSettings& s, const fs::path& dir, ArtifactWriter& writer,
                   std::ostream& out) {
  const Workspace w = LoadWorkspace(dir, s.model_kind);
  const Explainer explainer = MakeExplainer(w.model, w.train, s.explainer);
  std::optional<int> d = s.optimal_d;
  std::optional<double> p = s.optimal_p;
  const bool needs_p = !explainer.provides_intervals;
  const std::string suffix = ExplainerSuffix(s);
  if (!d || (needs_p && !p)) {
    const fs::path phase2_path = dir / ("phase2-" + suffix + ".json");
    if (!fs::exists(phase2_path)) {
      throw MissingPrerequisiteError("no decile range or bin size for the " + suffix +
                                     " explainer: run phase2 first or pass --d/--p");
    }
    const fidelity::Json phase2 = ReadJsonFile(phase2_path.string());
    try {
      if (!d) d = phase2.at("optimal_d").get<int>();
      if (!p) p = OptionalField<double>(phase2, "optimal_p");
    } catch (const Json::exception& e) {
      throw DataError("malformed " + phase2_path.string() + ": " + e.what());
    }
    if (needs_p && !p) {
      throw MissingPrerequisiteError("no bin size for the " + suffix +
                                     " explainer: run phase2 first or pass --d/--p");
    }
  }
  Phase3Params params;
  params.optimal_d = *d;
  if (needs_p) params.optimal_p = p;
  params.k_repeats = s.explainer.k_repeats;
  params.perturbation_repeats = s.repeats;
  params.margin = s.margin;
  params.grid_points = s.grid_points;
  params.seed = DeriveSeed(s.seed, {kPhase3Stream});
  params.jobs = s.jobs;
  const Phase3Report report = RunPhase3(w.model, explainer, w.test, params);

  fidelity::Json json = Phase3ReportToJson(report);
  json["run"] = RunInfo(s, s.model_kind, true);
  json["optimal_d"] = params.optimal_d;
  json["optimal_p"] =
      params.optimal_p ? fidelity::Json(*params.optimal_p) : fidelity::Json(nullptr);
  json["margin"] = params.margin;
  json["repeats"] = params.perturbation_repeats;
  if (report.mean_supporting) {
    out << "mean supporting: " << FormatDouble(*report.mean_supporting) << '\n';
  }
  if (report.mean_contrary) {
    out << "mean contrary: " << FormatDouble(*report.mean_contrary) << '\n';
  }
  const std::string stem = "phase3-" + suffix + "-" + s.model_kind;
  writer.WriteJson(stem + ".json", json);
  writer.WriteText(stem + ".csv", Phase3ReportToCsv(report));
}

// One aggregate row of the cross-run tables.
struct SummaryRow {
  std::string dataset;
  std::string model;
  std::string explainer;
  std::string phase;
  std::map<std::string, double> metrics;
  int count_skipped = 0;
};

const std::vector<std::string>& SummaryMetrics() {
  static const std::vector<std::string> kMetrics = {
      "f1",        "mae",          "mape",       "recall",     "precision",
      "optimal_d", "optimal_p",    "decile_f1",  "bin_distance", "supporting",
      "contrary"};
  return kMetrics;
}

int SumCounts(const fidelity::Json& counts) {
  int total = 0;
  for (const auto& [key, value] : counts.items()) {
    total += value.is_object() ? SumCounts(value) : value.get<int>();
  }
  return total;
}

void PutMetric(SummaryRow& row, const std::string& metric, const fidelity::Json& json,
               const char* key) {
  if (json.contains(key) && json.at(key).is_number()) {
    row.metrics[metric] = json.at(key).get<double>();
  }
}

std::optional<SummaryRow> SummarizeArtifact(const std::string& name,
                                            const fidelity::Json& json) {
  if (!json.contains("run")) return std::nullopt;
  SummaryRow row;
  const fidelity::Json& run = json.at("run");
  row.dataset = run.value("dataset", "");
  row.model = run.value("model", "");
  row.explainer = run.value("explainer", "");
  if (name.starts_with("accuracy-")) {
    row.phase = "accuracy";
    PutMetric(row, "f1", json, "f1");
    PutMetric(row, "mae", json, "mae");
    PutMetric(row, "mape", json, "mape");
    row.count_skipped = json.value("mape_skipped", 0);
  } else if (name.starts_with("phase1-")) {
    row.phase = "phase1";
    PutMetric(row, "recall", json, "mean_recall");
    PutMetric(row, "precision", json, "mean_precision");
    row.count_skipped = SumCounts(json.at("skipped"));
  } else if (name.starts_with("phase2-validation-")) {
    return std::nullopt;
  } else if (name.starts_with("phase2-")) {
    row.phase = "phase2";
    PutMetric(row, "optimal_d", json, "optimal_d");
    PutMetric(row, "optimal_p", json, "optimal_p");
    const int d = json.at("optimal_d").get<int>();
    row.metrics["decile_f1"] = json.at("per_d_scores").at(std::to_string(d)).get<double>();
    if (json.at("optimal_p").is_number()) {
      const double p = json.at("optimal_p").get<double>();
      row.metrics["bin_distance"] =
          json.at("per_p_distances").at(FormatDouble(p)).get<double>();
    }
    row.count_skipped = SumCounts(json.at("skipped"));
  } else if (name.starts_with("phase3-")) {
    row.phase = "phase3";
    PutMetric(row, "supporting", json, "mean_supporting");
    PutMetric(row, "contrary", json, "mean_contrary");
    row.count_skipped = SumCounts(json.at("excluded"));
  } else {
    return std::nullopt;
  }
  return row;
}

std::vector<fs::path> DiscoverRuns(const Flags& flags, const fs::path& out_dir) {
  std::vector<fs::path> runs;
  if (!flags.runs.empty()) {
    for (const auto& run : flags.runs) {
      if (!fs::exists(fs::path(run) / kManifestFile)) {
        throw DataError("'" + run + "' is not a run directory (no manifest.json)");
      }
      runs.emplace_back(run);
    }
    return runs;
  }
  if (!fs::is_directory(out_dir)) {
    throw DataError("no runs found: '" + out_dir.string() + "' is not a directory");
  }
  if (fs::exists(out_dir / kManifestFile)) runs.push_back(out_dir);
  std::vector<fs::path> children;
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / kManifestFile)) {
      children.push_back(entry.path());
    }
  }
  std::sort(children.begin(), children.end());
  runs.insert(runs.end(), children.begin(), children.end());
  return runs;
}

std::string CsvField(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) return value;
  std::string quoted = "\"";
  for (const char c : value) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + "\"";
}

void CommandReport(const Flags& flags, const fs::path& out_dir, ArtifactWriter& writer,
                   std::ostream& out) {
  std::vector<SummaryRow> rows;
  for (const fs::path& run : DiscoverRuns(flags, out_dir)) {
    const fidelity::Json manifest = ReadJsonFile((run / kManifestFile).string());
    for (const auto& artifact : manifest.value("artifacts", fidelity::Json::array())) {
      const std::string name = artifact.get<std::string>();
      if (!name.ends_with(".json")) continue;
      if (!fs::exists(run / name)) continue;
      auto row = SummarizeArtifact(name, ReadJsonFile((run / name).string()));
      if (row) rows.push_back(std::move(*row));
    }
  }
  if (rows.empty()) throw DataError("no runs found under '" + out_dir.string() + "'");
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.dataset, a.model, a.explainer, a.phase) <
           std::tie(b.dataset, b.model, b.explainer, b.phase);
  });

  std::ostringstream wide;
  wide << "dataset,model,explainer,phase";
  for (const auto& metric : SummaryMetrics()) wide << ',' << metric;
  wide << ",count_skipped\n";
  std::ostringstream long_form;
  long_form << "dataset,model,explainer,phase,metric,mean,count_skipped\n";
  for (const auto& row : rows) {
    const std::string key = CsvField(row.dataset) + ',' + CsvField(row.model) + ',' +
                            CsvField(row.explainer) + ',' + row.phase;
    wide << key;
    for (const auto& metric : SummaryMetrics()) {
      wide << ',';
      const auto it = row.metrics.find(metric);
      if (it != row.metrics.end()) wide << FormatDouble(it->second);
    }
    wide << ',' << row.count_skipped << '\n';
    for (const auto& metric : SummaryMetrics()) {
      const auto it = row.metrics.find(metric);
      if (it == row.metrics.end()) continue;
      long_form << key << ',' << metric << ',' << FormatDouble(it->second) << ','
                << row.count_skipped << '\n';
    }
  }
  out << "rows: " << rows.size() << '\n';
  writer.WriteText("summary.csv", wide.str());
  writer.WriteText("summary-long.csv", long_form.str());
}

void AddOptions(CLI::App& app, Flags& flags) {
  app.add_option("--config", flags.config_path, "JSON run configuration");
  app.add_option("--out", flags.out_dir, "Output directory");
  app.add_option("--seed", flags.seed, "Seed for every random stage");
  app.add_option("--model", flags.model, "Model kind")
      ->check(CLI::IsMember({"tree", "ensemble"}));
  app.add_option("--explainer", flags.explainer, "Explainer kind")
      ->check(CLI::IsMember({"surrogate", "tree_shapley"}));
  app.add_option("--k", flags.k, "Explanations averaged per instance")
      ->check(CLI::PositiveNumber);
  app.add_option("--d", flags.d, "Decile range for phase3")->check(CLI::Range(1, 9));
  app.add_option("--p", flags.p, "Weight-bin size for phase3")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--repeats", flags.repeats, "Perturbations per instance and mode")
      ->check(CLI::PositiveNumber);
  app.add_option("--jobs", flags.jobs, "Worker threads (0 = all processors)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--data", flags.data, "Input CSV for prep");
  app.add_option("--target", flags.target, "Target column for prep");
  app.add_option("--task", flags.task, "Prediction task")
      ->check(CLI::IsMember({"classification", "regression"}));
  app.add_option("--name", flags.name, "Dataset name used in reports");
  app.add_flag("--balance", flags.balance, "Downsample the majority class");
  app.add_option("--split", flags.split, "Training fraction");
  app.add_option("--max-depth", flags.max_depth, "Maximum depth of the trained model")
      ->check(CLI::PositiveNumber);
}

int Dispatch(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"Explanation fidelity evaluation for tree models", "fidelity"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags flags;
  AddOptions(app, flags);
  CLI::App* prep = app.add_subcommand("prep", "Load, balance and split a CSV dataset");
  CLI::App* train = app.add_subcommand("train", "Train a tree or an ensemble");
  CLI::App* phase1 = app.add_subcommand("phase1", "Decision-path agreement metrics");
  CLI::App* phase2 = app.add_subcommand("phase2", "Decile range and bin size search");
  CLI::App* phase3 = app.add_subcommand("phase3", "Perturbation fidelity metrics");
  CLI::App* report = app.add_subcommand("report", "Aggregate run directories");
  report->add_option("runs", flags.runs, "Run directories (default: --out and its children)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const auto start = std::chrono::steady_clock::now();
  fidelity::Json file_config;
  if (!flags.config_path.empty()) file_config = ReadConfigFile(flags.config_path);
  const fs::path out_dir = ResolveOutDir(flags, file_config);

  if (report->parsed()) {
    fs::create_directories(out_dir);
    ArtifactWriter writer(out_dir, out);
    CommandReport(flags, out_dir, writer, out);
    Manifest manifest(out_dir);
    const fidelity::Json config = manifest.json().contains("config")
                                      ? manifest.json()["config"]
                                      : AssembleBaseConfig(flags, out_dir, file_config);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    manifest.RecordStep("report", config, config, writer.names(), seconds);
    return kExitOk;
  }

  if (!prep->parsed() && !fs::exists(out_dir / kManifestFile)) {
    throw MissingPrerequisiteError("no manifest in '" + out_dir.string() +
                                   "': run prep first");
  }
  const fidelity::Json base_config = AssembleBaseConfig(flags, out_dir, file_config);
  const fidelity::Json config = ApplyCommandFlags(flags, base_config);
  const RunSettings settings = ParseSettings(config);
  fs::create_directories(out_dir);
  ArtifactWriter writer(out_dir, out);
  std::string step;
  if (prep->parsed()) {
    step = "prep";
    CommandPrep(settings, writer, out);
  } else if (train->parsed()) {
    step = "train:" + settings.model_kind;
    CommandTrain(settings, out_dir, writer, out);
  } else if (phase1->parsed()) {
    step = "phase1:" + ExplainerSuffix(settings);
    CommandPhase1(settings, out_dir, writer, out);
  } else if (phase2->parsed()) {
    step = "phase2:" + ExplainerSuffix(settings);
    CommandPhase2(settings, out_dir, writer, out);
  } else if (phase3->parsed()) {
    step = "phase3:" + ExplainerSuffix(settings) + ":" + settings.model_kind;
    CommandPhase3(settings, out_dir, writer, out);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Manifest(out_dir).RecordStep(step, base_config, config, writer.names(), seconds);
  return kExitOk;
}

}  // namespace

Json DefaultRunConfig() {
  return {
      {"dataset",
       {{"path", ""},
        {"target_column", ""},
        {"task", "classification"},
        {"balance", false},
        {"split_fraction", 0.7},
        {"seed", 42},
        {"name", ""}}},
      {"model",
       {{"kind", "tree"},
        {"tree", {{"max_depth", nullptr}, {"min_samples_split", 2}, {"min_samples_leaf", 1}}},
        {"ensemble",
         {{"num_trees", 100}, {"learning_rate", 0.3}, {"max_depth", 6}, {"min_samples_leaf", 1}}}}},
      {"explainer",
       {{"kind", "tree_shapley"},
        {"k_repeats", 10},
        {"surrogate_samples", 1000},
        {"kernel_width", nullptr},
        {"ridge_lambda", 1.0}}},
      {"phase2", {{"candidate_ps", kDefaultCandidatePs}, {"grid_points", 100}}},
      {"phase3",
       {{"optimal_d", nullptr},
        {"optimal_p", nullptr},
        {"margin", kDefaultContraryMargin},
        {"repeats", 10}}},
      {"jobs", 0},
      {"output_dir", ""}};
}

std::string ConfigHash(const Json& config) {
  const std::string text = config.dump();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(text.data(), text.size(), digest, &length, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xf];
  }
  return hex;
}

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  try {
    return Dispatch(args, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const MissingPrerequisiteError& e) {
    err << "missing prerequisite: " << e.what() << '\n';
    return kExitMissingPrerequisite;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
}

int RunCli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return RunCli(args, std::cout, std::cerr);
}

}  // namespace fidelity
