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

// JSON and CSV encodings of datasets, models, explanations and reports.
//
// Doubles are written in their shortest round-trip form, so model files
// reproduce predictions bit for bit. Infinite interval bounds are written as
// null.

#ifndef FIDELITY_SERIALIZATION_H_
#define FIDELITY_SERIALIZATION_H_

#include <optional>
#include <string>

#include "json.hpp"
#include "fidelity/explainers.h"
#include "fidelity/models.h"
#include "fidelity/phase1.h"
#include "fidelity/phase2.h"
#include "fidelity/phase3.h"
#include "fidelity/tabular.h"
#include "fidelity/validation.h"

namespace fidelity {

using Json = nlohmann::json;

// Parsing functions throw DataError on malformed documents.
Json DatasetToJson(const Dataset& dataset);
Dataset DatasetFromJson(const Json& json);

// {kind: "tree", task, num_features, root: node} where node is
// {feature, threshold, cover, left, right} or {leaf, cover}; ensembles are
// {kind: "ensemble", task, num_features, learning_rate, base_score,
// trees: [{root: node}, ...]}.
Json ModelToJson(const Model& model);
Model ModelFromJson(const Json& json);

Json IntervalsToJson(const FeatureIntervalMap& intervals);
FeatureIntervalMap IntervalsFromJson(const Json& json);

// {weights, intervals, base_value, explained_output}.
Json ExplanationToJson(const Explanation& explanation);
Explanation ExplanationFromJson(const Json& json);

Json Phase1ReportToJson(const Phase1Report& report);
// {per_d_scores, optimal_d, per_p_distances, optimal_p, skipped}; the bin
// search fields are null when no bin search ran.
Json Phase2ReportToJson(const DecileSearchResult& deciles,
                        const std::optional<BinSearchResult>& bins);
Json Phase3ReportToJson(const Phase3Report& report);
Json ValidationToJson(const Phase2Validation& validation);

std::string Phase1ReportToCsv(const Phase1Report& report);
// Long format: curve,parameter,value with curve in {decile_f1, bin_distance}.
std::string Phase2CurvesToCsv(const DecileSearchResult& deciles,
                              const std::optional<BinSearchResult>& bins);
std::string Phase3ReportToCsv(const Phase3Report& report);

// Shortest decimal form that parses back to the same double.
std::string FormatDouble(double value);

std::string ReadTextFile(const std::string& path);
void WriteTextFile(const std::string& path, const std::string& content);
Json ReadJsonFile(const std::string& path);
// Pretty-printed with a trailing newline.
void WriteJsonFile(const std::string& path, const Json& json);

}  // namespace fidelity

#endif  // FIDELITY_SERIALIZATION_H_
