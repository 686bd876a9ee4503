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

// Tabular datasets: CSV ingestion with one-hot encoding of categorical
// columns, class balancing by downsampling, and seeded train/test splits.
//
// A Dataset is a plain value. Every randomized operation is a pure function
// of its inputs and an explicit seed.

#ifndef FIDELITY_TABULAR_H_
#define FIDELITY_TABULAR_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fidelity {

enum class Task { kClassification, kRegression };

enum class FeatureKind { kNumeric, kBinaryIndicator };

std::string_view TaskName(Task task);
// Throws UsageError on unknown names.
Task ParseTask(std::string_view name);
std::string_view FeatureKindName(FeatureKind kind);
FeatureKind ParseFeatureKind(std::string_view name);

struct FeatureSchema {
  std::string name;
  FeatureKind kind = FeatureKind::kNumeric;
  double observed_min = 0.0;
  double observed_max = 0.0;
  double observed_std = 0.0;
  // 25th, 50th and 75th percentiles of the training values.
  std::array<double, 3> quartile_bounds = {0.0, 0.0, 0.0};
  // Original column name for one-hot indicator features.
  std::optional<std::string> source_categorical;

  double range() const { return observed_max - observed_min; }
  bool operator==(const FeatureSchema&) const = default;
};

// Row values indexed by schema position.
using Instance = std::vector<double>;

struct Dataset {
  std::vector<FeatureSchema> schema;
  std::vector<Instance> rows;
  std::vector<double> targets;
  Task task = Task::kClassification;

  size_t num_rows() const { return rows.size(); }
  size_t num_features() const { return schema.size(); }

  // Checks the shape and label invariants. Throws DataError.
  void Validate() const;

  bool operator==(const Dataset&) const = default;
};

// Recomputes min/max/std/quartiles of every feature from `rows`.
// Throws DataError when `rows` is empty.
void ComputeSchemaStatistics(std::span<const Instance> rows,
                             std::vector<FeatureSchema>& schema);

// Loads a comma-separated file with a header row. Columns whose first value
// parses as a number are numeric; any other column is categorical and is
// one-hot encoded into "<column>=<value>" indicator features (values in
// lexicographic order). Missing (empty) cells are rejected. Classification
// targets must be 0 or 1.
//
// Throws DataError naming the file, row and column of the offending cell.
Dataset LoadCsv(const std::string& path, std::string_view target_column,
                Task task);

// Same as LoadCsv() on in-memory text. `source` is only used in messages.
Dataset ParseCsv(std::string_view text, std::string_view target_column,
                 Task task, std::string_view source = "<memory>");

// Keeps every minority-class row and a uniformly drawn subset of the
// majority class of the same size. Selected rows keep their original order.
Dataset BalanceDownsample(const Dataset& dataset, uint64_t seed);

// Shuffled disjoint partition with floor(train_fraction * n) training rows.
// Schema statistics of both outputs are recomputed from the training rows.
std::pair<Dataset, Dataset> TrainTestSplit(const Dataset& dataset,
                                           double train_fraction,
                                           uint64_t seed);

}  // namespace fidelity

#endif  // FIDELITY_TABULAR_H_
