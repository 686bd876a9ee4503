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

#include "fidelity/tabular.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "fidelity/errors.h"
#include "fidelity/random.h"
#include "fidelity/stats.h"

namespace fidelity {
namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::optional<double> ParseNumber(std::string_view s) {
  s = Trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

// Splits one CSV record. Double-quoted fields may contain commas and doubled
// quotes; embedded newlines are not supported.
std::vector<std::string> SplitRecord(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        current.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::string(Trim(current)));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(std::string(Trim(current)));
  return fields;
}

std::string CellContext(std::string_view source, size_t line_number,
                        std::string_view column) {
  std::ostringstream out;
  out << source << ": line " << line_number << ", column '" << column << "'";
  return out.str();
}

Dataset Subset(const Dataset& dataset, std::span<const size_t> indices) {
  Dataset out;
  out.schema = dataset.schema;
  out.task = dataset.task;
  out.rows.reserve(indices.size());
  out.targets.reserve(indices.size());
  for (const size_t i : indices) {
    out.rows.push_back(dataset.rows[i]);
    out.targets.push_back(dataset.targets[i]);
  }
  return out;
}

}  // namespace

std::string_view TaskName(Task task) {
  return task == Task::kClassification ? "classification" : "regression";
}

Task ParseTask(std::string_view name) {
  if (name == "classification") return Task::kClassification;
  if (name == "regression") return Task::kRegression;
  throw UsageError("unknown task '" + std::string(name) +
                   "' (expected classification or regression)");
}

std::string_view FeatureKindName(FeatureKind kind) {
  return kind == FeatureKind::kNumeric ? "numeric" : "binary_indicator";
}

FeatureKind ParseFeatureKind(std::string_view name) {
  if (name == "numeric") return FeatureKind::kNumeric;
  if (name == "binary_indicator") return FeatureKind::kBinaryIndicator;
  throw DataError("unknown feature kind '" + std::string(name) + "'");
}

void Dataset::Validate() const {
  if (rows.size() != targets.size()) {
    throw DataError("dataset has " + std::to_string(rows.size()) +
                    " rows but " + std::to_string(targets.size()) +
                    " targets");
  }
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != schema.size()) {
      throw DataError("row " + std::to_string(r) + " has width " +
                      std::to_string(rows[r].size()) + ", schema has " +
                      std::to_string(schema.size()) + " features");
    }
    if (task == Task::kClassification && targets[r] != 0.0 && targets[r] != 1.0) {
      throw DataError("classification target of row " + std::to_string(r) +
                      " is not 0 or 1");
    }
  }
  for (size_t f = 0; f < schema.size(); ++f) {
    if (schema[f].kind != FeatureKind::kBinaryIndicator) continue;
    for (const auto& row : rows) {
      if (row[f] != 0.0 && row[f] != 1.0) {
        throw DataError("indicator feature '" + schema[f].name +
                        "' has a value outside {0, 1}");
      }
    }
  }
}

void ComputeSchemaStatistics(std::span<const Instance> rows,
                             std::vector<FeatureSchema>& schema) {
  if (rows.empty()) throw DataError("cannot compute statistics of zero rows");
  std::vector<double> column(rows.size());
  for (size_t f = 0; f < schema.size(); ++f) {
    for (size_t r = 0; r < rows.size(); ++r) column[r] = rows[r][f];
    std::sort(column.begin(), column.end());
    FeatureSchema& feature = schema[f];
    feature.observed_min = column.front();
    feature.observed_max = column.back();
    feature.observed_std = StdDev(column);
    feature.quartile_bounds = {PercentileSorted(column, 25.0),
                               PercentileSorted(column, 50.0),
                               PercentileSorted(column, 75.0)};
  }
}

Dataset ParseCsv(std::string_view text, std::string_view target_column,
                 Task task, std::string_view source) {
  std::vector<std::pair<size_t, std::vector<std::string>>> records;
  size_t line_number = 0;
  size_t begin = 0;
  while (begin <= text.size()) {
    size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    ++line_number;
    const std::string_view line = Trim(text.substr(begin, end - begin));
    if (!line.empty()) records.emplace_back(line_number, SplitRecord(line));
    begin = end + 1;
  }
  if (records.empty()) throw DataError(std::string(source) + ": no header row");

  const std::vector<std::string> header = records.front().second;
  const auto target_it = std::find(header.begin(), header.end(), target_column);
  if (target_it == header.end()) {
    throw DataError(std::string(source) + ": target column '" +
                    std::string(target_column) + "' not found in header");
  }
  const size_t target_index = target_it - header.begin();
  if (records.size() == 1) throw DataError(std::string(source) + ": empty dataset");

  for (const auto& [number, fields] : records) {
    if (fields.size() != header.size()) {
      throw DataError(std::string(source) + ": line " + std::to_string(number) +
                      " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(header.size()));
    }
  }

  const size_t num_records = records.size() - 1;
  Dataset dataset;
  dataset.task = task;
  dataset.rows.assign(num_records, {});
  dataset.targets.resize(num_records);

  for (size_t c = 0; c < header.size(); ++c) {
    // Missing values are rejected up front.
    for (size_t r = 1; r < records.size(); ++r) {
      if (records[r].second[c].empty()) {
        throw DataError(CellContext(source, records[r].first, header[c]) +
                        ": missing value");
      }
    }
    const bool numeric = ParseNumber(records[1].second[c]).has_value();
    if (c == target_index || numeric) {
      std::vector<double> values(num_records);
      for (size_t r = 1; r < records.size(); ++r) {
        const auto value = ParseNumber(records[r].second[c]);
        if (!value) {
          throw DataError(CellContext(source, records[r].first, header[c]) +
                          ": cannot parse '" + records[r].second[c] +
                          "' as a number");
        }
        if (c == target_index && task == Task::kClassification &&
            *value != 0.0 && *value != 1.0) {
          throw DataError(CellContext(source, records[r].first, header[c]) +
                          ": classification target must be 0 or 1");
        }
        values[r - 1] = *value;
      }
      if (c == target_index) {
        dataset.targets = std::move(values);
      } else {
        FeatureSchema feature;
        feature.name = header[c];
        dataset.schema.push_back(std::move(feature));
        for (size_t r = 0; r < num_records; ++r) dataset.rows[r].push_back(values[r]);
      }
      continue;
    }
    std::map<std::string, size_t> categories;
    for (size_t r = 1; r < records.size(); ++r) categories[records[r].second[c]] = 0;
    size_t position = 0;
    for (auto& [value, index] : categories) {
      index = position++;
      dataset.schema.push_back({.name = header[c] + "=" + value,
                                .kind = FeatureKind::kBinaryIndicator,
                                .source_categorical = header[c]});
    }
    for (size_t r = 1; r < records.size(); ++r) {
      const size_t hot = categories.at(records[r].second[c]);
      for (size_t k = 0; k < categories.size(); ++k) {
        dataset.rows[r - 1].push_back(k == hot ? 1.0 : 0.0);
      }
    }
  }

  ComputeSchemaStatistics(dataset.rows, dataset.schema);
  dataset.Validate();
  return dataset;
}

Dataset LoadCsv(const std::string& path, std::string_view target_column,
                Task task) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return ParseCsv(buffer.str(), target_column, task, path);
}

Dataset BalanceDownsample(const Dataset& dataset, uint64_t seed) {
  if (dataset.task != Task::kClassification) {
    throw DataError("balancing requires a classification dataset");
  }
  std::array<std::vector<size_t>, 2> by_class;
  for (size_t i = 0; i < dataset.num_rows(); ++i) {
    by_class[dataset.targets[i] == 1.0 ? 1 : 0].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) {
    throw DataError("balancing requires rows of both classes");
  }
  const size_t minority = by_class[0].size() <= by_class[1].size() ? 0 : 1;
  std::vector<size_t>& majority_rows = by_class[1 - minority];
  RandomEngine rng(seed);
  std::shuffle(majority_rows.begin(), majority_rows.end(), rng);
  majority_rows.resize(by_class[minority].size());

  std::vector<size_t> keep = by_class[0];
  keep.insert(keep.end(), by_class[1].begin(), by_class[1].end());
  std::sort(keep.begin(), keep.end());
  return Subset(dataset, keep);
}

std::pair<Dataset, Dataset> TrainTestSplit(const Dataset& dataset,
                                           double train_fraction,
                                           uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw UsageError("train fraction must lie strictly between 0 and 1");
  }
  const size_t n = dataset.num_rows();
  const auto num_train = static_cast<size_t>(
      std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  if (num_train == 0 || num_train == n) {
    throw DataError("split of " + std::to_string(n) +
                    " rows leaves an empty partition");
  }
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RandomEngine rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::span<const size_t> all(order);
  Dataset train = Subset(dataset, all.first(num_train));
  Dataset test = Subset(dataset, all.subspan(num_train));
  ComputeSchemaStatistics(train.rows, train.schema);
  test.schema = train.schema;
  return {std::move(train), std::move(test)};
}

}  // namespace fidelity
