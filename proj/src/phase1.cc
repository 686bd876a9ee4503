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

#include "fidelity/phase1.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fidelity/errors.h"
#include "fidelity/parallel.h"
#include "fidelity/random.h"
#include "fidelity/stats.h"

namespace fidelity {
namespace {

size_t IntersectionSize(const FeatureSet& a, const FeatureSet& b) {
  size_t count = 0;
  for (const int f : a) count += b.count(f);
  return count;
}

}  // namespace

int RecallSampleSize(const DecisionTree& tree) {
  const int longest = tree.max_depth();
  const int num_features = tree.num_features();
  if (longest > num_features) return (2 * num_features + 2) / 3;
  return longest;
}

FeatureSet TopNFeatures(const Explanation& explanation, int n) {
  if (n < 0) throw UsageError("n must be non-negative");
  std::vector<int> order;
  for (int f = 0; f < static_cast<int>(explanation.weights.size()); ++f) {
    if (explanation.weights[f] != 0.0) order.push_back(f);
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(explanation.weights[a]) > std::abs(explanation.weights[b]);
  });
  order.resize(std::min<size_t>(order.size(), static_cast<size_t>(n)));
  return FeatureSet(order.begin(), order.end());
}

FeatureSet TopQuartileFeatures(const Explanation& explanation) {
  std::vector<double> magnitudes;
  for (const double w : explanation.weights) {
    if (w != 0.0) magnitudes.push_back(std::abs(w));
  }
  if (magnitudes.empty()) return {};
  const double q75 = Percentile(magnitudes, 75.0);
  FeatureSet selected;
  for (int f = 0; f < static_cast<int>(explanation.weights.size()); ++f) {
    const double magnitude = std::abs(explanation.weights[f]);
    if (magnitude != 0.0 && magnitude >= q75) selected.insert(f);
  }
  return selected;
}

std::optional<double> FeatureRecall(const FeatureSet& true_features,
                                    const FeatureSet& explanation_features) {
  if (true_features.empty()) return std::nullopt;
  return static_cast<double>(IntersectionSize(true_features, explanation_features)) /
         static_cast<double>(true_features.size());
}

std::optional<double> FeaturePrecision(const FeatureSet& true_features,
                                       const FeatureSet& explanation_features) {
  if (explanation_features.empty()) return std::nullopt;
  return static_cast<double>(IntersectionSize(true_features, explanation_features)) /
         static_cast<double>(explanation_features.size());
}

std::optional<double> MeanOfPresent(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  size_t count = 0;
  for (const auto& value : values) {
    if (!value) continue;
    sum += *value;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

Phase1Report RunPhase1(const DecisionTree& tree, const Explainer& explainer,
                       const Dataset& eval_set, const Phase1Options& options) {
  if (eval_set.num_rows() == 0) throw DataError("phase 1: empty evaluation set");
  const int n = RecallSampleSize(tree);
  Phase1Report report;
  report.records.resize(eval_set.num_rows());
  ParallelFor(eval_set.num_rows(), options.jobs, [&](size_t i) {
    const auto& x = eval_set.rows[i];
    Phase1Record& record = report.records[i];
    record.instance_id = static_cast<int>(i);
    record.n_used = n;
    const FeatureSet true_features = TrueFeatures(tree, x);
    record.true_feature_count = static_cast<int>(true_features.size());
    if (true_features.empty()) {
      record.skip_reason = kSkipEmptyPath;
      return;
    }
    const Explanation explanation = ExplainAveraged(
        explainer, x, options.k_repeats, DeriveSeed(options.seed, {i}));
    record.recall = FeatureRecall(true_features, TopNFeatures(explanation, n));
    record.precision =
        FeaturePrecision(true_features, TopQuartileFeatures(explanation));
    if (!record.precision) record.skip_reason = kSkipNoExplanationFeatures;
  });

  std::vector<std::optional<double>> recalls, precisions;
  for (const auto& record : report.records) {
    recalls.push_back(record.recall);
    precisions.push_back(record.precision);
    if (record.skip_reason) ++report.skipped[*record.skip_reason];
  }
  report.mean_recall = MeanOfPresent(recalls);
  report.mean_precision = MeanOfPresent(precisions);
  return report;
}

}  // namespace fidelity
