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

#include "fidelity/phase2.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fidelity/errors.h"
#include "fidelity/parallel.h"
#include "fidelity/phase1.h"
#include "fidelity/random.h"
#include "fidelity/stats.h"

namespace fidelity {
namespace {

// Stream ids for DeriveSeed(seed, {instance, stream}).
constexpr uint64_t kScanStream = 1;

double ClampBound(double bound, double lo, double hi) {
  if (std::isinf(bound)) return bound < 0 ? lo : hi;
  return bound;
}

}  // namespace

std::array<FeatureSet, kNumDeciles> DecileFeatureSets(const Explanation& explanation) {
  std::vector<double> magnitudes;
  for (const double w : explanation.weights) {
    if (w != 0.0) magnitudes.push_back(std::abs(w));
  }
  if (magnitudes.empty()) {
    throw DataError("decile sets of an all-zero explanation are undefined");
  }
  std::sort(magnitudes.begin(), magnitudes.end());
  std::array<FeatureSet, kNumDeciles> sets;
  for (int d = 1; d <= kNumDeciles; ++d) {
    const double cutoff = PercentileSorted(magnitudes, 100.0 - 10.0 * d);
    for (int f = 0; f < static_cast<int>(explanation.weights.size()); ++f) {
      const double magnitude = std::abs(explanation.weights[f]);
      if (magnitude != 0.0 && magnitude >= cutoff) sets[d - 1].insert(f);
    }
  }
  return sets;
}

double F1Score(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

DecileSearchResult DecileSearch(const DecisionTree& tree, const Explainer& explainer,
                                const Dataset& eval_set, const SearchOptions& options) {
  struct PerInstance {
    std::optional<std::array<double, kNumDeciles>> scores;
    std::optional<std::string> skip_reason;
  };
  std::vector<PerInstance> results(eval_set.num_rows());
  ParallelFor(eval_set.num_rows(), options.jobs, [&](size_t i) {
    const auto& x = eval_set.rows[i];
    const FeatureSet true_features = TrueFeatures(tree, x);
    if (true_features.empty()) {
      results[i].skip_reason = kSkipEmptyPath;
      return;
    }
    const Explanation explanation = ExplainAveraged(
        explainer, x, options.k_repeats, DeriveSeed(options.seed, {i}));
    if (std::all_of(explanation.weights.begin(), explanation.weights.end(),
                    [](double w) { return w == 0.0; })) {
      results[i].skip_reason = kSkipAllZeroExplanation;
      return;
    }
    const auto sets = DecileFeatureSets(explanation);
    std::array<double, kNumDeciles> scores{};
    for (int d = 0; d < kNumDeciles; ++d) {
      scores[d] = F1Score(*FeaturePrecision(true_features, sets[d]),
                          *FeatureRecall(true_features, sets[d]));
    }
    results[i].scores = scores;
  });

  DecileSearchResult result;
  for (const auto& r : results) {
    if (r.skip_reason) {
      ++result.skipped[*r.skip_reason];
      continue;
    }
    ++result.evaluated;
    for (int d = 0; d < kNumDeciles; ++d) result.per_d_scores[d] += (*r.scores)[d];
  }
  if (result.evaluated == 0) {
    throw DataError("decile search: no instance could be evaluated (every "
                    "decision path or explanation is empty)");
  }
  for (double& score : result.per_d_scores) score /= result.evaluated;
  result.optimal_d = 1;
  for (int d = 2; d <= kNumDeciles; ++d) {
    if (result.per_d_scores[d - 1] > result.per_d_scores[result.optimal_d - 1]) {
      result.optimal_d = d;
    }
  }
  return result;
}

WeightScan ScanFeatureWeights(const Explainer& explainer, std::span<const double> x,
                              int feature, const FeatureSchema& schema,
                              int grid_points, uint64_t seed) {
  if (grid_points < 1) throw UsageError("grid_points must be at least 1");
  WeightScan scan;
  scan.feature = feature;
  scan.original_value = x[feature];
  scan.observed_min = schema.observed_min;
  scan.observed_max = schema.observed_max;
  scan.original_weight = explainer.explain(x, seed).weights.at(feature);

  Instance probe(x.begin(), x.end());
  scan.values.reserve(grid_points + 1);
  scan.weights.reserve(grid_points + 1);
  for (int g = 0; g < grid_points; ++g) {
    const double t = grid_points == 1 ? 0.0 : static_cast<double>(g) / (grid_points - 1);
    const double value = g == grid_points - 1 && grid_points > 1
                             ? schema.observed_max
                             : schema.observed_min + t * schema.range();
    probe[feature] = value;
    scan.values.push_back(value);
    scan.weights.push_back(explainer.explain(probe, seed).weights[feature]);
  }
  scan.values.push_back(scan.original_value);
  scan.weights.push_back(scan.original_weight);
  return scan;
}

Interval IntervalFromScan(const WeightScan& scan, double p) {
  const double w0 = scan.original_weight;
  if (w0 == 0.0) return {scan.observed_min, scan.observed_max};
  const double band = p * std::abs(w0);
  Interval interval{std::numeric_limits<double>::infinity(),
                    -std::numeric_limits<double>::infinity()};
  for (size_t i = 0; i < scan.values.size(); ++i) {
    if (std::abs(scan.weights[i] - w0) <= band) {
      interval.lo = std::min(interval.lo, scan.values[i]);
      interval.hi = std::max(interval.hi, scan.values[i]);
    }
  }
  return interval;
}

Interval WeightBinInterval(const Explainer& explainer, std::span<const double> x,
                           int feature, double p, const FeatureSchema& schema,
                           int grid_points, uint64_t seed) {
  if (!(p > 0.0 && p < 1.0)) throw UsageError("bin size p must lie in (0, 1)");
  return IntervalFromScan(
      ScanFeatureWeights(explainer, x, feature, schema, grid_points, seed), p);
}

std::optional<double> ThresholdDistance(const FeatureIntervalMap& explanation_intervals,
                                        const FeatureIntervalMap& tree_intervals,
                                        const std::vector<FeatureSchema>& schema) {
  double sum = 0.0;
  int count = 0;
  for (const auto& [feature, expl] : explanation_intervals) {
    const auto it = tree_intervals.find(feature);
    if (it == tree_intervals.end()) continue;
    const FeatureSchema& s = schema.at(feature);
    const double range = s.range();
    if (!(range > 0.0)) continue;
    const Interval& tree = it->second;
    const double lo_e = ClampBound(expl.lo, s.observed_min, s.observed_max);
    const double hi_e = ClampBound(expl.hi, s.observed_min, s.observed_max);
    const double lo_t = ClampBound(tree.lo, s.observed_min, s.observed_max);
    const double hi_t = ClampBound(tree.hi, s.observed_min, s.observed_max);
    sum += (std::abs(lo_e - lo_t) + std::abs(hi_e - hi_t)) / (2.0 * range);
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

BinSearchResult BinSizeSearch(const DecisionTree& tree, const Explainer& explainer,
                              const Dataset& eval_set,
                              std::vector<double> candidate_ps,
                              const SearchOptions& options) {
  if (explainer.provides_intervals) {
    throw UsageError("bin size search applies to weight-only explainers");
  }
  if (candidate_ps.empty()) throw UsageError("no candidate bin sizes");
  std::sort(candidate_ps.begin(), candidate_ps.end());
  for (const double p : candidate_ps) {
    if (!(p > 0.0 && p < 1.0)) throw UsageError("bin size p must lie in (0, 1)");
  }
  const size_t num_ps = candidate_ps.size();

  struct PerInstance {
    std::vector<double> distances;
    std::optional<std::string> skip_reason;
  };
  std::vector<PerInstance> results(eval_set.num_rows());
  ParallelFor(eval_set.num_rows(), options.jobs, [&](size_t i) {
    const auto& x = eval_set.rows[i];
    FeatureIntervalMap tree_intervals = PathIntervals(tree, x);
    if (tree_intervals.empty()) {
      results[i].skip_reason = kSkipEmptyPath;
      return;
    }
    std::vector<WeightScan> scans;
    for (auto it = tree_intervals.begin(); it != tree_intervals.end();) {
      const FeatureSchema& schema = eval_set.schema[it->first];
      if (schema.kind != FeatureKind::kNumeric || !(schema.range() > 0.0)) {
        it = tree_intervals.erase(it);
        continue;
      }
      scans.push_back(ScanFeatureWeights(explainer, x, it->first, schema,
                                         options.grid_points,
                                         DeriveSeed(options.seed, {i, kScanStream})));
      ++it;
    }
    if (scans.empty()) {
      results[i].skip_reason = kSkipNoComparableFeatures;
      return;
    }
    for (const double p : candidate_ps) {
      FeatureIntervalMap explanation_intervals;
      for (const auto& scan : scans) {
        explanation_intervals[scan.feature] = IntervalFromScan(scan, p);
      }
      results[i].distances.push_back(
          *ThresholdDistance(explanation_intervals, tree_intervals, eval_set.schema));
    }
  });

  BinSearchResult result;
  result.candidate_ps = candidate_ps;
  result.per_p_distances.assign(num_ps, 0.0);
  for (const auto& r : results) {
    if (r.skip_reason) {
      ++result.skipped[*r.skip_reason];
      continue;
    }
    ++result.evaluated;
    for (size_t j = 0; j < num_ps; ++j) result.per_p_distances[j] += r.distances[j];
  }
  if (result.evaluated == 0) {
    throw DataError("bin size search: no instance could be evaluated");
  }
  size_t best = 0;
  for (size_t j = 0; j < num_ps; ++j) {
    result.per_p_distances[j] /= result.evaluated;
    if (result.per_p_distances[j] < result.per_p_distances[best]) best = j;
  }
  result.optimal_p = candidate_ps[best];
  return result;
}

}  // namespace fidelity
