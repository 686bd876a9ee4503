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

#include "fidelity/phase3.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fidelity/errors.h"
#include "fidelity/parallel.h"
#include "fidelity/phase1.h"
#include "fidelity/random.h"

namespace fidelity {
namespace {

constexpr uint64_t kScanStream = 1;
constexpr uint64_t kSupportingStream = 2;
constexpr uint64_t kContraryStream = 3;

// Sum of relative deviations divided by the sample count.
double MeanRelativeDeviation(double y, std::span<const double> ys) {
  double sum = 0.0;
  for (const double y_prime : ys) sum += std::abs(y - y_prime) / std::abs(y);
  return sum / static_cast<double>(ys.size());
}

}  // namespace

FeatureIntervalMap RelevantIntervals(const Explanation& explanation,
                                     const FeatureSet& features,
                                     std::optional<double> bin_size,
                                     const Explainer& explainer,
                                     std::span<const double> x,
                                     const std::vector<FeatureSchema>& schema,
                                     int grid_points, uint64_t seed) {
  FeatureIntervalMap intervals;
  for (const int f : features) {
    if (explanation.intervals) {
      const auto it = explanation.intervals->find(f);
      if (it != explanation.intervals->end()) intervals[f] = it->second;
      continue;
    }
    if (schema.at(f).kind == FeatureKind::kBinaryIndicator) {
      intervals[f] = {x[f], x[f]};
      continue;
    }
    if (!bin_size) {
      throw UsageError("weight-only explanations need a bin size to derive "
                       "value ranges (run phase2 first or pass --p)");
    }
    intervals[f] =
        WeightBinInterval(explainer, x, f, *bin_size, schema[f], grid_points, seed);
  }
  return intervals;
}

Perturbation PerturbSupporting(std::span<const double> x,
                               const FeatureIntervalMap& intervals,
                               const std::vector<FeatureSchema>& schema,
                               uint64_t seed) {
  Perturbation result;
  result.instance.assign(x.begin(), x.end());
  RandomEngine rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const auto& [f, interval] : intervals) {
    const FeatureSchema& feature = schema.at(f);
    if (feature.kind == FeatureKind::kBinaryIndicator) {
      result.skipped.insert(f);
      continue;
    }
    const double lo = std::max(interval.lo, feature.observed_min);
    const double hi = std::min(interval.hi, feature.observed_max);
    if (!(lo < hi)) {
      result.skipped.insert(f);
      continue;
    }
    // hi - (hi - lo) * u with u in [0, 1) lands in (lo, hi].
    double value = hi - (hi - lo) * unit(rng);
    if (value <= lo) value = hi;
    result.instance[f] = value;
    result.perturbed.insert(f);
  }
  return result;
}

Perturbation PerturbContrary(std::span<const double> x,
                             const FeatureIntervalMap& intervals,
                             const std::vector<FeatureSchema>& schema,
                             double margin, uint64_t seed) {
  Perturbation result;
  result.instance.assign(x.begin(), x.end());
  RandomEngine rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution upper_side(0.5);
  for (const auto& [f, interval] : intervals) {
    const FeatureSchema& feature = schema.at(f);
    if (feature.kind == FeatureKind::kBinaryIndicator) {
      result.instance[f] = x[f] == 0.0 ? 1.0 : 0.0;
      result.perturbed.insert(f);
      continue;
    }
    const double delta = margin * feature.range();
    const bool has_hi = std::isfinite(interval.hi);
    const bool has_lo = std::isfinite(interval.lo);
    if (!(delta > 0.0) || (!has_hi && !has_lo)) {
      result.skipped.insert(f);
      continue;
    }
    const bool go_up = has_hi && (!has_lo || upper_side(rng));
    // 1 - u lies in (0, 1].
    const double step = delta * (1.0 - unit(rng));
    double value;
    if (go_up) {
      value = interval.hi + step;
      if (value <= interval.hi) {
        value = std::nextafter(interval.hi, std::numeric_limits<double>::infinity());
      }
    } else {
      value = interval.lo - step;
      if (value >= interval.lo) {
        value = std::nextafter(interval.lo, -std::numeric_limits<double>::infinity());
      }
    }
    result.instance[f] = value;
    result.perturbed.insert(f);
  }
  return result;
}

std::optional<double> ContraryFidelity(double y, std::span<const double> ys) {
  if (ys.empty() || std::abs(y) < kMinOutputMagnitude) return std::nullopt;
  return MeanRelativeDeviation(y, ys);
}

std::optional<double> SupportingFidelity(double y, std::span<const double> ys) {
  const auto contrary = ContraryFidelity(y, ys);
  if (!contrary) return std::nullopt;
  return 1.0 - *contrary;
}

Phase3Report RunPhase3(const Model& model, const Explainer& explainer,
                       const Dataset& eval_set, const Phase3Params& params,
                       const IntervalSource& interval_source) {
  if (params.optimal_d < 1 || params.optimal_d > kNumDeciles) {
    throw UsageError("decile range d must lie in 1..9");
  }
  if (params.perturbation_repeats < 1) {
    throw UsageError("perturbation repeats must be at least 1");
  }
  if (params.optimal_p && !(*params.optimal_p > 0.0 && *params.optimal_p < 1.0)) {
    throw UsageError("bin size p must lie in (0, 1)");
  }
  if (!(params.margin > 0.0)) throw UsageError("contrary margin must be positive");
  if (!interval_source && !explainer.provides_intervals && !params.optimal_p) {
    throw UsageError("weight-only explainers need a bin size (run phase2 first "
                     "or pass --d/--p)");
  }
  if (eval_set.num_rows() == 0) throw DataError("phase 3: empty evaluation set");

  Phase3Report report;
  report.records.resize(eval_set.num_rows());
  ParallelFor(eval_set.num_rows(), params.jobs, [&](size_t i) {
    const auto& x = eval_set.rows[i];
    Phase3Record& record = report.records[i];
    record.instance_id = static_cast<int>(i);
    const double y = TrackedOutput(model, x);
    record.y_original = y;
    if (std::abs(y) < kMinOutputMagnitude) {
      record.supporting_excluded = kExcludeZeroOutput;
      record.contrary_excluded = kExcludeZeroOutput;
      return;
    }

    const Explanation explanation = ExplainAveraged(
        explainer, x, params.k_repeats, DeriveSeed(params.seed, {i}));
    // An all-zero explanation selects no features; both modes then score
    // unperturbed copies of x.
    const bool all_zero =
        std::all_of(explanation.weights.begin(), explanation.weights.end(),
                    [](double w) { return w == 0.0; });
    const FeatureSet features =
        all_zero ? FeatureSet{} : DecileFeatureSets(explanation)[params.optimal_d - 1];
    record.selected_features = features;

    FeatureIntervalMap intervals =
        interval_source
            ? interval_source(x, explanation, features)
            : RelevantIntervals(explanation, features, params.optimal_p, explainer,
                                x, eval_set.schema, params.grid_points,
                                DeriveSeed(params.seed, {i, kScanStream}));
    std::erase_if(intervals, [&](const auto& entry) {
      return !features.contains(entry.first);
    });
    for (const int f : features) {
      if (!intervals.contains(f)) record.skipped_features.insert(f);
    }

    std::vector<double> ys;
    for (int j = 0; j < params.perturbation_repeats; ++j) {
      const Perturbation p = PerturbSupporting(
          x, intervals, eval_set.schema,
          DeriveSeed(params.seed, {i, kSupportingStream, static_cast<uint64_t>(j)}));
      record.skipped_features.insert(p.skipped.begin(), p.skipped.end());
      ys.push_back(TrackedOutput(model, p.instance, x));
    }
    record.supporting = SupportingFidelity(y, ys);

    ys.clear();
    for (int j = 0; j < params.perturbation_repeats; ++j) {
      const Perturbation p = PerturbContrary(
          x, intervals, eval_set.schema, params.margin,
          DeriveSeed(params.seed, {i, kContraryStream, static_cast<uint64_t>(j)}));
      record.skipped_features.insert(p.skipped.begin(), p.skipped.end());
      if (p.perturbed.empty() && !features.empty()) {
        record.contrary_excluded = kExcludeNoViolableBounds;
        return;
      }
      ys.push_back(TrackedOutput(model, p.instance, x));
    }
    record.contrary = ContraryFidelity(y, ys);
  });

  std::vector<std::optional<double>> supporting, contrary;
  for (const auto& record : report.records) {
    supporting.push_back(record.supporting);
    contrary.push_back(record.contrary);
    if (record.supporting_excluded) {
      ++report.excluded["supporting:" + *record.supporting_excluded];
    }
    if (record.contrary_excluded) {
      ++report.excluded["contrary:" + *record.contrary_excluded];
    }
  }
  report.mean_supporting = MeanOfPresent(supporting);
  report.mean_contrary = MeanOfPresent(contrary);
  return report;
}

}  // namespace fidelity
