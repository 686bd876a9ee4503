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

// Perturbation fidelity of explanations for any model.
//
// For each instance x with tracked output y = Y(x), the features in the top
// d deciles of the explanation are perturbed together:
//   - inside their relevant value ranges (supporting set X'_s), and
//   - just outside them (contrary set X'_c).
// Contrary fidelity C = mean |y - y'| / |y| over X'_c, and supporting
// fidelity S = 1 - mean |y - y'| / |y| over X'_s.

#ifndef FIDELITY_PHASE3_H_
#define FIDELITY_PHASE3_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fidelity/explainers.h"
#include "fidelity/models.h"
#include "fidelity/phase2.h"
#include "fidelity/tabular.h"

namespace fidelity {

inline constexpr double kMinOutputMagnitude = 1e-9;
inline constexpr double kDefaultContraryMargin = 0.05;

// Relevant value ranges of `features`: the explanation's own intervals when
// it carries them, otherwise weight-bin intervals at bin size `bin_size`
// (required in that case; UsageError if absent). Indicator features get the
// point interval [x_f, x_f].
FeatureIntervalMap RelevantIntervals(const Explanation& explanation,
                                     const FeatureSet& features,
                                     std::optional<double> bin_size,
                                     const Explainer& explainer,
                                     std::span<const double> x,
                                     const std::vector<FeatureSchema>& schema,
                                     int grid_points, uint64_t seed);

struct Perturbation {
  Instance instance;
  FeatureSet perturbed;
  // Features left at their original value (degenerate or unbounded ranges).
  FeatureSet skipped;
};

// Sets every numeric feature of `intervals` to a uniform draw from
// (max(lo, observed_min), min(hi, observed_max)]. Indicator features, and
// features whose clamped range is empty or a point, keep their value.
Perturbation PerturbSupporting(std::span<const double> x,
                               const FeatureIntervalMap& intervals,
                               const std::vector<FeatureSchema>& schema,
                               uint64_t seed);

// Moves every feature of `intervals` just outside its range: one finite side
// is chosen uniformly and the value drawn from (hi, hi + delta] or
// [lo - delta, lo), delta = margin * (observed_max - observed_min).
// Indicator features flip 0 <-> 1. Features with no finite bound or a zero
// observed range are skipped.
Perturbation PerturbContrary(std::span<const double> x,
                             const FeatureIntervalMap& intervals,
                             const std::vector<FeatureSchema>& schema,
                             double margin, uint64_t seed);

// Mean relative deviation sum |y - y'| / |y| / |ys|. nullopt when
// |y| < kMinOutputMagnitude or ys is empty.
std::optional<double> ContraryFidelity(double y, std::span<const double> ys);
// 1 - ContraryFidelity(y, ys).
std::optional<double> SupportingFidelity(double y, std::span<const double> ys);

inline constexpr char kExcludeZeroOutput[] = "zero_output";
inline constexpr char kExcludeNoViolableBounds[] = "no_violable_bounds";

struct Phase3Record {
  int instance_id = 0;
  std::optional<double> supporting;
  std::optional<double> contrary;
  double y_original = 0.0;
  FeatureSet selected_features;
  // Selected features not perturbed in at least one mode.
  FeatureSet skipped_features;
  std::optional<std::string> supporting_excluded;
  std::optional<std::string> contrary_excluded;
};

struct Phase3Report {
  std::vector<Phase3Record> records;
  std::optional<double> mean_supporting;
  std::optional<double> mean_contrary;
  // Keys are "<mode>:<reason>", e.g. "contrary:no_violable_bounds".
  std::map<std::string, int> excluded;
};

struct Phase3Params {
  int optimal_d = 1;
  // Bin size for weight-only explainers.
  std::optional<double> optimal_p;
  int k_repeats = 10;
  int perturbation_repeats = 10;
  double margin = kDefaultContraryMargin;
  int grid_points = 100;
  uint64_t seed = 0;
  int jobs = 1;
};

// Replaces RelevantIntervals() in RunPhase3(), e.g. with a white-box tree's
// path intervals.
using IntervalSource = std::function<FeatureIntervalMap(
    std::span<const double> x, const Explanation& explanation,
    const FeatureSet& features)>;

// Runs the perturbation procedure on every row of `eval_set`, using its schema
// for observed ranges. Seeds: the explanation of instance i uses
// DeriveSeed(seed, {i}); supporting draw j uses DeriveSeed(seed, {i, 2, j});
// contrary draw j uses DeriveSeed(seed, {i, 3, j}); weight-bin scans use
// DeriveSeed(seed, {i, 1}).
Phase3Report RunPhase3(const Model& model, const Explainer& explainer,
                       const Dataset& eval_set, const Phase3Params& params,
                       const IntervalSource& interval_source = nullptr);

}  // namespace fidelity

#endif  // FIDELITY_PHASE3_H_
