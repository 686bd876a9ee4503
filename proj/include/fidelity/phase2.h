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

// Parameter search guided by a white-box tree.
//
// Decile search picks how many top deciles of the absolute-weight
// distribution form the "relevant" feature set, maximizing the mean F1 of
// that set against the tree's path features.
//
// Bin-size search applies to weight-only explainers. For a feature f, the
// instance is re-explained with f swept over a grid; the values whose weight
// stays within +-p * |w_f(x)| form the explanation-derived interval. The
// chosen p minimizes the normalized distance between these intervals and the
// tree's path intervals.

#ifndef FIDELITY_PHASE2_H_
#define FIDELITY_PHASE2_H_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fidelity/explainers.h"
#include "fidelity/models.h"
#include "fidelity/tabular.h"

namespace fidelity {

inline constexpr int kNumDeciles = 9;

// set[d-1] holds the features whose nonzero |weight| is at least the
// (100 - 10d)-th percentile of the nonzero absolute weights, d = 1..9. The
// sets are nested. Throws DataError for an all-zero explanation.
std::array<FeatureSet, kNumDeciles> DecileFeatureSets(const Explanation& explanation);

// 2PR / (P + R), or 0 when P + R = 0.
double F1Score(double precision, double recall);

inline constexpr char kSkipAllZeroExplanation[] = "all_zero_explanation";
inline constexpr char kSkipNoComparableFeatures[] = "no_comparable_features";

struct DecileSearchResult {
  // Mean F1 for d = 1..9 (index d-1).
  std::array<double, kNumDeciles> per_d_scores{};
  int optimal_d = 1;
  int evaluated = 0;
  std::map<std::string, int> skipped;
};

struct SearchOptions {
  int k_repeats = 10;
  uint64_t seed = 0;
  int jobs = 1;
  int grid_points = 100;
};

// Throws DataError when no instance can be evaluated.
DecileSearchResult DecileSearch(const DecisionTree& tree, const Explainer& explainer,
                                const Dataset& eval_set, const SearchOptions& options);

// Weights of one feature as its value is swept over a grid.
struct WeightScan {
  int feature = 0;
  double original_value = 0.0;
  double original_weight = 0.0;
  double observed_min = 0.0;
  double observed_max = 0.0;
  std::vector<double> values;
  std::vector<double> weights;
};

// Re-explains x with feature f set to each of `grid_points` evenly spaced
// values over [observed_min, observed_max], plus x[f] itself. One explanation
// per value, all with the same seed.
WeightScan ScanFeatureWeights(const Explainer& explainer, std::span<const double> x,
                              int feature, const FeatureSchema& schema,
                              int grid_points, uint64_t seed);

// [min Q, max Q] with Q = {v : |w(v) - w(x)| <= p |w(x)|}. The full observed
// range when w(x) = 0.
Interval IntervalFromScan(const WeightScan& scan, double p);

// ScanFeatureWeights() followed by IntervalFromScan(). Throws UsageError
// unless 0 < p < 1.
Interval WeightBinInterval(const Explainer& explainer, std::span<const double> x,
                           int feature, double p, const FeatureSchema& schema,
                           int grid_points, uint64_t seed);

// Mean over features present in both maps (and with a nonzero observed range)
// of (|lo_e - lo_t| + |hi_e - hi_t|) / (2 R_f), after clamping infinite
// bounds to the observed range. nullopt when no feature qualifies.
std::optional<double> ThresholdDistance(const FeatureIntervalMap& explanation_intervals,
                                        const FeatureIntervalMap& tree_intervals,
                                        const std::vector<FeatureSchema>& schema);

inline const std::vector<double> kDefaultCandidatePs = {0.05, 0.10, 0.15,
                                                        0.20, 0.25, 0.30};

struct BinSearchResult {
  std::vector<double> candidate_ps;
  // Mean distance per candidate, aligned with candidate_ps.
  std::vector<double> per_p_distances;
  double optimal_p = 0.0;
  int evaluated = 0;
  std::map<std::string, int> skipped;
};

// Throws UsageError for explainers that carry their own intervals, and
// DataError when no instance can be evaluated. Ties go to the smallest p.
BinSearchResult BinSizeSearch(const DecisionTree& tree, const Explainer& explainer,
                              const Dataset& eval_set,
                              std::vector<double> candidate_ps,
                              const SearchOptions& options);

}  // namespace fidelity

#endif  // FIDELITY_PHASE2_H_
