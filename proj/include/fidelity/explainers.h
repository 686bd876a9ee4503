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

// Local feature-attribution explainers.
//
//   - ExplainSurrogate: a perturbation-sampling local linear surrogate over
//     quartile-discretized features. Returns weights and the quartile bin of
//     each feature as the relevant value range.
//   - ExplainTreeShapley: exact path-dependent Shapley values of tree models
//     (polynomial-time recursion over the tree, cover-weighted). Weight only.
//   - BruteForceShapley: exponential enumeration over feature subsets of the
//     same cover-weighted value function. Used as an oracle.

#ifndef FIDELITY_EXPLAINERS_H_
#define FIDELITY_EXPLAINERS_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fidelity/models.h"
#include "fidelity/tabular.h"

namespace fidelity {

struct Explanation {
  // Signed weight per feature.
  std::vector<double> weights;
  // Relevant value range per feature, for explainers that provide one.
  std::optional<FeatureIntervalMap> intervals;
  // The model output the weights attribute.
  double explained_output = 0.0;
  // Shapley baseline; base_value + sum(weights) == explained_output.
  std::optional<double> base_value;
};

enum class ExplainerKind { kSurrogate, kTreeShapley };

std::string_view ExplainerKindName(ExplainerKind kind);
// Throws UsageError on unknown names.
ExplainerKind ParseExplainerKind(std::string_view name);

struct ExplainerConfig {
  ExplainerKind kind = ExplainerKind::kTreeShapley;
  // Explanations averaged per instance.
  int k_repeats = 10;
  int surrogate_samples = 1000;
  // Defaults to 0.75 * sqrt(num_features).
  std::optional<double> kernel_width;
  double ridge_lambda = 1.0;

  // Throws UsageError.
  void Validate() const;
};

// Quartile bin of `value` among [observed_min, q25], (q25, q50], (q50, q75],
// (q75, observed_max]. Outer bins stretch to include `value` when it lies
// outside the observed range.
Interval QuartileBin(const FeatureSchema& feature, double value);

// Local surrogate explanation of `x`.
//
// Draws cfg.surrogate_samples perturbed instances. For each feature, with
// probability 1/2 the value is drawn uniformly within x's bin (indicator
// features keep x's value); otherwise it is a uniformly chosen training value.
// The interpretable representation has bit 1 iff the drawn value falls in
// x's bin. A ridge regression (unpenalized intercept), weighted by
// exp(-D^2 / kernel_width^2) with D the distance to the all-ones vector, maps
// the bits to the tracked model output (probability of x's predicted class,
// or the regression value). Weights are the coefficients; features with zero
// training variance get weight 0 and an unbounded interval.
Explanation ExplainSurrogate(const Model& model, std::span<const double> x,
                             const Dataset& train, const ExplainerConfig& cfg,
                             uint64_t seed);

// Path-dependent tree Shapley values in margin space. For an ensemble the
// per-tree values are summed and scaled by the learning rate; base_value is
// the cover-weighted expected margin. Throws DataError when a tree lacks
// cover statistics.
Explanation ExplainTreeShapley(const Model& model, std::span<const double> x);

// Cover-weighted expected output of `tree` when only the features in
// `known` (a bitmask over feature indices) follow x.
double ConditionalExpectation(const DecisionTree& tree,
                              std::span<const double> x, uint64_t known);

// Shapley values by enumerating all 2^n feature subsets. Throws DataError
// when the model has more than kMaxBruteForceFeatures features.
inline constexpr int kMaxBruteForceFeatures = 15;
Explanation BruteForceShapley(const Model& model, std::span<const double> x);

// Per-feature mean of signed weights; the intervals of the first explanation
// that has them; mean explained output and base value.
// Throws DataError on empty input or width mismatch.
Explanation AverageExplanations(std::span<const Explanation> explanations);

// An explainer bound to a model (and training data for the surrogate).
struct Explainer {
  std::function<Explanation(std::span<const double> x, uint64_t seed)> explain;
  // The output does not depend on the seed.
  bool deterministic = false;
  // Explanations carry their own relevant value ranges.
  bool provides_intervals = false;
};

// `model` and `train` must outlive the returned explainer.
Explainer MakeExplainer(const Model& model, const Dataset& train,
                        const ExplainerConfig& cfg);

// Averages `k` explanations of x drawn with seeds derived from `seed`.
// Deterministic explainers are evaluated once.
Explanation ExplainAveraged(const Explainer& explainer,
                            std::span<const double> x, int k, uint64_t seed);

}  // namespace fidelity

#endif  // FIDELITY_EXPLAINERS_H_
