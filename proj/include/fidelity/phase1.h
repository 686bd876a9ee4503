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

// White-box agreement: recall and precision of explanation features against
// the features on a decision tree's path.
//
// Recall uses the top-n features by absolute weight, with n the length of the
// tree's longest path (capped at two thirds of the feature space). Precision
// uses the features whose absolute weight is in the top quartile of the
// nonzero absolute weights.

#ifndef FIDELITY_PHASE1_H_
#define FIDELITY_PHASE1_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fidelity/explainers.h"
#include "fidelity/models.h"

namespace fidelity {

int RecallSampleSize(const DecisionTree& tree);

// The n features with the largest nonzero |weight|; ties go to the lower
// index. Returns every nonzero feature when fewer than n exist.
FeatureSet TopNFeatures(const Explanation& explanation, int n);

// Features with nonzero |weight| >= the 75th percentile of the nonzero
// absolute weights. Empty for an all-zero explanation.
FeatureSet TopQuartileFeatures(const Explanation& explanation);

// |true ∩ expl| / |true|; nullopt when the true set is empty.
std::optional<double> FeatureRecall(const FeatureSet& true_features,
                                    const FeatureSet& explanation_features);
// |true ∩ expl| / |expl|; nullopt when the explanation set is empty.
std::optional<double> FeaturePrecision(const FeatureSet& true_features,
                                       const FeatureSet& explanation_features);

inline constexpr char kSkipEmptyPath[] = "empty_decision_path";
inline constexpr char kSkipNoExplanationFeatures[] = "no_explanation_features";

struct Phase1Record {
  int instance_id = 0;
  std::optional<double> recall;
  std::optional<double> precision;
  int n_used = 0;
  int true_feature_count = 0;
  // Set when a metric was left out, e.g. "empty_decision_path".
  std::optional<std::string> skip_reason;
};

struct Phase1Report {
  std::vector<Phase1Record> records;
  std::optional<double> mean_recall;
  std::optional<double> mean_precision;
  std::map<std::string, int> skipped;
};

struct Phase1Options {
  int k_repeats = 10;
  uint64_t seed = 0;
  int jobs = 1;
};

// Evaluates every row of `eval_set`. The explanation of instance i is the
// average of k explanations seeded from DeriveSeed(seed, {i}).
Phase1Report RunPhase1(const DecisionTree& tree, const Explainer& explainer,
                       const Dataset& eval_set, const Phase1Options& options);

// Mean of the values that are present; nullopt if none are.
std::optional<double> MeanOfPresent(const std::vector<std::optional<double>>& values);

}  // namespace fidelity

#endif  // FIDELITY_PHASE1_H_
