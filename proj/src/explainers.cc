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

#include "fidelity/explainers.h"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>

#include "fidelity/errors.h"
#include "fidelity/random.h"

namespace fidelity {
namespace {

int QuartileBinIndex(const FeatureSchema& feature, double value) {
  for (int i = 0; i < 3; ++i) {
    if (value <= feature.quartile_bounds[i]) return i;
  }
  return 3;
}

bool IsDegenerate(const FeatureSchema& feature) {
  return !(feature.observed_max > feature.observed_min);
}

}  // namespace

std::string_view ExplainerKindName(ExplainerKind kind) {
  return kind == ExplainerKind::kSurrogate ? "surrogate" : "tree_shapley";
}

ExplainerKind ParseExplainerKind(std::string_view name) {
  if (name == "surrogate") return ExplainerKind::kSurrogate;
  if (name == "tree_shapley") return ExplainerKind::kTreeShapley;
  throw UsageError("unknown explainer '" + std::string(name) +
                   "' (expected surrogate or tree_shapley)");
}

void ExplainerConfig::Validate() const {
  if (k_repeats < 1) throw UsageError("k_repeats must be at least 1");
  if (surrogate_samples < 10) throw UsageError("surrogate_samples must be at least 10");
  if (kernel_width && !(*kernel_width > 0)) {
    throw UsageError("kernel_width must be positive");
  }
  if (ridge_lambda < 0) throw UsageError("ridge_lambda must be non-negative");
}

Interval QuartileBin(const FeatureSchema& feature, double value) {
  if (feature.kind == FeatureKind::kBinaryIndicator) return {value, value};
  const auto& q = feature.quartile_bounds;
  const int bin = QuartileBinIndex(feature, value);
  Interval interval;
  interval.lo = bin == 0 ? std::min(feature.observed_min, value) : q[bin - 1];
  interval.hi = bin == 3 ? std::max(feature.observed_max, value) : q[bin];
  return interval;
}

Explanation ExplainSurrogate(const Model& model, std::span<const double> x,
                             const Dataset& train, const ExplainerConfig& cfg,
                             uint64_t seed) {
  cfg.Validate();
  const int num_features = NumFeatures(model);
  if (x.size() != static_cast<size_t>(num_features) ||
      train.num_features() != static_cast<size_t>(num_features)) {
    throw DataError("surrogate explainer: model, instance and training data "
                    "widths differ");
  }
  if (train.num_rows() == 0) throw DataError("surrogate explainer: empty training data");

  std::vector<int> active;
  std::vector<Interval> bins(num_features);
  std::vector<int> bin_index(num_features, -1);
  for (int f = 0; f < num_features; ++f) {
    const FeatureSchema& feature = train.schema[f];
    if (IsDegenerate(feature)) continue;
    active.push_back(f);
    bins[f] = QuartileBin(feature, x[f]);
    if (feature.kind == FeatureKind::kNumeric) {
      bin_index[f] = QuartileBinIndex(feature, x[f]);
    }
  }

  const bool classification = TaskOf(model) == Task::kClassification;
  const int cls = classification ? PredictedClass(Predict(model, x)) : 0;
  auto tracked = [&](std::span<const double> z) {
    const double output = Predict(model, z);
    return classification ? ClassProbability(output, cls) : output;
  };

  const int num_samples = cfg.surrogate_samples;
  const auto num_active = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd bits(num_samples, num_active);
  Eigen::VectorXd outputs(num_samples);
  Eigen::VectorXd sample_weights(num_samples);
  const double kernel_width =
      cfg.kernel_width.value_or(0.75 * std::sqrt(static_cast<double>(num_features)));

  RandomEngine rng(seed);
  std::bernoulli_distribution keep_bin(0.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<size_t> pick_row(0, train.num_rows() - 1);
  Instance z(x.begin(), x.end());
  for (int s = 0; s < num_samples; ++s) {
    int zeros = 0;
    for (Eigen::Index a = 0; a < num_active; ++a) {
      const int f = active[a];
      const FeatureSchema& feature = train.schema[f];
      double value;
      if (keep_bin(rng)) {
        value = feature.kind == FeatureKind::kBinaryIndicator
                    ? x[f]
                    : bins[f].lo + unit(rng) * (bins[f].hi - bins[f].lo);
      } else {
        value = train.rows[pick_row(rng)][f];
      }
      z[f] = value;
      const bool in_bin = feature.kind == FeatureKind::kBinaryIndicator
                              ? value == x[f]
                              : QuartileBinIndex(feature, value) == bin_index[f];
      bits(s, a) = in_bin ? 1.0 : 0.0;
      zeros += in_bin ? 0 : 1;
    }
    outputs(s) = tracked(z);
    sample_weights(s) = std::exp(-static_cast<double>(zeros) /
                                 (kernel_width * kernel_width));
  }

  // Weighted ridge with an unpenalized intercept: center on weighted means,
  // then solve (Xc' W Xc + lambda I) beta = Xc' W yc.
  Explanation explanation;
  explanation.weights.assign(num_features, 0.0);
  explanation.explained_output = tracked(x);
  if (num_active > 0) {
    const double total_weight = sample_weights.sum();
    const Eigen::RowVectorXd bit_means =
        (sample_weights.transpose() * bits) / total_weight;
    const double output_mean = sample_weights.dot(outputs) / total_weight;
    const Eigen::MatrixXd centered = bits.rowwise() - bit_means;
    const Eigen::VectorXd centered_outputs =
        outputs.array() - output_mean;
    const Eigen::MatrixXd weighted = sample_weights.asDiagonal() * centered;
    Eigen::MatrixXd gram = centered.transpose() * weighted;
    gram.diagonal().array() += cfg.ridge_lambda;
    const Eigen::VectorXd rhs = weighted.transpose() * centered_outputs;
    const Eigen::VectorXd beta = gram.ldlt().solve(rhs);
    for (Eigen::Index a = 0; a < num_active; ++a) {
      explanation.weights[active[a]] = beta(a);
    }
  }

  FeatureIntervalMap intervals;
  for (int f = 0; f < num_features; ++f) {
    intervals[f] = IsDegenerate(train.schema[f]) ? Interval{} : bins[f];
  }
  explanation.intervals = std::move(intervals);
  return explanation;
}

Explanation AverageExplanations(std::span<const Explanation> explanations) {
  if (explanations.empty()) throw DataError("no explanations to average");
  const size_t width = explanations.front().weights.size();
  Explanation mean;
  mean.weights.assign(width, 0.0);
  double output_sum = 0.0;
  double base_sum = 0.0;
  bool all_have_base = true;
  for (const auto& explanation : explanations) {
    if (explanation.weights.size() != width) {
      throw DataError("cannot average explanations of different widths");
    }
    for (size_t f = 0; f < width; ++f) mean.weights[f] += explanation.weights[f];
    output_sum += explanation.explained_output;
    if (explanation.base_value) {
      base_sum += *explanation.base_value;
    } else {
      all_have_base = false;
    }
    if (!mean.intervals && explanation.intervals) mean.intervals = explanation.intervals;
  }
  const auto count = static_cast<double>(explanations.size());
  for (double& w : mean.weights) w /= count;
  mean.explained_output = output_sum / count;
  if (all_have_base) mean.base_value = base_sum / count;
  return mean;
}

Explainer MakeExplainer(const Model& model, const Dataset& train,
                        const ExplainerConfig& cfg) {
  cfg.Validate();
  Explainer explainer;
  if (cfg.kind == ExplainerKind::kSurrogate) {
    explainer.explain = [&model, &train, cfg](std::span<const double> x,
                                              uint64_t seed) {
      return ExplainSurrogate(model, x, train, cfg, seed);
    };
    explainer.provides_intervals = true;
  } else {
    explainer.explain = [&model](std::span<const double> x, uint64_t) {
      return ExplainTreeShapley(model, x);
    };
    explainer.deterministic = true;
  }
  return explainer;
}

Explanation ExplainAveraged(const Explainer& explainer, std::span<const double> x,
                            int k, uint64_t seed) {
  if (k < 1) throw UsageError("k must be at least 1");
  if (explainer.deterministic || k == 1) {
    return explainer.explain(x, DeriveSeed(seed, {0}));
  }
  std::vector<Explanation> explanations;
  explanations.reserve(k);
  for (int r = 0; r < k; ++r) {
    explanations.push_back(
        explainer.explain(x, DeriveSeed(seed, {static_cast<uint64_t>(r)})));
  }
  return AverageExplanations(explanations);
}

}  // namespace fidelity
