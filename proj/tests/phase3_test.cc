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

#include <cmath>
#include <limits>

#include "fidelity/errors.h"
#include "fidelity/explainers.h"
#include "fidelity/phase2.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace fidelity {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TreeNode Split(int feature, double threshold, int left, int right, int64_t cover) {
  TreeNode node;
  node.feature = feature;
  node.threshold = threshold;
  node.left = left;
  node.right = right;
  node.cover = cover;
  return node;
}

TreeNode Leaf(double value, int64_t cover) {
  TreeNode node;
  node.value = value;
  node.cover = cover;
  return node;
}

std::vector<FeatureSchema> GlucoseSchema() {
  FeatureSchema glucose;
  glucose.name = "Glucose";
  glucose.observed_min = 0.0;
  glucose.observed_max = 200.0;
  FeatureSchema indicator;
  indicator.name = "flag";
  indicator.kind = FeatureKind::kBinaryIndicator;
  indicator.observed_max = 1.0;
  return {glucose, indicator};
}

TEST(FidelityMetricTest, Arithmetic) {
  EXPECT_DOUBLE_EQ(*ContraryFidelity(0.8, std::vector<double>{0.8, 0.8}), 0.0);
  EXPECT_DOUBLE_EQ(*SupportingFidelity(0.8, std::vector<double>{0.8, 0.8}), 1.0);
  EXPECT_DOUBLE_EQ(*ContraryFidelity(0.8, std::vector<double>{0.4, 0.8}), 0.25);
  EXPECT_DOUBLE_EQ(*SupportingFidelity(0.8, std::vector<double>{0.4, 0.8}), 0.75);
  EXPECT_FALSE(ContraryFidelity(0.0, std::vector<double>{1.0}).has_value());
  EXPECT_FALSE(ContraryFidelity(1.0, std::vector<double>{}).has_value());
}

TEST(FidelityMetricTest, ComplementAndNonNegativity) {
  RandomEngine rng(1);
  std::uniform_real_distribution<double> value(-5.0, 5.0);
  for (int t = 0; t < 200; ++t) {
    const double y = value(rng);
    std::vector<double> ys(10);
    for (auto& v : ys) v = value(rng);
    const double c = *ContraryFidelity(y, ys);
    EXPECT_GE(c, 0.0);
    EXPECT_EQ(*SupportingFidelity(y, ys) + c, 1.0 - c + c);
    EXPECT_EQ(*SupportingFidelity(y, ys), 1.0 - c);
  }
}

TEST(PerturbSupportingTest, PointIntervalKeepsValue) {
  const Instance x = {120.0, 1.0};
  const auto p = PerturbSupporting(x, {{0, {120.0, 120.0}}}, GlucoseSchema(), 3);
  EXPECT_EQ(p.instance, x);
  EXPECT_TRUE(p.skipped.contains(0));
}

TEST(PerturbSupportingTest, DrawsStayInsideAndAreReproducible) {
  const Instance x = {120.0, 1.0};
  const FeatureIntervalMap intervals = {{0, {-kInf, 127.5}}, {1, {1.0, 1.0}}};
  for (uint64_t seed = 0; seed < 300; ++seed) {
    const auto p = PerturbSupporting(x, intervals, GlucoseSchema(), seed);
    EXPECT_GT(p.instance[0], 0.0);
    EXPECT_LE(p.instance[0], 127.5);
    EXPECT_EQ(p.instance[1], 1.0);
    EXPECT_EQ(p.instance, PerturbSupporting(x, intervals, GlucoseSchema(), seed).instance);
  }
}

TEST(PerturbContraryTest, JustAboveUpperBound) {
  const Instance x = {120.0, 1.0};
  const double delta = 0.05 * 200.0;
  for (uint64_t seed = 0; seed < 300; ++seed) {
    const auto p = PerturbContrary(x, {{0, {-kInf, 127.5}}}, GlucoseSchema(), 0.05, seed);
    EXPECT_GT(p.instance[0], 127.5);
    EXPECT_LE(p.instance[0], 127.5 + delta);
  }
}

TEST(PerturbContraryTest, IndicatorFlipsAndBoundsAreViolated) {
  const Instance x = {120.0, 1.0};
  const FeatureIntervalMap intervals = {{0, {100.0, 127.5}}, {1, {1.0, 1.0}}};
  for (uint64_t seed = 0; seed < 300; ++seed) {
    const auto p = PerturbContrary(x, intervals, GlucoseSchema(), 0.05, seed);
    EXPECT_EQ(p.instance[1], 0.0);
    EXPECT_FALSE(intervals.at(0).Contains(p.instance[0]));
    EXPECT_TRUE((p.instance[0] > 127.5 && p.instance[0] <= 137.5) ||
                (p.instance[0] < 100.0 && p.instance[0] >= 90.0));
  }
}

TEST(PerturbContraryTest, UnboundedIntervalIsSkipped) {
  const auto p =
      PerturbContrary(Instance{1.0, 0.0}, {{0, {-kInf, kInf}}}, GlucoseSchema(), 0.05, 1);
  EXPECT_TRUE(p.perturbed.empty());
  EXPECT_TRUE(p.skipped.contains(0));
}

TEST(RelevantIntervalsTest, SurrogateBinsAndIndicatorsAndWeightBins) {
  const Dataset train = testing::SyntheticDataset(60, 3, Task::kRegression, 2, true);
  const Model stump = DecisionTree({Split(0, 0.5, 1, 2, 10), Leaf(1.0, 5), Leaf(3.0, 5)},
                                   Task::kRegression, 3);
  const Instance x = {0.8, 0.3, 1.0};

  ExplainerConfig surrogate_cfg;
  surrogate_cfg.kind = ExplainerKind::kSurrogate;
  const Explainer surrogate = MakeExplainer(stump, train, surrogate_cfg);
  const Explanation e = surrogate.explain(x, 1);
  const auto from_bins =
      RelevantIntervals(e, {0, 1, 2}, std::nullopt, surrogate, x, train.schema, 100, 0);
  EXPECT_EQ(from_bins, *e.intervals);

  const Explainer shapley = MakeExplainer(stump, train, {});
  const Explanation w = shapley.explain(x, 1);
  const auto from_scan = RelevantIntervals(w, {0, 2}, 0.1, shapley, x, train.schema, 100, 9);
  EXPECT_EQ(from_scan.at(0),
            WeightBinInterval(shapley, x, 0, 0.1, train.schema[0], 100, 9));
  EXPECT_GT(from_scan.at(0).lo, 0.5);
  EXPECT_EQ(from_scan.at(2), (Interval{1.0, 1.0}));
  EXPECT_THROW(
      RelevantIntervals(w, {0}, std::nullopt, shapley, x, train.schema, 100, 9),
      UsageError);
}

TEST(RunPhase3Test, PathIntervalsGiveFullSupportOnClassificationTrees) {
  RandomEngine rng(6);
  const Dataset eval_set = testing::SyntheticDataset(40, 5, Task::kClassification, 8);
  for (int t = 0; t < 5; ++t) {
    const DecisionTree tree = testing::RandomTree(rng, 5, 6, Task::kClassification);
    const Model model = tree;
    const Explainer explainer = MakeExplainer(model, eval_set, {});
    Phase3Params params;
    params.optimal_d = 9;
    params.seed = 3;
    const Phase3Report report =
        RunPhase3(model, explainer, eval_set, params,
                  [&tree](std::span<const double> x, const Explanation&, const FeatureSet&) {
                    return PathIntervals(tree, x);
                  });
    for (const auto& record : report.records) {
      ASSERT_TRUE(record.supporting.has_value());
      EXPECT_EQ(*record.supporting, 1.0);
      EXPECT_GE(record.y_original, 0.5);
    }
  }
}

TEST(RunPhase3Test, ConstantModelIsFullySupportedAndNeverContradicted) {
  const Dataset eval_set = testing::SyntheticDataset(15, 3, Task::kRegression, 8);
  const Model model = DecisionTree::Constant(2.0, Task::kRegression, 3);
  for (const ExplainerKind kind : {ExplainerKind::kTreeShapley, ExplainerKind::kSurrogate}) {
    ExplainerConfig cfg;
    cfg.kind = kind;
    cfg.k_repeats = 2;
    cfg.surrogate_samples = 50;
    const Explainer explainer = MakeExplainer(model, eval_set, cfg);
    Phase3Params params;
    params.optimal_p = 0.1;
    params.k_repeats = 2;
    const Phase3Report report = RunPhase3(model, explainer, eval_set, params);
    for (const auto& record : report.records) {
      EXPECT_EQ(record.supporting, 1.0);
      EXPECT_EQ(record.contrary, 0.0);
    }
  }
}

TEST(RunPhase3Test, ZeroRegressionOutputIsExcluded) {
  const Dataset eval_set = testing::SyntheticDataset(5, 2, Task::kRegression, 8);
  const Model model = DecisionTree::Constant(0.0, Task::kRegression, 2);
  const Explainer explainer = MakeExplainer(model, eval_set, {});
  Phase3Params params;
  params.optimal_p = 0.1;
  const Phase3Report report = RunPhase3(model, explainer, eval_set, params);
  EXPECT_FALSE(report.mean_supporting.has_value());
  EXPECT_EQ(report.excluded.at("supporting:zero_output"), 5);
  EXPECT_EQ(report.excluded.at("contrary:zero_output"), 5);
}

TEST(RunPhase3Test, WeightOnlyExplainerNeedsBinSize) {
  const Dataset eval_set = testing::SyntheticDataset(5, 2, Task::kRegression, 8);
  const Model model = DecisionTree::Constant(1.0, Task::kRegression, 2);
  const Explainer explainer = MakeExplainer(model, eval_set, {});
  EXPECT_THROW(RunPhase3(model, explainer, eval_set, {}), UsageError);
  Phase3Params params;
  params.optimal_p = 0.1;
  params.optimal_d = 10;
  EXPECT_THROW(RunPhase3(model, explainer, eval_set, params), UsageError);
}

// Straight-line version of the procedure for one instance.
struct OracleScores {
  std::optional<double> supporting;
  std::optional<double> contrary;
};

OracleScores OracleInstance(const Model& model, const Explainer& explainer,
                            const Dataset& eval_set, const Phase3Params& params, size_t i) {
  const Instance& x = eval_set.rows[i];
  const double y = TrackedOutput(model, x);
  const Explanation e = ExplainAveraged(explainer, x, params.k_repeats, DeriveSeed(params.seed, {i}));
  const FeatureSet selected = DecileFeatureSets(e)[params.optimal_d - 1];
  FeatureIntervalMap intervals;
  for (int f : selected) {
    if (e.intervals) {
      intervals[f] = e.intervals->at(f);
    } else if (eval_set.schema[f].kind == FeatureKind::kBinaryIndicator) {
      intervals[f] = {x[f], x[f]};
    } else {
      intervals[f] = WeightBinInterval(explainer, x, f, *params.optimal_p, eval_set.schema[f],
                                       params.grid_points, DeriveSeed(params.seed, {i, 1}));
    }
  }
  double supporting_sum = 0.0, contrary_sum = 0.0;
  for (int j = 0; j < params.perturbation_repeats; ++j) {
    const uint64_t uj = static_cast<uint64_t>(j);
    const Instance inside =
        PerturbSupporting(x, intervals, eval_set.schema, DeriveSeed(params.seed, {i, 2, uj}))
            .instance;
    supporting_sum += std::abs(y - TrackedOutput(model, inside, x)) / std::abs(y);
    const Instance outside = PerturbContrary(x, intervals, eval_set.schema, params.margin,
                                             DeriveSeed(params.seed, {i, 3, uj}))
                                 .instance;
    contrary_sum += std::abs(y - TrackedOutput(model, outside, x)) / std::abs(y);
  }
  return {1.0 - supporting_sum / params.perturbation_repeats,
          contrary_sum / params.perturbation_repeats};
}

TEST(RunPhase3Test, MatchesStraightLineReimplementation) {
  RandomEngine rng(10);
  const Dataset eval_set = testing::SyntheticDataset(20, 4, Task::kClassification, 11, true);
  const Model model = testing::RandomEnsemble(rng, 4, 4, 3, Task::kClassification);
  for (const ExplainerKind kind : {ExplainerKind::kTreeShapley, ExplainerKind::kSurrogate}) {
    ExplainerConfig cfg;
    cfg.kind = kind;
    cfg.surrogate_samples = 60;
    const Explainer explainer = MakeExplainer(model, eval_set, cfg);
    Phase3Params params;
    params.optimal_d = 6;
    params.optimal_p = 0.2;
    params.k_repeats = 3;
    params.grid_points = 20;
    params.seed = 77;
    const Phase3Report report = RunPhase3(model, explainer, eval_set, params);
    double support_total = 0.0;
    int support_count = 0;
    for (size_t i = 0; i < eval_set.num_rows(); ++i) {
      const auto& record = report.records[i];
      const OracleScores oracle = OracleInstance(model, explainer, eval_set, params, i);
      ASSERT_TRUE(record.supporting.has_value());
      EXPECT_NEAR(*record.supporting, *oracle.supporting, 1e-12) << i;
      if (record.contrary) EXPECT_NEAR(*record.contrary, *oracle.contrary, 1e-12) << i;
      support_total += *oracle.supporting;
      ++support_count;
    }
    EXPECT_NEAR(*report.mean_supporting, support_total / support_count, 1e-12);
  }
}

TEST(RunPhase3Test, DeterministicAcrossJobCounts) {
  RandomEngine rng(12);
  const Dataset eval_set = testing::SyntheticDataset(30, 4, Task::kRegression, 13);
  const Model model = testing::RandomEnsemble(rng, 4, 5, 3, Task::kRegression);
  const Explainer explainer = MakeExplainer(model, eval_set, {});
  Phase3Params params;
  params.optimal_p = 0.1;
  params.grid_points = 20;
  params.seed = 5;
  params.jobs = 1;
  const Phase3Report a = RunPhase3(model, explainer, eval_set, params);
  params.jobs = 3;
  const Phase3Report b = RunPhase3(model, explainer, eval_set, params);
  for (size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].supporting, b.records[i].supporting);
    EXPECT_EQ(a.records[i].contrary, b.records[i].contrary);
  }
}

}  // namespace
}  // namespace fidelity
