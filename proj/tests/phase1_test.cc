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
#include <functional>

#include "fidelity/errors.h"
#include "fidelity/explainers.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace fidelity {
namespace {

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

Explanation WithWeights(std::vector<double> weights) {
  Explanation e;
  e.weights = std::move(weights);
  return e;
}

// A chain of `splits` nested splits down the left branch.
DecisionTree ChainTree(int splits, int num_features) {
  std::vector<TreeNode> nodes;
  for (int s = 0; s < splits; ++s) {
    const int index = static_cast<int>(nodes.size());
    nodes.push_back(Split(s % num_features, 0.5, index + 2, index + 1, splits - s + 1));
    nodes.push_back(Leaf(s, 1));
  }
  nodes.push_back(Leaf(-1, 1));
  // The last split's left child is the final leaf.
  nodes[nodes.size() - 3].left = static_cast<int>(nodes.size()) - 1;
  return DecisionTree(std::move(nodes), Task::kRegression, num_features);
}

DecisionTree BalancedTree(int depth, int num_features) {
  std::vector<TreeNode> nodes;
  std::function<int(int)> build = [&](int level) -> int {
    const int index = static_cast<int>(nodes.size());
    nodes.emplace_back();
    if (level == depth) {
      nodes[index] = Leaf(level, 1);
      return index;
    }
    const int left = build(level + 1);
    const int right = build(level + 1);
    nodes[index] = Split(level % num_features, 0.5, left, right,
                         nodes[left].cover + nodes[right].cover);
    return index;
  };
  build(0);
  return DecisionTree(std::move(nodes), Task::kRegression, num_features);
}

// An explainer whose weights are the indicator of the true path features.
Explainer PathIndicatorExplainer(const DecisionTree& tree) {
  Explainer explainer;
  explainer.deterministic = true;
  explainer.explain = [&tree](std::span<const double> x, uint64_t) {
    Explanation e;
    e.weights.assign(tree.num_features(), 0.0);
    for (int f : TrueFeatures(tree, x)) e.weights[f] = 1.0;
    return e;
  };
  return explainer;
}

TEST(RecallSampleSizeTest, LongestPathOrTwoThirdsOfFeatures) {
  EXPECT_EQ(RecallSampleSize(BalancedTree(5, 8)), 5);
  EXPECT_EQ(RecallSampleSize(ChainTree(40, 30)), 20);
  EXPECT_EQ(RecallSampleSize(ChainTree(40, 31)), 21);
  EXPECT_EQ(RecallSampleSize(DecisionTree::Constant(0, Task::kRegression, 4)), 0);
}

TEST(TopNFeaturesTest, OrderByAbsoluteWeight) {
  EXPECT_EQ(TopNFeatures(WithWeights({0.9, -0.5, 0.1}), 2), (FeatureSet{0, 1}));
  EXPECT_TRUE(TopNFeatures(WithWeights({0, 0, 0}), 2).empty());
  EXPECT_EQ(TopNFeatures(WithWeights({0.5, 0.1, 0.2, -0.5}), 1), (FeatureSet{0}));
  EXPECT_EQ(TopNFeatures(WithWeights({0.0, 0.3, 0.0}), 2), (FeatureSet{1}));
}

TEST(TopQuartileFeaturesTest, PercentileOfNonzeroAbsoluteWeights) {
  EXPECT_EQ(TopQuartileFeatures(WithWeights({1, -2, 3, 4})), (FeatureSet{3}));
  EXPECT_EQ(TopQuartileFeatures(WithWeights({0, 0, -0.2, 0})), (FeatureSet{2}));
  EXPECT_EQ(TopQuartileFeatures(WithWeights(std::vector<double>(8, 0.3))),
            (FeatureSet{0, 1, 2, 3, 4, 5, 6, 7}));
  // Zeros do not drag the percentile down.
  EXPECT_EQ(TopQuartileFeatures(WithWeights({0, 0, 0, 0, 0, 1, 2, 3, 4})), (FeatureSet{8}));
  EXPECT_TRUE(TopQuartileFeatures(WithWeights({0, 0})).empty());
}

TEST(RecallPrecisionTest, SetArithmetic) {
  constexpr int kPregnancies = 0, kGlucose = 1, kBmi = 5;
  EXPECT_DOUBLE_EQ(*FeatureRecall({kGlucose, kPregnancies}, {kGlucose, kPregnancies, kBmi}),
                   1.0);
  EXPECT_DOUBLE_EQ(*FeatureRecall({1, 2}, {3, 4}), 0.0);
  EXPECT_DOUBLE_EQ(*FeatureRecall({1, 2, 3, 4}, {1, 2}), 0.5);
  EXPECT_DOUBLE_EQ(*FeaturePrecision({kGlucose, kPregnancies}, {kGlucose, kBmi}), 0.5);
  EXPECT_DOUBLE_EQ(*FeaturePrecision({1, 2, 3}, {1, 3}), 1.0);
  EXPECT_DOUBLE_EQ(*FeaturePrecision({1}, {1, 2, 3, 4}), 0.25);
  EXPECT_FALSE(FeatureRecall({}, {1}).has_value());
  EXPECT_FALSE(FeaturePrecision({1}, {}).has_value());
}

TEST(RecallPrecisionTest, BoundsAndMonotonicityOnRandomSets) {
  RandomEngine rng(31);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 300; ++trial) {
    FeatureSet truth, expl, larger;
    for (int f = 0; f < 12; ++f) {
      if (coin(rng)) truth.insert(f);
      if (coin(rng)) expl.insert(f);
    }
    larger = expl;
    larger.insert(std::uniform_int_distribution<int>(0, 11)(rng));
    if (truth.empty() || expl.empty()) continue;
    const double recall = *FeatureRecall(truth, expl);
    const double precision = *FeaturePrecision(truth, expl);
    EXPECT_GE(recall, 0.0);
    EXPECT_LE(recall, 1.0);
    EXPECT_GE(precision, 0.0);
    EXPECT_LE(precision, 1.0);
    EXPECT_GE(*FeatureRecall(truth, larger), recall);
    // Dropping a feature outside the truth never lowers precision.
    FeatureSet smaller = expl;
    for (int f : expl) {
      if (!truth.contains(f) && smaller.size() > 1) {
        smaller.erase(f);
        break;
      }
    }
    EXPECT_GE(*FeaturePrecision(truth, smaller), precision);
  }
}

TEST(RunPhase1Test, PerfectExplainerScoresOne) {
  RandomEngine rng(2);
  const Dataset eval_set = testing::SyntheticDataset(40, 6, Task::kRegression, 3);
  for (int t = 0; t < 5; ++t) {
    const DecisionTree tree = testing::RandomTree(rng, 6, 5);
    const Phase1Report report =
        RunPhase1(tree, PathIndicatorExplainer(tree), eval_set, {.k_repeats = 1});
    EXPECT_DOUBLE_EQ(*report.mean_recall, 1.0);
    EXPECT_DOUBLE_EQ(*report.mean_precision, 1.0);
  }
}

TEST(RunPhase1Test, TwoThirdsCapLimitsRecallOfLongPaths) {
  // Four splits over three features: n = 2 while the deepest path uses all three.
  const DecisionTree tree = ChainTree(4, 3);
  ASSERT_EQ(RecallSampleSize(tree), 2);
  Dataset eval_set = testing::SyntheticDataset(1, 3, Task::kRegression, 3);
  eval_set.rows = {{0.1, 0.1, 0.1}};
  const Phase1Report report =
      RunPhase1(tree, PathIndicatorExplainer(tree), eval_set, {.k_repeats = 1});
  EXPECT_EQ(report.records[0].true_feature_count, 3);
  EXPECT_DOUBLE_EQ(*report.mean_recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*report.mean_precision, 1.0);
}

TEST(RunPhase1Test, SingleLeafInstancesAreSkipped) {
  const Dataset eval_set = testing::SyntheticDataset(10, 3, Task::kRegression, 3);
  const DecisionTree leaf = DecisionTree::Constant(1.0, Task::kRegression, 3);
  const Phase1Report report = RunPhase1(leaf, PathIndicatorExplainer(leaf), eval_set, {});
  EXPECT_FALSE(report.mean_recall.has_value());
  EXPECT_EQ(report.skipped.at(kSkipEmptyPath), 10);
}

TEST(RunPhase1Test, PlantedTreeMatchesHandComputedMetrics) {
  // Planted tree on features 0 and 2 of 5.
  const DecisionTree tree({Split(0, 0.5, 1, 2, 20), Leaf(0.2, 10), Split(2, 0.3, 3, 4, 10),
                           Leaf(0.6, 4), Leaf(0.9, 6)},
                          Task::kClassification, 5);
  const Dataset eval_set = testing::SyntheticDataset(20, 5, Task::kClassification, 4);
  const Model model = tree;
  const Explainer explainer = MakeExplainer(model, eval_set, {});
  const Phase1Report report = RunPhase1(tree, explainer, eval_set, {.k_repeats = 3});
  ASSERT_EQ(report.records.size(), 20u);
  for (size_t i = 0; i < 20; ++i) {
    const Instance& x = eval_set.rows[i];
    // Path by hand: feature 0, then feature 2 when x0 > 0.5.
    FeatureSet truth = {0};
    if (x[0] > 0.5) truth.insert(2);
    const std::vector<double> w = ExplainTreeShapley(model, x).weights;
    // n = longest path = 2.
    std::vector<int> order = {0, 1, 2, 3, 4};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return std::abs(w[a]) > std::abs(w[b]); });
    FeatureSet top;
    for (int f : order) {
      if (top.size() < 2 && w[f] != 0.0) top.insert(f);
    }
    int hits = 0;
    for (int f : truth) hits += top.contains(f);
    EXPECT_DOUBLE_EQ(*report.records[i].recall,
                     static_cast<double>(hits) / static_cast<double>(truth.size()))
        << i;
    EXPECT_EQ(report.records[i].true_feature_count, static_cast<int>(truth.size()));
    // Only path features carry weight, so precision is 1.
    EXPECT_DOUBLE_EQ(*report.records[i].precision, 1.0);
  }
}

TEST(RunPhase1Test, NullFeaturesNeverEnterTopQuartile) {
  RandomEngine rng(12);
  const Dataset eval_set = testing::SyntheticDataset(30, 8, Task::kRegression, 5);
  for (int t = 0; t < 10; ++t) {
    const DecisionTree inner = testing::RandomTree(rng, 4, 5);
    const Model model = DecisionTree(inner.nodes(), Task::kRegression, 8);
    for (const auto& x : eval_set.rows) {
      for (int f : TopQuartileFeatures(ExplainTreeShapley(model, x))) EXPECT_LT(f, 4);
    }
  }
}

TEST(RunPhase1Test, DeterministicAcrossRunsAndJobCounts) {
  RandomEngine rng(9);
  const DecisionTree tree = testing::RandomTree(rng, 5, 6);
  const Dataset eval_set = testing::SyntheticDataset(50, 5, Task::kRegression, 6);
  const Model model = tree;
  ExplainerConfig cfg;
  cfg.kind = ExplainerKind::kSurrogate;
  cfg.surrogate_samples = 50;
  const Explainer explainer = MakeExplainer(model, eval_set, cfg);
  const auto a = RunPhase1(tree, explainer, eval_set, {.k_repeats = 2, .seed = 4, .jobs = 1});
  const auto b = RunPhase1(tree, explainer, eval_set, {.k_repeats = 2, .seed = 4, .jobs = 4});
  ASSERT_EQ(a.records.size(), b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].recall, b.records[i].recall);
    EXPECT_EQ(a.records[i].precision, b.records[i].precision);
  }
  EXPECT_EQ(a.mean_recall, b.mean_recall);
}

}  // namespace
}  // namespace fidelity
