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

#include <cmath>

#include "fidelity/models.h"
#include "fidelity/tabular.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace fidelity {
namespace {

Dataset Columns(std::vector<Instance> rows, std::vector<double> targets, Task task) {
  Dataset d;
  d.task = task;
  for (size_t f = 0; f < rows.front().size(); ++f) {
    d.schema.push_back({.name = "f" + std::to_string(f)});
  }
  d.rows = std::move(rows);
  d.targets = std::move(targets);
  ComputeSchemaStatistics(d.rows, d.schema);
  return d;
}

TEST(FitCartTest, SeparableLineGivesOneSplitBetweenClasses) {
  const Dataset d = Columns({{1}, {2}, {3}, {4}, {6}, {7}, {8}, {9}},
                            {0, 0, 0, 0, 1, 1, 1, 1}, Task::kClassification);
  const DecisionTree tree = FitCart(d, {});
  ASSERT_EQ(tree.nodes().size(), 3u);
  EXPECT_EQ(tree.root().feature, 0);
  EXPECT_GE(tree.root().threshold, 4.0);
  EXPECT_LT(tree.root().threshold, 6.0);
  EXPECT_DOUBLE_EQ(Predict(tree, Instance{2}), 0.0);
  EXPECT_DOUBLE_EQ(Predict(tree, Instance{8}), 1.0);
}

TEST(FitCartTest, PureTargetGivesSingleLeaf) {
  const Dataset d = Columns({{1, 5}, {2, 4}, {3, 3}}, {1, 1, 1}, Task::kClassification);
  const DecisionTree tree = FitCart(d, {});
  EXPECT_EQ(tree.nodes().size(), 1u);
  EXPECT_DOUBLE_EQ(tree.root().value, 1.0);
}

TEST(FitCartTest, RegressionLeavesHoldMeans) {
  const Dataset d = Columns({{0}, {0.1}, {1}, {1.1}}, {2, 4, 10, 12}, Task::kRegression);
  const DecisionTree tree = FitCart(d, {.max_depth = 1});
  EXPECT_DOUBLE_EQ(Predict(tree, Instance{0.05}), 3.0);
  EXPECT_DOUBLE_EQ(Predict(tree, Instance{1.05}), 11.0);
}

TEST(FitCartTest, RespectsDepthAndLeafSizeAndCover) {
  const Dataset d = testing::SyntheticDataset(200, 5, Task::kClassification, 4);
  const DecisionTree tree = FitCart(d, {.max_depth = 3, .min_samples_leaf = 7});
  EXPECT_LE(tree.max_depth(), 3);
  EXPECT_EQ(tree.root().cover, 200);
  for (const TreeNode& node : tree.nodes()) {
    if (node.is_leaf()) {
      EXPECT_GE(node.cover, 7);
    } else {
      EXPECT_EQ(node.cover, tree.node(node.left).cover + tree.node(node.right).cover);
    }
  }
}

TEST(FitCartTest, UnlimitedDepthFitsTrainingDataWithoutNoise) {
  Dataset d = testing::SyntheticDataset(100, 3, Task::kRegression, 8);
  const DecisionTree tree = FitCart(d, {});
  for (size_t i = 0; i < d.num_rows(); ++i) {
    EXPECT_DOUBLE_EQ(Predict(tree, d.rows[i]), d.targets[i]);
  }
}

TEST(FitCartTest, Deterministic) {
  const Dataset d = testing::SyntheticDataset(150, 4, Task::kClassification, 2);
  EXPECT_EQ(FitCart(d, {.max_depth = 4}), FitCart(d, {.max_depth = 4}));
}

TEST(FitGbtTest, ZeroTreesPredictTargetMean) {
  const Dataset d = Columns({{0}, {1}, {2}}, {1, 2, 6}, Task::kRegression);
  const TreeEnsemble ensemble = FitGbt(d, {.num_trees = 0});
  EXPECT_TRUE(ensemble.trees.empty());
  EXPECT_DOUBLE_EQ(Predict(ensemble, Instance{5}), 3.0);
}

TEST(FitGbtTest, ClassificationBaseScoreIsLogOdds) {
  const Dataset d = Columns({{0}, {1}, {2}, {3}}, {1, 0, 0, 0}, Task::kClassification);
  const TreeEnsemble ensemble = FitGbt(d, {.num_trees = 0});
  EXPECT_NEAR(ensemble.base_score, std::log(0.25 / 0.75), 1e-12);
}

TEST(FitGbtTest, SeparableTwoDimensionalDataIsFitExactly) {
  std::vector<Instance> rows;
  std::vector<double> labels;
  RandomEngine rng(12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (rows.size() < 20) {
    const double a = unit(rng), b = unit(rng);
    // Keep a margin around the boundary a + b = 1.
    if (std::abs(a + b - 1.0) < 0.1) continue;
    rows.push_back({a, b});
    labels.push_back(a + b > 1.0 ? 1.0 : 0.0);
  }
  const Dataset d = Columns(rows, labels, Task::kClassification);
  const TreeEnsemble ensemble = FitGbt(d, {});
  for (size_t i = 0; i < d.num_rows(); ++i) {
    EXPECT_EQ(PredictedClass(Predict(ensemble, d.rows[i])), d.targets[i]);
  }
  EXPECT_DOUBLE_EQ(*EvaluateAccuracy(ensemble, d).f1, 1.0);
}

TEST(FitGbtTest, TrainingLossNeverIncreases) {
  for (const Task task : {Task::kClassification, Task::kRegression}) {
    const Dataset d = testing::SyntheticDataset(120, 4, task, 21);
    const TreeEnsemble ensemble = FitGbt(d, {.num_trees = 30, .max_depth = 3});
    double previous = TrainingLoss(ensemble, d, 0);
    for (size_t t = 1; t <= ensemble.trees.size(); ++t) {
      const double loss = TrainingLoss(ensemble, d, t);
      EXPECT_LE(loss, previous + 1e-9) << TaskName(task) << " tree " << t;
      previous = loss;
    }
  }
}

TEST(FitGbtTest, Deterministic) {
  const Dataset d = testing::SyntheticDataset(80, 3, Task::kClassification, 5);
  EXPECT_EQ(FitGbt(d, {.num_trees = 5}), FitGbt(d, {.num_trees = 5}));
}

}  // namespace
}  // namespace fidelity
