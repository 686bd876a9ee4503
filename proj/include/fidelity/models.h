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

// Tree models: the white-box decision tree and the black-box gradient boosted
// ensemble, with decision path introspection and accuracy metrics.
//
// Split semantics: an instance goes to the left child when
// value <= threshold, and to the right child otherwise.

#ifndef FIDELITY_MODELS_H_
#define FIDELITY_MODELS_H_

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <variant>
#include <vector>

#include "fidelity/tabular.h"

namespace fidelity {

struct TreeNode {
  // Split feature, or -1 for a leaf.
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  // Leaf output: class-1 probability for classification trees, the
  // regression value (or boosting step) otherwise. Unused on splits.
  double value = 0.0;
  // Number of training rows reaching the node.
  int64_t cover = 0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

// A binary tree stored as a flat node array; node 0 is the root.
class DecisionTree {
 public:
  // Validates the structure (child indices, feature indices, cover
  // conservation when covers are present). Throws DataError.
  DecisionTree(std::vector<TreeNode> nodes, Task task, int num_features);

  // A single leaf.
  static DecisionTree Constant(double value, Task task, int num_features,
                               int64_t cover = 1);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(int index) const { return nodes_[index]; }
  const TreeNode& root() const { return nodes_.front(); }
  Task task() const { return task_; }
  int num_features() const { return num_features_; }
  // Number of splits on the longest root-to-leaf path.
  int max_depth() const { return max_depth_; }
  // True when every node carries a positive cover.
  bool has_cover() const;

  // Index of the leaf reached by `x`. No width check.
  int LeafIndex(std::span<const double> x) const;

  bool operator==(const DecisionTree&) const = default;

 private:
  std::vector<TreeNode> nodes_;
  Task task_;
  int num_features_;
  int max_depth_ = 0;
};

// prediction = sigmoid?(base_score + learning_rate * sum of tree outputs),
// with the sigmoid applied for classification.
struct TreeEnsemble {
  std::vector<DecisionTree> trees;
  double learning_rate = 0.3;
  double base_score = 0.0;
  Task task = Task::kClassification;
  int num_features = 0;

  size_t num_trees() const { return trees.size(); }
  bool operator==(const TreeEnsemble&) const = default;
};

using Model = std::variant<DecisionTree, TreeEnsemble>;

Task TaskOf(const Model& model);
int NumFeatures(const Model& model);

// Regression value, or the probability of class 1. Throws DataError on a
// width mismatch.
double Predict(const DecisionTree& tree, std::span<const double> x);
double Predict(const TreeEnsemble& ensemble, std::span<const double> x);
double Predict(const Model& model, std::span<const double> x);

// Output before the link function: equal to Predict() for single trees, the
// log-odds for classification ensembles.
double PredictMargin(const Model& model, std::span<const double> x);

// Class predicted at the 0.5 threshold (p >= 0.5 -> 1).
int PredictedClass(double probability);

// Probability the model assigns to class `cls`: p for class 1, 1 - p for
// class 0.
double ClassProbability(double probability, int cls);

// The quantity explanations and fidelity metrics track for an instance:
// the probability of the class predicted for `reference` (classification) or
// the regression value. Evaluating at `x` lets perturbed inputs be scored
// against the class originally predicted for `reference`.
double TrackedOutput(const Model& model, std::span<const double> x,
                     std::span<const double> reference);
inline double TrackedOutput(const Model& model, std::span<const double> x) {
  return TrackedOutput(model, x, x);
}

enum class Direction { kLessEqual, kGreater };

struct PathStep {
  int feature = 0;
  double threshold = 0.0;
  Direction direction = Direction::kLessEqual;
  bool operator==(const PathStep&) const = default;
};

struct DecisionPath {
  std::vector<PathStep> steps;
  double leaf_value = 0.0;
};

DecisionPath GetDecisionPath(const DecisionTree& tree, std::span<const double> x);

using FeatureSet = std::set<int>;

// Unique features tested along the decision path of `x`.
FeatureSet TrueFeatures(const DecisionTree& tree, std::span<const double> x);

// Value range of one feature. Bounds may be infinite. Path intervals are
// (lo, hi] half-open as implied by the split semantics; explanation intervals
// are closed.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool Contains(double v) const { return lo <= v && v <= hi; }
  bool operator==(const Interval&) const = default;
};

using FeatureIntervalMap = std::map<int, Interval>;

// For every true feature, the intersection of the half-lines implied by the
// visited splits: (-inf, t] for "<=" steps and (t, +inf) for ">" steps.
FeatureIntervalMap PathIntervals(const DecisionTree& tree,
                                 std::span<const double> x);

struct CartParams {
  std::optional<int> max_depth;
  int min_samples_split = 2;
  int min_samples_leaf = 1;
};

// Greedy CART: Gini impurity for classification, squared error for
// regression. Thresholds sit at the midpoint of consecutive distinct values.
// Among equal-gain candidates the lowest feature index, then the lowest
// threshold, wins, so training is deterministic.
DecisionTree FitCart(const Dataset& train, const CartParams& params);

struct GbtParams {
  int num_trees = 100;
  double learning_rate = 0.3;
  int max_depth = 6;
  int min_samples_leaf = 1;
};

// Gradient boosting of regression trees on the negative gradient of the loss
// in margin space: log-loss for classification (base score = log-odds of
// class 1), squared error for regression (base score = target mean).
// Each tree leaf holds the mean negative gradient of its rows.
TreeEnsemble FitGbt(const Dataset& train, const GbtParams& params);

// Mean training loss of the ensemble truncated to its first `num_trees`
// trees: log-loss for classification, squared error for regression.
double TrainingLoss(const TreeEnsemble& ensemble, const Dataset& train,
                    size_t num_trees);

struct AccuracyReport {
  std::optional<double> f1;
  std::optional<double> mae;
  std::optional<double> mape;
  // Rows left out of MAPE because |target| < 1e-9.
  size_t mape_skipped = 0;
};

// F1 of class 1 for classification; MAE and MAPE for regression.
// Throws DataError on task or width mismatch.
AccuracyReport EvaluateAccuracy(const Model& model, const Dataset& test);

}  // namespace fidelity

#endif  // FIDELITY_MODELS_H_
