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

#include "fidelity/models.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "fidelity/errors.h"

namespace fidelity {
namespace {

double Sigmoid(double margin) {
  if (margin >= 0) return 1.0 / (1.0 + std::exp(-margin));
  const double e = std::exp(margin);
  return e / (1.0 + e);
}

void CheckWidth(std::span<const double> x, int num_features) {
  if (x.size() != static_cast<size_t>(num_features)) {
    throw DataError("instance has " + std::to_string(x.size()) +
                    " values, model expects " + std::to_string(num_features));
  }
}

double EnsembleMargin(const TreeEnsemble& ensemble, std::span<const double> x) {
  double sum = 0.0;
  for (const auto& tree : ensemble.trees) {
    sum += tree.node(tree.LeafIndex(x)).value;
  }
  return ensemble.base_score + ensemble.learning_rate * sum;
}

}  // namespace

DecisionTree::DecisionTree(std::vector<TreeNode> nodes, Task task,
                           int num_features)
    : nodes_(std::move(nodes)), task_(task), num_features_(num_features) {
  if (nodes_.empty()) throw DataError("tree has no nodes");
  if (num_features_ < 0) throw DataError("negative feature count");
  const int n = static_cast<int>(nodes_.size());
  bool any_cover = false;
  for (const auto& node : nodes_) any_cover |= node.cover > 0;

  // Iterative DFS: checks that every node is reached exactly once.
  std::vector<int> parent_count(n, 0);
  std::vector<std::pair<int, int>> stack = {{0, 0}};
  int visited = 0;
  while (!stack.empty()) {
    const auto [index, depth] = stack.back();
    stack.pop_back();
    ++visited;
    const TreeNode& node = nodes_[index];
    if (any_cover && node.cover <= 0) {
      throw DataError("node " + std::to_string(index) + " has no cover");
    }
    if (node.is_leaf()) {
      max_depth_ = std::max(max_depth_, depth);
      continue;
    }
    if (node.feature >= num_features_) {
      throw DataError("node " + std::to_string(index) + " splits on feature " +
                      std::to_string(node.feature) + " of " +
                      std::to_string(num_features_));
    }
    for (const int child : {node.left, node.right}) {
      if (child <= 0 || child >= n || ++parent_count[child] > 1) {
        throw DataError("node " + std::to_string(index) +
                        " has an invalid child index");
      }
      stack.push_back({child, depth + 1});
    }
    if (any_cover &&
        node.cover != nodes_[node.left].cover + nodes_[node.right].cover) {
      throw DataError("cover of node " + std::to_string(index) +
                      " is not the sum of its children");
    }
  }
  if (visited != n) throw DataError("tree contains unreachable nodes");
}

DecisionTree DecisionTree::Constant(double value, Task task, int num_features,
                                    int64_t cover) {
  return DecisionTree({TreeNode{.value = value, .cover = cover}}, task,
                      num_features);
}

bool DecisionTree::has_cover() const {
  return std::all_of(nodes_.begin(), nodes_.end(),
                     [](const TreeNode& node) { return node.cover > 0; });
}

int DecisionTree::LeafIndex(std::span<const double> x) const {
  int index = 0;
  while (!nodes_[index].is_leaf()) {
    const TreeNode& node = nodes_[index];
    index = x[node.feature] <= node.threshold ? node.left : node.right;
  }
  return index;
}

Task TaskOf(const Model& model) {
  return std::visit(
      [](const auto& m) {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, DecisionTree>) {
          return m.task();
        } else {
          return m.task;
        }
      },
      model);
}

int NumFeatures(const Model& model) {
  return std::visit(
      [](const auto& m) {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, DecisionTree>) {
          return m.num_features();
        } else {
          return m.num_features;
        }
      },
      model);
}

double Predict(const DecisionTree& tree, std::span<const double> x) {
  CheckWidth(x, tree.num_features());
  return tree.node(tree.LeafIndex(x)).value;
}

double Predict(const TreeEnsemble& ensemble, std::span<const double> x) {
  CheckWidth(x, ensemble.num_features);
  const double margin = EnsembleMargin(ensemble, x);
  return ensemble.task == Task::kClassification ? Sigmoid(margin) : margin;
}

double Predict(const Model& model, std::span<const double> x) {
  return std::visit([&](const auto& m) { return Predict(m, x); }, model);
}

double PredictMargin(const Model& model, std::span<const double> x) {
  if (const auto* ensemble = std::get_if<TreeEnsemble>(&model)) {
    CheckWidth(x, ensemble->num_features);
    return EnsembleMargin(*ensemble, x);
  }
  return Predict(std::get<DecisionTree>(model), x);
}

int PredictedClass(double probability) { return probability >= 0.5 ? 1 : 0; }

double ClassProbability(double probability, int cls) {
  return cls == 1 ? probability : 1.0 - probability;
}

double TrackedOutput(const Model& model, std::span<const double> x,
                     std::span<const double> reference) {
  const double output = Predict(model, x);
  if (TaskOf(model) == Task::kRegression) return output;
  const double reference_output =
      x.data() == reference.data() ? output : Predict(model, reference);
  return ClassProbability(output, PredictedClass(reference_output));
}

DecisionPath GetDecisionPath(const DecisionTree& tree,
                             std::span<const double> x) {
  CheckWidth(x, tree.num_features());
  DecisionPath path;
  int index = 0;
  while (!tree.node(index).is_leaf()) {
    const TreeNode& node = tree.node(index);
    const bool go_left = x[node.feature] <= node.threshold;
    path.steps.push_back(
        {node.feature, node.threshold,
         go_left ? Direction::kLessEqual : Direction::kGreater});
    index = go_left ? node.left : node.right;
  }
  path.leaf_value = tree.node(index).value;
  return path;
}

FeatureSet TrueFeatures(const DecisionTree& tree, std::span<const double> x) {
  FeatureSet features;
  for (const PathStep& step : GetDecisionPath(tree, x).steps) {
    features.insert(step.feature);
  }
  return features;
}

FeatureIntervalMap PathIntervals(const DecisionTree& tree,
                                 std::span<const double> x) {
  FeatureIntervalMap intervals;
  for (const PathStep& step : GetDecisionPath(tree, x).steps) {
    Interval& interval = intervals[step.feature];
    if (step.direction == Direction::kLessEqual) {
      interval.hi = std::min(interval.hi, step.threshold);
    } else {
      interval.lo = std::max(interval.lo, step.threshold);
    }
  }
  return intervals;
}

AccuracyReport EvaluateAccuracy(const Model& model, const Dataset& test) {
  if (TaskOf(model) != test.task) {
    throw DataError("model task '" + std::string(TaskName(TaskOf(model))) +
                    "' does not match dataset task '" +
                    std::string(TaskName(test.task)) + "'");
  }
  if (test.num_rows() == 0) throw DataError("empty evaluation dataset");
  AccuracyReport report;
  if (test.task == Task::kClassification) {
    size_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < test.num_rows(); ++i) {
      const int predicted = PredictedClass(Predict(model, test.rows[i]));
      const int actual = test.targets[i] == 1.0 ? 1 : 0;
      tp += predicted == 1 && actual == 1;
      fp += predicted == 1 && actual == 0;
      fn += predicted == 0 && actual == 1;
    }
    const size_t denominator = 2 * tp + fp + fn;
    // No positives predicted or present: perfect agreement.
    report.f1 = denominator == 0 ? 1.0
                                 : 2.0 * static_cast<double>(tp) /
                                       static_cast<double>(denominator);
    return report;
  }
  double abs_sum = 0.0;
  double pct_sum = 0.0;
  size_t pct_count = 0;
  for (size_t i = 0; i < test.num_rows(); ++i) {
    const double error = std::abs(Predict(model, test.rows[i]) - test.targets[i]);
    abs_sum += error;
    if (std::abs(test.targets[i]) < 1e-9) {
      ++report.mape_skipped;
      continue;
    }
    pct_sum += error / std::abs(test.targets[i]);
    ++pct_count;
  }
  report.mae = abs_sum / static_cast<double>(test.num_rows());
  if (pct_count > 0) report.mape = pct_sum / static_cast<double>(pct_count);
  return report;
}

}  // namespace fidelity
