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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "fidelity/errors.h"
#include "fidelity/models.h"

namespace fidelity {
namespace {

enum class Criterion { kGini, kSquaredError };

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// Label statistics of a set of rows.
struct Moments {
  double count = 0.0;
  double sum = 0.0;
  double sum_squares = 0.0;

  void Add(double y) {
    count += 1.0;
    sum += y;
    sum_squares += y * y;
  }
  Moments operator-(const Moments& other) const {
    return {count - other.count, sum - other.sum,
            sum_squares - other.sum_squares};
  }
  double mean() const { return sum / count; }

  // Impurity scaled by the row count: n * gini, or the sum of squared errors.
  double WeightedImpurity(Criterion criterion) const {
    if (count <= 0.0) return 0.0;
    if (criterion == Criterion::kGini) {
      const double p = sum / count;
      return count * 2.0 * p * (1.0 - p);
    }
    return std::max(0.0, sum_squares - sum * sum / count);
  }
};

double Midpoint(double a, double b) {
  const double mid = a + (b - a) / 2.0;
  return mid < b ? mid : a;
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<Instance>& rows, const std::vector<double>& labels,
              Criterion criterion, std::optional<int> max_depth,
              int min_samples_split, int min_samples_leaf)
      : rows_(rows),
        labels_(labels),
        criterion_(criterion),
        max_depth_(max_depth),
        min_samples_split_(std::max(2, min_samples_split)),
        min_samples_leaf_(std::max(1, min_samples_leaf)) {}

  std::vector<TreeNode> Build(std::vector<size_t> indices) {
    nodes_.clear();
    Grow(indices, 0);
    return std::move(nodes_);
  }

 private:
  int Grow(std::vector<size_t>& indices, int depth) {
    Moments total;
    for (const size_t i : indices) total.Add(labels_[i]);
    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{.value = total.mean(),
                              .cover = static_cast<int64_t>(indices.size())});

    const auto n = static_cast<int>(indices.size());
    const bool depth_reached = max_depth_.has_value() && depth >= *max_depth_;
    if (depth_reached || n < min_samples_split_ || n < 2 * min_samples_leaf_) {
      return index;
    }
    const double impurity = total.WeightedImpurity(criterion_);
    if (impurity <= 1e-12 * std::max(1.0, total.sum_squares)) return index;

    const SplitChoice split = FindSplit(indices, total, impurity);
    if (split.feature < 0) return index;

    std::vector<size_t> left, right;
    for (const size_t i : indices) {
      (rows_[i][split.feature] <= split.threshold ? left : right).push_back(i);
    }
    indices.clear();
    indices.shrink_to_fit();
    const int left_index = Grow(left, depth + 1);
    const int right_index = Grow(right, depth + 1);
    TreeNode& node = nodes_[index];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left_index;
    node.right = right_index;
    node.value = 0.0;
    return index;
  }

  // Scans features in increasing index and thresholds in increasing value;
  // only a strictly larger gain replaces the incumbent.
  SplitChoice FindSplit(const std::vector<size_t>& indices, const Moments& total,
                        double impurity) const {
    SplitChoice best;
    const double tolerance = 1e-12 * std::max(1.0, impurity);
    std::vector<size_t> order(indices);
    const int num_features = rows_.empty() ? 0 : static_cast<int>(rows_[0].size());
    const size_t n = order.size();
    for (int f = 0; f < num_features; ++f) {
      std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return rows_[a][f] < rows_[b][f];
      });
      Moments left;
      for (size_t k = 0; k + 1 < n; ++k) {
        left.Add(labels_[order[k]]);
        const double value = rows_[order[k]][f];
        const double next = rows_[order[k + 1]][f];
        if (value == next) continue;
        if (k + 1 < static_cast<size_t>(min_samples_leaf_) ||
            n - k - 1 < static_cast<size_t>(min_samples_leaf_)) {
          continue;
        }
        const Moments right = total - left;
        const double gain = impurity - left.WeightedImpurity(criterion_) -
                            right.WeightedImpurity(criterion_);
        if (gain > tolerance && gain > best.gain + tolerance) {
          best = {f, Midpoint(value, next), gain};
        }
      }
    }
    return best;
  }

  const std::vector<Instance>& rows_;
  const std::vector<double>& labels_;
  Criterion criterion_;
  std::optional<int> max_depth_;
  int min_samples_split_;
  int min_samples_leaf_;
  std::vector<TreeNode> nodes_;
};

std::vector<size_t> AllRows(size_t n) {
  std::vector<size_t> indices(n);
  std::iota(indices.begin(), indices.end(), 0);
  return indices;
}

double LogLoss(double label, double margin) {
  // log(1 + exp(m)) - y * m, computed stably.
  const double softplus =
      margin > 0 ? margin + std::log1p(std::exp(-margin)) : std::log1p(std::exp(margin));
  return softplus - label * margin;
}

double Sigmoid(double margin) {
  if (margin >= 0) return 1.0 / (1.0 + std::exp(-margin));
  const double e = std::exp(margin);
  return e / (1.0 + e);
}

}  // namespace

DecisionTree FitCart(const Dataset& train, const CartParams& params) {
  if (train.num_rows() == 0) throw DataError("cannot train on an empty dataset");
  train.Validate();
  if (params.max_depth && *params.max_depth < 0) {
    throw UsageError("max_depth must be non-negative");
  }
  TreeBuilder builder(train.rows, train.targets,
                      train.task == Task::kClassification ? Criterion::kGini
                                                          : Criterion::kSquaredError,
                      params.max_depth, params.min_samples_split,
                      params.min_samples_leaf);
  return DecisionTree(builder.Build(AllRows(train.num_rows())), train.task,
                      static_cast<int>(train.num_features()));
}

TreeEnsemble FitGbt(const Dataset& train, const GbtParams& params) {
  if (train.num_rows() == 0) throw DataError("cannot train on an empty dataset");
  train.Validate();
  if (params.num_trees < 0 || params.max_depth < 0 || params.learning_rate <= 0) {
    throw UsageError("invalid boosting parameters");
  }
  const size_t n = train.num_rows();
  TreeEnsemble ensemble;
  ensemble.task = train.task;
  ensemble.learning_rate = params.learning_rate;
  ensemble.num_features = static_cast<int>(train.num_features());

  double mean = 0.0;
  for (const double y : train.targets) mean += y;
  mean /= static_cast<double>(n);
  if (train.task == Task::kClassification) {
    const double p = std::clamp(mean, 1e-6, 1.0 - 1e-6);
    ensemble.base_score = std::log(p / (1.0 - p));
  } else {
    ensemble.base_score = mean;
  }

  std::vector<double> margins(n, ensemble.base_score);
  std::vector<double> gradients(n);
  TreeBuilder builder(train.rows, gradients, Criterion::kSquaredError,
                      params.max_depth, 2, params.min_samples_leaf);
  for (int t = 0; t < params.num_trees; ++t) {
    for (size_t i = 0; i < n; ++i) {
      const double prediction = train.task == Task::kClassification
                                    ? Sigmoid(margins[i])
                                    : margins[i];
      gradients[i] = train.targets[i] - prediction;
    }
    DecisionTree tree(builder.Build(AllRows(n)), Task::kRegression,
                      ensemble.num_features);
    for (size_t i = 0; i < n; ++i) {
      margins[i] += ensemble.learning_rate *
                    tree.node(tree.LeafIndex(train.rows[i])).value;
    }
    ensemble.trees.push_back(std::move(tree));
  }
  return ensemble;
}

double TrainingLoss(const TreeEnsemble& ensemble, const Dataset& train,
                    size_t num_trees) {
  num_trees = std::min(num_trees, ensemble.trees.size());
  double loss = 0.0;
  for (size_t i = 0; i < train.num_rows(); ++i) {
    double sum = 0.0;
    for (size_t t = 0; t < num_trees; ++t) {
      const auto& tree = ensemble.trees[t];
      sum += tree.node(tree.LeafIndex(train.rows[i])).value;
    }
    const double margin = ensemble.base_score + ensemble.learning_rate * sum;
    if (ensemble.task == Task::kClassification) {
      loss += LogLoss(train.targets[i], margin);
    } else {
      loss += (train.targets[i] - margin) * (train.targets[i] - margin);
    }
  }
  return loss / static_cast<double>(train.num_rows());
}

}  // namespace fidelity
