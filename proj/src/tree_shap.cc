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

// Path-dependent tree Shapley values.
//
// The recursion walks every root-to-leaf path once while maintaining, for the
// unique features met so far, the proportion of feature subsets (weighted by
// Shapley coefficients) that flow down the current path. Each path element
// records the fraction of "zero" paths (feature unknown: follow the cover
// ratio) and "one" paths (feature known: follow x). Runs in
// O(leaves * depth^2) per tree.

#include <cmath>
#include <string>
#include <vector>

#include "fidelity/errors.h"
#include "fidelity/explainers.h"

namespace fidelity {
namespace {

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double weight = 0.0;
};

using Path = std::vector<PathElement>;

void ExtendPath(Path& path, int depth, double zero_fraction, double one_fraction,
                int feature) {
  path[depth] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].weight += one_fraction * path[i].weight * (i + 1) / (depth + 1.0);
    path[i].weight = zero_fraction * path[i].weight * (depth - i) / (depth + 1.0);
  }
}

// Removes element `index` from the path, undoing its ExtendPath().
void UnwindPath(Path& path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next_one_portion = path[depth].weight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = path[i].weight;
      path[i].weight = next_one_portion * (depth + 1) / ((i + 1) * one);
      next_one_portion = tmp - path[i].weight * zero * (depth - i) / (depth + 1.0);
    } else {
      path[i].weight = path[i].weight * (depth + 1) / (zero * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

// Total weight of the path if element `index` were unwound, without
// modifying it.
double UnwoundPathSum(const Path& path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next_one_portion = path[depth].weight;
  double total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = next_one_portion * (depth + 1) / ((i + 1) * one);
      total += tmp;
      next_one_portion = path[i].weight - tmp * zero * (depth - i) / (depth + 1.0);
    } else {
      total += path[i].weight * (depth + 1) / (zero * (depth - i));
    }
  }
  return total;
}

void Recurse(const DecisionTree& tree, std::span<const double> x, double scale,
             int node_index, Path path, int depth, double parent_zero_fraction,
             double parent_one_fraction, int parent_feature,
             std::vector<double>& phi) {
  ExtendPath(path, depth, parent_zero_fraction, parent_one_fraction,
             parent_feature);
  const TreeNode& node = tree.node(node_index);
  if (node.is_leaf()) {
    for (int i = 1; i <= depth; ++i) {
      const double w = UnwoundPathSum(path, depth, i);
      const PathElement& element = path[i];
      phi[element.feature] += w * (element.one_fraction - element.zero_fraction) *
                              node.value * scale;
    }
    return;
  }

  const bool go_left = x[node.feature] <= node.threshold;
  const int hot = go_left ? node.left : node.right;
  const int cold = go_left ? node.right : node.left;
  const auto cover = static_cast<double>(node.cover);
  const double hot_zero_fraction = static_cast<double>(tree.node(hot).cover) / cover;
  const double cold_zero_fraction =
      static_cast<double>(tree.node(cold).cover) / cover;

  // A feature split on again collapses into its earlier path element.
  double incoming_zero_fraction = 1.0;
  double incoming_one_fraction = 1.0;
  for (int k = 1; k <= depth; ++k) {
    if (path[k].feature == node.feature) {
      incoming_zero_fraction = path[k].zero_fraction;
      incoming_one_fraction = path[k].one_fraction;
      UnwindPath(path, depth, k);
      --depth;
      break;
    }
  }

  Recurse(tree, x, scale, hot, path, depth + 1,
          hot_zero_fraction * incoming_zero_fraction, incoming_one_fraction,
          node.feature, phi);
  Recurse(tree, x, scale, cold, std::move(path), depth + 1,
          cold_zero_fraction * incoming_zero_fraction, 0.0, node.feature, phi);
}

double ExpectedValue(const DecisionTree& tree) {
  const auto root_cover = static_cast<double>(tree.root().cover);
  double expected = 0.0;
  for (const TreeNode& node : tree.nodes()) {
    if (node.is_leaf()) {
      expected += static_cast<double>(node.cover) / root_cover * node.value;
    }
  }
  return expected;
}

void CheckCover(const DecisionTree& tree) {
  if (!tree.has_cover()) {
    throw DataError("tree Shapley values require cover statistics on every node");
  }
}

void CheckWidth(const Model& model, std::span<const double> x) {
  if (x.size() != static_cast<size_t>(NumFeatures(model))) {
    throw DataError("instance has " + std::to_string(x.size()) +
                    " values, model expects " + std::to_string(NumFeatures(model)));
  }
}

// Adds the Shapley values of one tree, times `scale`, to `phi`. Returns the
// tree's expected value.
double AccumulateTree(const DecisionTree& tree, std::span<const double> x,
                      double scale, std::vector<double>& phi) {
  CheckCover(tree);
  Path path(static_cast<size_t>(tree.max_depth()) + 2);
  Recurse(tree, x, scale, 0, std::move(path), 0, 1.0, 1.0, -1, phi);
  return ExpectedValue(tree);
}

}  // namespace

Explanation ExplainTreeShapley(const Model& model, std::span<const double> x) {
  CheckWidth(model, x);
  Explanation explanation;
  explanation.weights.assign(NumFeatures(model), 0.0);
  if (const auto* tree = std::get_if<DecisionTree>(&model)) {
    explanation.base_value = AccumulateTree(*tree, x, 1.0, explanation.weights);
  } else {
    const auto& ensemble = std::get<TreeEnsemble>(model);
    double expected_sum = 0.0;
    for (const auto& member : ensemble.trees) {
      expected_sum += AccumulateTree(member, x, ensemble.learning_rate,
                                     explanation.weights);
    }
    explanation.base_value =
        ensemble.base_score + ensemble.learning_rate * expected_sum;
  }
  explanation.explained_output = PredictMargin(model, x);
  return explanation;
}

double ConditionalExpectation(const DecisionTree& tree, std::span<const double> x,
                              uint64_t known) {
  // Explicit recursion over (node, probability mass).
  double total = 0.0;
  std::vector<std::pair<int, double>> stack = {{0, 1.0}};
  while (!stack.empty()) {
    const auto [index, mass] = stack.back();
    stack.pop_back();
    const TreeNode& node = tree.node(index);
    if (node.is_leaf()) {
      total += mass * node.value;
    } else if (node.feature < 64 && (known >> node.feature & 1)) {
      stack.push_back({x[node.feature] <= node.threshold ? node.left : node.right,
                       mass});
    } else {
      const auto cover = static_cast<double>(node.cover);
      stack.push_back({node.left, mass * tree.node(node.left).cover / cover});
      stack.push_back({node.right, mass * tree.node(node.right).cover / cover});
    }
  }
  return total;
}

Explanation BruteForceShapley(const Model& model, std::span<const double> x) {
  CheckWidth(model, x);
  const int n = NumFeatures(model);
  if (n > kMaxBruteForceFeatures) {
    throw DataError("brute-force Shapley values support at most " +
                    std::to_string(kMaxBruteForceFeatures) + " features, got " +
                    std::to_string(n));
  }
  const uint64_t num_subsets = uint64_t{1} << n;
  std::vector<double> value(num_subsets);
  for (uint64_t s = 0; s < num_subsets; ++s) {
    if (const auto* tree = std::get_if<DecisionTree>(&model)) {
      CheckCover(*tree);
      value[s] = ConditionalExpectation(*tree, x, s);
    } else {
      const auto& ensemble = std::get<TreeEnsemble>(model);
      double sum = 0.0;
      for (const auto& member : ensemble.trees) {
        CheckCover(member);
        sum += ConditionalExpectation(member, x, s);
      }
      value[s] = ensemble.base_score + ensemble.learning_rate * sum;
    }
  }

  std::vector<double> factorial(n + 1, 1.0);
  for (int i = 1; i <= n; ++i) factorial[i] = factorial[i - 1] * i;

  Explanation explanation;
  explanation.weights.assign(n, 0.0);
  for (int f = 0; f < n; ++f) {
    const uint64_t bit = uint64_t{1} << f;
    double phi = 0.0;
    for (uint64_t s = 0; s < num_subsets; ++s) {
      if (s & bit) continue;
      const int size = __builtin_popcountll(s);
      const double coefficient =
          factorial[size] * factorial[n - size - 1] / factorial[n];
      phi += coefficient * (value[s | bit] - value[s]);
    }
    explanation.weights[f] = phi;
  }
  explanation.base_value = value[0];
  explanation.explained_output = value[num_subsets - 1];
  return explanation;
}

}  // namespace fidelity
