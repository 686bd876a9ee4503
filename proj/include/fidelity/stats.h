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

#ifndef FIDELITY_STATS_H_
#define FIDELITY_STATS_H_

#include <span>
#include <vector>

namespace fidelity {

// q-th percentile (q in [0, 100]) with linear interpolation between closest
// ranks, i.e. the "linear" method of numpy. `values` need not be sorted.
// Throws std::invalid_argument on empty input.
double Percentile(std::span<const double> values, double q);

// Same as Percentile() on data that is already sorted ascending.
double PercentileSorted(std::span<const double> sorted, double q);

double Mean(std::span<const double> values);

// Population standard deviation.
double StdDev(std::span<const double> values);

}  // namespace fidelity

#endif  // FIDELITY_STATS_H_
