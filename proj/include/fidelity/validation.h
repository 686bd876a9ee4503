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

#ifndef FIDELITY_VALIDATION_H_
#define FIDELITY_VALIDATION_H_

#include <optional>
#include <vector>

#include "fidelity/phase1.h"
#include "fidelity/phase3.h"

namespace fidelity {

struct ValidationRow {
  int instance_id = 0;
  std::optional<double> recall;
  std::optional<double> precision;
  std::optional<double> supporting;
  std::optional<double> contrary;
};

struct Phase2Validation {
  Phase1Report phase1;
  Phase3Report phase3;
  std::vector<ValidationRow> rows;
};

// Runs the perturbation procedure against the white-box tree with the chosen
// decile range and bin size, next to the agreement metrics, so the two can be
// compared instance by instance.
Phase2Validation ValidatePhase2(const DecisionTree& tree, const Explainer& explainer,
                                const Dataset& eval_set, const Phase3Params& params,
                                const IntervalSource& interval_source = nullptr);

}  // namespace fidelity

#endif  // FIDELITY_VALIDATION_H_
