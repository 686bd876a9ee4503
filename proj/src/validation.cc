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

#include "fidelity/validation.h"

namespace fidelity {

Phase2Validation ValidatePhase2(const DecisionTree& tree, const Explainer& explainer,
                                const Dataset& eval_set, const Phase3Params& params,
                                const IntervalSource& interval_source) {
  Phase2Validation validation;
  validation.phase1 = RunPhase1(
      tree, explainer, eval_set,
      {.k_repeats = params.k_repeats, .seed = params.seed, .jobs = params.jobs});
  const Model model = tree;
  validation.phase3 = RunPhase3(model, explainer, eval_set, params, interval_source);
  for (size_t i = 0; i < eval_set.num_rows(); ++i) {
    const Phase1Record& p1 = validation.phase1.records[i];
    const Phase3Record& p3 = validation.phase3.records[i];
    validation.rows.push_back({static_cast<int>(i), p1.recall, p1.precision,
                               p3.supporting, p3.contrary});
  }
  return validation;
}

}  // namespace fidelity
