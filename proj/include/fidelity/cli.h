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

// Command-line driver: prep, train, phase1, phase2, phase3 and report.
//
// Every command works on one output directory. The first command writes
// manifest.json there; later commands read the stored configuration, apply
// --config and flags on top, and append their artifacts to the manifest.
// Dataset and hyperparameter flags are stored for later commands. The
// --model, --explainer, --k, --d, --p, --repeats and --jobs flags apply to the
// current command only.

#ifndef FIDELITY_CLI_H_
#define FIDELITY_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

#include "fidelity/serialization.h"

namespace fidelity {

inline constexpr char kToolVersion[] = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitMissingPrerequisite = 3;

// Configuration used when neither the manifest nor --config sets a key.
Json DefaultRunConfig();

// Hex SHA-256 of the compact JSON encoding.
std::string ConfigHash(const Json& config);

// `args` excludes the program name. Returns the process exit code.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);
int RunCli(int argc, char** argv);

}  // namespace fidelity

#endif  // FIDELITY_CLI_H_
