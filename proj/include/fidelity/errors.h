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

#ifndef FIDELITY_ERRORS_H_
#define FIDELITY_ERRORS_H_

#include <stdexcept>
#include <string>

namespace fidelity {

// Bad command line or configuration. The CLI maps it to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data, incompatible model/dataset, or a computation that
// cannot be carried out on the given data. Exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A pipeline step was invoked before the artifact it depends on exists.
// Exit code 3.
class MissingPrerequisiteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fidelity

#endif  // FIDELITY_ERRORS_H_
