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

#ifndef FIDELITY_RANDOM_H_
#define FIDELITY_RANDOM_H_

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fidelity {

using RandomEngine = std::mt19937_64;

// SplitMix64 finalizer.
inline uint64_t MixBits(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a run seed and a path of
// identifiers (instance id, repeat index, ...). Every randomized per-instance
// step draws from its own derived stream so that the result does not depend
// on evaluation order or on the number of worker threads.
inline uint64_t DeriveSeed(uint64_t seed, std::initializer_list<uint64_t> path) {
  uint64_t state = MixBits(seed);
  for (const uint64_t id : path) state = MixBits(state ^ MixBits(id + 1));
  return state;
}

}  // namespace fidelity

#endif  // FIDELITY_RANDOM_H_
