// Copyright 2026 The Coupling Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>

namespace coupling {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
/// easy as 1, 2, 3"). Stateless: the same (key, counter) always yields the
/// same four words, which is what makes every stochastic operation in the
/// library reproducible from an explicit seed.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter counter, Key key);
};

/// A stream of random numbers addressed by (seed, stream_a, stream_b). Two
/// streams with different addresses never share a Philox counter.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint32_t stream_a = 0,
                      std::uint32_t stream_b = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in (0, 1].
  double uniform_open_zero();
  // Standard normal via Box-Muller; one draw per call (the pair's second
  // value is discarded so that draw counts stay easy to reason about).
  double normal();
  // Exponential with unit rate.
  double exponential();

 private:
  void refill();

  Philox4x32::Key key_;
  Philox4x32::Counter counter_;
  Philox4x32::Counter buffer_{};
  int used_ = 4;
};

/// Mixes a seed with up to two indices into a fresh 64-bit seed (splitmix64
/// finalizer). Used to give training steps and grid cells independent seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace coupling
