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

#include <cstdint>
#include <optional>

#include "coupling/harness/config.hpp"
#include "coupling/policy.hpp"
#include "coupling/rl.hpp"
#include "coupling/sft.hpp"

namespace coupling::harness {

/// Everything one pipeline run consumes.
struct Task {
  SpacesPtr spaces;
  PromptDist q;
  SftDataset sft;
  // Present for rule-scored tasks; random tables are scored by `reward`.
  std::optional<VerifierRule> rule;
  RewardTable reward;
};

inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kAcceptableToken = "acceptable";
inline constexpr const char* kUnacceptableToken = "unacceptable";

/// Toy acceptability classification. Prompts are distinct random word
/// sequences; a random subset is marked acceptable (gold class 0) and the
/// rest unacceptable (class 1). Responses are the two label strings, plus
/// free-form variants when `verbose_responses` is set. Each prompt gets
/// `pairs_per_prompt` SFT pairs whose label is flipped independently with
/// probability `noise_rate`. Prompts are weighted uniformly, which is also
/// the dataset's prompt marginal.
Task gen_synthetic_acceptability(const SpacesConfig& size, double noise_rate,
                                 std::uint64_t rng_seed);

/// Atomic responses, rewards uniform in [-1, 1], SFT data drawn from a
/// random Dirichlet conditional, uniform prompt weights.
Task gen_random_tables(const SpacesConfig& size, std::uint64_t rng_seed);

Task generate_task(const ExperimentConfig& cfg, std::uint64_t rng_seed);

}  // namespace coupling::harness
