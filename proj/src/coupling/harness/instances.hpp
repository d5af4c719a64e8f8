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

// Random problem instances for property sweeps. Every generator is a pure
// function of its seed.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "coupling/policy.hpp"
#include "coupling/rl.hpp"
#include "coupling/rng.hpp"
#include "coupling/sft.hpp"

namespace coupling::harness {

/// Dirichlet(alpha, ..., alpha) via normalized gamma draws. alpha = 1 uses
/// exponentials; other values use Marsaglia-Tsang.
std::vector<double> random_distribution(CounterRng& rng, std::size_t n, double alpha = 1.0);

/// Prompts "x0".."x{n-1}" and atomic responses "r0 <eos>"...
SpacesPtr atomic_spaces(std::size_t num_prompts, std::size_t num_responses);

ConditionalPolicy random_policy(CounterRng& rng, const SpacesPtr& spaces, double alpha = 1.0);
PromptDist random_prompt_dist(CounterRng& rng, const SpacesPtr& spaces);
/// Uniform rewards in [-r_max, r_max].
RewardTable random_reward(CounterRng& rng, const SpacesPtr& spaces, double r_max = 1.0);
/// `pairs_per_prompt` draws from `truth` for every prompt, aggregated.
SftDataset sample_dataset(CounterRng& rng, const ConditionalPolicy& truth,
                          std::size_t pairs_per_prompt);
/// Random full-support autoregressive table over the exhaustive response
/// space of `alphabet_size` body tokens plus EOS. Conditionals at the last
/// depth put all mass on EOS so the response space is exhaustive.
AutoregressivePolicy random_autoregressive(CounterRng& rng, std::size_t num_prompts,
                                           std::size_t alphabet_size, std::size_t l_max);

}  // namespace coupling::harness
