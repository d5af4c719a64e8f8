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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "coupling/harness/config.hpp"
#include "coupling/harness/synthetic.hpp"
#include "coupling/policy.hpp"
#include "coupling/rl.hpp"

namespace coupling::harness {

/// Scans the whole response for any class label (as a contiguous token
/// run) and returns the class of the last occurrence.
std::optional<std::size_t> robust_decode(const Sequence& response, const VerifierRule& rule);

/// Temperature (row ∝ p^(1/T)) and nucleus (smallest mass-sorted prefix
/// with mass >= top_p, renormalized) transforms, in the configured order.
std::vector<double> apply_temperature(std::span<const double> row, double temperature);
std::vector<double> apply_top_p(std::span<const double> row, double top_p);
std::vector<double> transform_row(std::span<const double> row, const EvalConfig& cfg);

/// Per-(prompt, response) score and whether a label could be read at all.
struct ScoreTable {
  std::size_t num_responses = 0;
  std::vector<double> score;
  std::vector<bool> parsed;

  double at(std::size_t x, std::size_t y) const { return score[x * num_responses + y]; }
  bool parsed_at(std::size_t x, std::size_t y) const { return parsed[x * num_responses + y]; }
};

ScoreTable score_with_rule(const VerifierRule& rule, const Spaces& spaces, bool robust);
/// Random-table tasks: score = reward, every response counts as parsed.
ScoreTable score_with_reward(const RewardTable& reward);
ScoreTable score_task(const Task& task, const EvalConfig& cfg);

struct EvalResult {
  double mean_at_1 = 0.0;
  // (mean@1 + 1) / 2, exact for +/-1 scores.
  double accuracy = 0.0;
  // Expected score under the transformed policy, computed exactly.
  double exact_mean = 0.0;
  // Correct / parsed over sampled outputs whose label could be read.
  double parsed_accuracy = 0.0;
  std::size_t parse_failures = 0;
  std::size_t samples = 0;
};

double accuracy_from_mean_at_1(double mean_at_1);

/// `cfg.samples` draws of x ~ q and y ~ transform(p(.|x)), each scored once.
EvalResult eval_mean_at_1(const ConditionalPolicy& p, const ScoreTable& scores,
                          const PromptDist& q, const EvalConfig& cfg, std::uint64_t rng_seed);
EvalResult eval_mean_at_1(const ConditionalPolicy& p, const VerifierRule& rule,
                          const PromptDist& q, const EvalConfig& cfg, std::uint64_t rng_seed);

}  // namespace coupling::harness
