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

// KL-regularized reward maximization over finite conditional policies:
// the objective, its closed-form tilted maximizer, the partition function,
// and a small group-relative policy-gradient trainer.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "coupling/policy.hpp"
#include "coupling/sft.hpp"

namespace coupling {

/// Bounded reward r(x, y) with |r| <= r_max everywhere.
class RewardTable {
 public:
  RewardTable(SpacesPtr spaces, std::vector<double> values, double r_max);

  const Spaces& spaces() const { return *spaces_; }
  const SpacesPtr& spaces_ptr() const { return spaces_; }
  double r_max() const { return r_max_; }
  double at(std::size_t x, std::size_t y) const;
  std::span<const double> row(std::size_t x) const;
  const std::vector<double>& values() const { return values_; }

 private:
  SpacesPtr spaces_;
  std::vector<double> values_;
  double r_max_;
};

struct RlConfig {
  double beta;
  ConditionalPolicy reference;

  RlConfig(double beta, ConditionalPolicy reference);
};

/// Rule-based verifier: a response scores `match_reward` when its body is
/// exactly the label of the prompt's gold class.
struct VerifierRule {
  // Token bodies (no EOS) of each class label; class id = index.
  std::vector<Sequence> class_labels;
  // Gold class per prompt.
  std::vector<std::size_t> label_map;
  double match_reward = 1.0;
  double mismatch_reward = -1.0;
};

/// Class of a response under exact-format matching, or nullopt.
std::optional<std::size_t> strict_class(const VerifierRule& rule, const Sequence& response,
                                        TokenId eos);

RewardTable reward_from_verifier(const VerifierRule& rule, const SpacesPtr& spaces);

/// J(p) = sum_x q(x) sum_y p(y|x) r(x, y).
double expected_reward(const ConditionalPolicy& p, const RewardTable& r, const PromptDist& q);

/// E_q[sum_y p r] - beta E_q[KL(p(.|x) || ref(.|x))]. Throws SupportViolation
/// when p leaves the reference support on a prompt with q(x) > 0.
double rl_objective(const ConditionalPolicy& p, const RlConfig& cfg, const RewardTable& r,
                    const PromptDist& q);

/// p(y|x) = ref(y|x) exp(r(x,y)/beta) / Z_beta(x), evaluated in log space
/// with a per-row max shift.
ConditionalPolicy gibbs_solution(const RlConfig& cfg, const RewardTable& r);

struct PartitionValue {
  double z;      // may overflow to +inf for tiny beta; log_z stays finite
  double log_z;
};

/// Z_beta(x) = E_{y ~ ref(.|x)}[exp(r(x,y)/beta)].
PartitionValue partition_function(const RlConfig& cfg, const RewardTable& r, std::size_t x);

/// Exact gradient of rl_objective with respect to softmax logits.
std::vector<double> rl_objective_gradient(const SoftmaxPolicyParams& params, const RlConfig& cfg,
                                          const RewardTable& r, const PromptDist& q);

inline constexpr double kGroupStdFloor = 1e-8;

/// Ascent direction of one GRPO update before scaling by the learning rate.
/// For each prompt a group of `group_size` responses is drawn from the
/// current policy; advantages are (r - group mean) / max(group std, 1e-8)
/// and the sampled policy-gradient term is weighted by q(x). The KL penalty
/// toward the reference enters through its exact gradient.
std::vector<double> grpo_direction(const SoftmaxPolicyParams& params, const RlConfig& cfg,
                                   const RewardTable& r, const PromptDist& q,
                                   std::size_t group_size, std::uint64_t rng_seed);

SoftmaxPolicyParams grpo_step(const SoftmaxPolicyParams& params, const RlConfig& cfg,
                              const RewardTable& r, const PromptDist& q, std::size_t group_size,
                              double lr, std::uint64_t rng_seed);

}  // namespace coupling
