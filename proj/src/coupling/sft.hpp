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
#include <span>
#include <vector>

#include "coupling/policy.hpp"

namespace coupling {

struct SftPair {
  std::size_t prompt = 0;
  std::size_t response = 0;
  std::uint64_t count = 1;
};

/// Prompt/response pairs with multiplicities, and the empirical conditional
/// and prompt marginal they induce.
class SftDataset {
 public:
  SftDataset(SpacesPtr spaces, std::vector<SftPair> pairs);

  const Spaces& spaces() const { return *spaces_; }
  const SpacesPtr& spaces_ptr() const { return spaces_; }
  const std::vector<SftPair>& pairs() const { return pairs_; }
  std::uint64_t total_count() const { return total_; }
  std::uint64_t count(std::size_t x, std::size_t y) const;
  std::uint64_t prompt_count(std::size_t x) const { return prompt_totals_.at(x); }
  bool covers(std::size_t x) const { return prompt_count(x) > 0; }

  /// p_D(.|x) as count ratios. Throws UncoveredPrompt.
  std::vector<double> empirical_row(std::size_t x) const;
  /// p_D over all prompts. Throws UncoveredPrompt if any prompt lacks data.
  ConditionalPolicy empirical_conditional() const;
  /// q-hat(x) = (pairs with prompt x) / |D|.
  PromptDist prompt_marginal() const;

 private:
  SpacesPtr spaces_;
  std::vector<SftPair> pairs_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> prompt_totals_;
  std::uint64_t total_ = 0;
};

enum class LossMode { kSum, kMean };

inline constexpr double kSftUnderflow = 1e-300;
inline constexpr double kSftProbabilityFloor = 1e-12;

struct SftLoss {
  double nats = 0.0;
  // Pairs (counted with multiplicity) whose probability fell below 1e-300
  // and was replaced by the 1e-12 floor.
  std::uint64_t floored_count = 0;
};

/// Sum (or dataset mean) of -log p(y|x) over the pairs.
SftLoss sft_loss(const ConditionalPolicy& p, const SftDataset& d, LossMode mode);

/// The cross-entropy minimizer p(.|x) = p_D(.|x). Prompts without data get a
/// uniform row; if `target` is given, any such prompt with target weight > 0
/// raises UncoveredPrompt. Without a target, the dataset's own prompt
/// marginal is used, so uncovered prompts are never an error.
ConditionalPolicy exact_sft_fit(const SftDataset& d, const PromptDist* target = nullptr);

/// Per-prompt logits over the response space.
class SoftmaxPolicyParams {
 public:
  SoftmaxPolicyParams(SpacesPtr spaces, std::vector<double> logits);
  static SoftmaxPolicyParams zeros(SpacesPtr spaces);
  /// logits = log p. Throws ZeroProbability if p has a zero entry.
  static SoftmaxPolicyParams from_policy(const ConditionalPolicy& p);

  const Spaces& spaces() const { return *spaces_; }
  const SpacesPtr& spaces_ptr() const { return spaces_; }
  std::span<const double> row(std::size_t x) const;
  const std::vector<double>& logits() const { return logits_; }
  std::vector<double>& mutable_logits() { return logits_; }
  ConditionalPolicy to_policy() const;

 private:
  SpacesPtr spaces_;
  std::vector<double> logits_;
};

/// Gradient of the dataset-mean SFT loss with respect to the logits:
/// row x is q-hat(x) (softmax(logits_x) - p_D(.|x)), zero for uncovered rows.
std::vector<double> sft_gradient(const SoftmaxPolicyParams& params, const SftDataset& d);

/// One full-batch gradient-descent step.
SoftmaxPolicyParams sft_gradient_step(const SoftmaxPolicyParams& params, const SftDataset& d,
                                      double lr);

struct SftTrainResult {
  SoftmaxPolicyParams params;
  // Dataset-mean loss after each step.
  std::vector<double> loss_trace;
};

/// Repeated sft_gradient_step. Stops early once a step improves the loss by
/// less than `tol`. `on_step(step, params)` is called after every step.
template <typename OnStep>
SftTrainResult sft_train(SoftmaxPolicyParams params, const SftDataset& d, double lr,
                         std::size_t steps, double tol, OnStep&& on_step);

SftTrainResult sft_train(SoftmaxPolicyParams params, const SftDataset& d, double lr,
                         std::size_t steps, double tol);

// Implementation detail shared by both overloads.
void require_train_args(double lr, std::size_t steps);

template <typename OnStep>
SftTrainResult sft_train(SoftmaxPolicyParams params, const SftDataset& d, double lr,
                         std::size_t steps, double tol, OnStep&& on_step) {
  require_train_args(lr, steps);
  std::vector<double> trace;
  trace.reserve(steps);
  double previous = sft_loss(params.to_policy(), d, LossMode::kMean).nats;
  for (std::size_t step = 1; step <= steps; ++step) {
    params = sft_gradient_step(params, d, lr);
    const double loss = sft_loss(params.to_policy(), d, LossMode::kMean).nats;
    trace.push_back(loss);
    on_step(step, params);
    if (previous - loss < tol) break;
    previous = loss;
  }
  return {std::move(params), std::move(trace)};
}

}  // namespace coupling
