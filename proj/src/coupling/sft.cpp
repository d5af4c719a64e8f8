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

#include "coupling/sft.hpp"

#include <cmath>

#include "coupling/error.hpp"

namespace coupling {

SftDataset::SftDataset(SpacesPtr spaces, std::vector<SftPair> pairs)
    : spaces_(std::move(spaces)), pairs_(std::move(pairs)) {
  if (!spaces_) fail(ErrorCode::kInvalidArgument, "dataset needs spaces");
  const std::size_t nx = spaces_->num_prompts();
  const std::size_t ny = spaces_->num_responses();
  counts_.assign(nx * ny, 0);
  prompt_totals_.assign(nx, 0);
  for (const SftPair& pair : pairs_) {
    if (pair.prompt >= nx || pair.response >= ny) {
      fail(ErrorCode::kInvalidArgument, "dataset pair outside the declared spaces");
    }
    if (pair.count < 1) fail(ErrorCode::kInvalidArgument, "pair multiplicity must be >= 1");
    counts_[pair.prompt * ny + pair.response] += pair.count;
    prompt_totals_[pair.prompt] += pair.count;
    total_ += pair.count;
  }
  if (total_ == 0) fail(ErrorCode::kInvalidArgument, "dataset is empty");
}

std::uint64_t SftDataset::count(std::size_t x, std::size_t y) const {
  return counts_.at(x * spaces_->num_responses() + y);
}

std::vector<double> SftDataset::empirical_row(std::size_t x) const {
  if (!covers(x)) {
    fail(ErrorCode::kUncoveredPrompt, "no SFT data for prompt '" + spaces_->prompt(x) + "'");
  }
  const std::size_t ny = spaces_->num_responses();
  std::vector<double> row(ny);
  const double total = static_cast<double>(prompt_totals_[x]);
  for (std::size_t y = 0; y < ny; ++y) row[y] = static_cast<double>(count(x, y)) / total;
  return row;
}

ConditionalPolicy SftDataset::empirical_conditional() const {
  std::vector<double> data;
  for (std::size_t x = 0; x < spaces_->num_prompts(); ++x) {
    auto row = empirical_row(x);
    data.insert(data.end(), row.begin(), row.end());
  }
  return ConditionalPolicy(spaces_, std::move(data));
}

PromptDist SftDataset::prompt_marginal() const {
  std::vector<double> w(spaces_->num_prompts());
  for (std::size_t x = 0; x < w.size(); ++x) {
    w[x] = static_cast<double>(prompt_totals_[x]) / static_cast<double>(total_);
  }
  return PromptDist(spaces_, std::move(w));
}

SftLoss sft_loss(const ConditionalPolicy& p, const SftDataset& d, LossMode mode) {
  require_same_spaces(p.spaces(), d.spaces(), "sft_loss");
  SftLoss loss;
  for (const SftPair& pair : d.pairs()) {
    double prob = p.prob(pair.prompt, pair.response);
    if (prob < kSftUnderflow) {
      prob = kSftProbabilityFloor;
      loss.floored_count += pair.count;
    }
    loss.nats -= static_cast<double>(pair.count) * std::log(prob);
  }
  if (mode == LossMode::kMean) loss.nats /= static_cast<double>(d.total_count());
  return loss;
}

ConditionalPolicy exact_sft_fit(const SftDataset& d, const PromptDist* target) {
  const Spaces& spaces = d.spaces();
  if (target != nullptr) require_same_spaces(target->spaces(), spaces, "exact_sft_fit");
  const std::size_t ny = spaces.num_responses();
  std::vector<double> data;
  data.reserve(spaces.num_prompts() * ny);
  for (std::size_t x = 0; x < spaces.num_prompts(); ++x) {
    if (d.covers(x)) {
      auto row = d.empirical_row(x);
      data.insert(data.end(), row.begin(), row.end());
      continue;
    }
    if (target != nullptr && target->weight(x) > 0.0) {
      fail(ErrorCode::kUncoveredPrompt,
           "prompt '" + spaces.prompt(x) + "' has positive weight but no SFT data");
    }
    data.insert(data.end(), ny, 1.0 / static_cast<double>(ny));
  }
  return ConditionalPolicy(d.spaces_ptr(), std::move(data));
}

SoftmaxPolicyParams::SoftmaxPolicyParams(SpacesPtr spaces, std::vector<double> logits)
    : spaces_(std::move(spaces)), logits_(std::move(logits)) {
  if (!spaces_) fail(ErrorCode::kInvalidArgument, "params need spaces");
  if (logits_.size() != spaces_->num_prompts() * spaces_->num_responses()) {
    fail(ErrorCode::kDimensionMismatch, "logit table size does not match spaces");
  }
  for (double v : logits_) {
    if (!std::isfinite(v)) fail(ErrorCode::kInvalidArgument, "logits must be finite");
  }
}

SoftmaxPolicyParams SoftmaxPolicyParams::zeros(SpacesPtr spaces) {
  const std::size_t n = spaces->num_prompts() * spaces->num_responses();
  return SoftmaxPolicyParams(std::move(spaces), std::vector<double>(n, 0.0));
}

SoftmaxPolicyParams SoftmaxPolicyParams::from_policy(const ConditionalPolicy& p) {
  std::vector<double> logits(p.data().size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (p.data()[i] <= 0.0) {
      fail(ErrorCode::kZeroProbability, "cannot take logits of a policy with zero entries");
    }
    logits[i] = std::log(p.data()[i]);
  }
  return SoftmaxPolicyParams(p.spaces_ptr(), std::move(logits));
}

std::span<const double> SoftmaxPolicyParams::row(std::size_t x) const {
  const std::size_t n = spaces_->num_responses();
  return std::span<const double>(logits_).subspan(x * n, n);
}

ConditionalPolicy SoftmaxPolicyParams::to_policy() const {
  std::vector<double> data;
  data.reserve(logits_.size());
  for (std::size_t x = 0; x < spaces_->num_prompts(); ++x) {
    auto probs = softmax(row(x));
    data.insert(data.end(), probs.begin(), probs.end());
  }
  return ConditionalPolicy(spaces_, std::move(data));
}

std::vector<double> sft_gradient(const SoftmaxPolicyParams& params, const SftDataset& d) {
  require_same_spaces(params.spaces(), d.spaces(), "sft_gradient");
  const std::size_t ny = params.spaces().num_responses();
  std::vector<double> grad(params.logits().size(), 0.0);
  const double total = static_cast<double>(d.total_count());
  for (std::size_t x = 0; x < params.spaces().num_prompts(); ++x) {
    if (!d.covers(x)) continue;
    const double weight = static_cast<double>(d.prompt_count(x)) / total;
    const auto probs = softmax(params.row(x));
    const auto target = d.empirical_row(x);
    for (std::size_t y = 0; y < ny; ++y) grad[x * ny + y] = weight * (probs[y] - target[y]);
  }
  return grad;
}

SoftmaxPolicyParams sft_gradient_step(const SoftmaxPolicyParams& params, const SftDataset& d,
                                      double lr) {
  if (!std::isfinite(lr) || lr <= 0.0) fail(ErrorCode::kInvalidArgument, "lr must be finite and > 0");
  const auto grad = sft_gradient(params, d);
  std::vector<double> logits = params.logits();
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] -= lr * grad[i];
  return SoftmaxPolicyParams(params.spaces_ptr(), std::move(logits));
}

void require_train_args(double lr, std::size_t steps) {
  if (steps < 1) fail(ErrorCode::kInvalidArgument, "steps must be >= 1");
  if (!std::isfinite(lr) || lr <= 0.0) fail(ErrorCode::kInvalidArgument, "lr must be finite and > 0");
}

SftTrainResult sft_train(SoftmaxPolicyParams params, const SftDataset& d, double lr,
                         std::size_t steps, double tol) {
  return sft_train(std::move(params), d, lr, steps, tol,
                   [](std::size_t, const SoftmaxPolicyParams&) {});
}

}  // namespace coupling
