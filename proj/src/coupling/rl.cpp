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

#include "coupling/rl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "coupling/divergence.hpp"
#include "coupling/error.hpp"
#include "coupling/rng.hpp"

namespace coupling {
namespace {

// log of sum_y ref(y) exp(r(y)/beta) over the support of ref.
double log_partition(std::span<const double> ref, std::span<const double> reward, double beta) {
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < ref.size(); ++y) {
    if (ref[y] > 0.0) shift = std::max(shift, std::log(ref[y]) + reward[y] / beta);
  }
  double sum = 0.0;
  for (std::size_t y = 0; y < ref.size(); ++y) {
    if (ref[y] > 0.0) sum += std::exp(std::log(ref[y]) + reward[y] / beta - shift);
  }
  return shift + std::log(sum);
}

void require_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    fail(ErrorCode::kInvalidArgument, "beta must be finite and > 0");
  }
}

}  // namespace

RewardTable::RewardTable(SpacesPtr spaces, std::vector<double> values, double r_max)
    : spaces_(std::move(spaces)), values_(std::move(values)), r_max_(r_max) {
  if (!spaces_) fail(ErrorCode::kInvalidArgument, "reward table needs spaces");
  if (values_.size() != spaces_->num_prompts() * spaces_->num_responses()) {
    fail(ErrorCode::kDimensionMismatch, "reward table size does not match spaces");
  }
  if (!(r_max_ > 0.0) || !std::isfinite(r_max_)) {
    fail(ErrorCode::kInvalidArgument, "r_max must be finite and > 0");
  }
  for (double v : values_) {
    if (!std::isfinite(v) || std::abs(v) > r_max_) {
      fail(ErrorCode::kInvalidArgument, "reward outside [-r_max, r_max]");
    }
  }
}

double RewardTable::at(std::size_t x, std::size_t y) const { return row(x)[y]; }

std::span<const double> RewardTable::row(std::size_t x) const {
  if (x >= spaces_->num_prompts()) fail(ErrorCode::kInvalidArgument, "prompt index out of range");
  const std::size_t n = spaces_->num_responses();
  return std::span<const double>(values_).subspan(x * n, n);
}

RlConfig::RlConfig(double beta_in, ConditionalPolicy reference_in)
    : beta(beta_in), reference(std::move(reference_in)) {
  require_beta(beta);
}

std::optional<std::size_t> strict_class(const VerifierRule& rule, const Sequence& response,
                                        TokenId eos) {
  Sequence body = response;
  if (!body.empty() && body.back() == eos) body.pop_back();
  for (std::size_t c = 0; c < rule.class_labels.size(); ++c) {
    if (rule.class_labels[c] == body) return c;
  }
  return std::nullopt;
}

RewardTable reward_from_verifier(const VerifierRule& rule, const SpacesPtr& spaces) {
  if (rule.label_map.size() != spaces->num_prompts()) {
    fail(ErrorCode::kInvalidArgument, "verifier label map must cover every prompt");
  }
  const ResponseSpace& space = spaces->responses();
  std::vector<double> values;
  values.reserve(spaces->num_prompts() * space.size());
  for (std::size_t x = 0; x < spaces->num_prompts(); ++x) {
    if (rule.label_map[x] >= rule.class_labels.size()) {
      fail(ErrorCode::kInvalidArgument, "label map refers to an unknown class");
    }
    for (std::size_t y = 0; y < space.size(); ++y) {
      auto cls = strict_class(rule, space.at(y), space.alphabet().eos());
      values.push_back(cls && *cls == rule.label_map[x] ? rule.match_reward : rule.mismatch_reward);
    }
  }
  const double r_max = std::max(std::abs(rule.match_reward), std::abs(rule.mismatch_reward));
  return RewardTable(spaces, std::move(values), r_max);
}

double expected_reward(const ConditionalPolicy& p, const RewardTable& r, const PromptDist& q) {
  require_same_spaces(p.spaces(), r.spaces(), "expected_reward");
  require_same_spaces(p.spaces(), q.spaces(), "expected_reward");
  double total = 0.0;
  for (std::size_t x = 0; x < p.num_prompts(); ++x) {
    const auto row = p.row(x);
    const auto rew = r.row(x);
    double inner = 0.0;
    for (std::size_t y = 0; y < row.size(); ++y) inner += row[y] * rew[y];
    total += q.weight(x) * inner;
  }
  return total;
}

double rl_objective(const ConditionalPolicy& p, const RlConfig& cfg, const RewardTable& r,
                    const PromptDist& q) {
  require_same_spaces(p.spaces(), cfg.reference.spaces(), "rl_objective");
  double penalty = 0.0;
  for (std::size_t x = 0; x < p.num_prompts(); ++x) {
    if (q.weight(x) == 0.0) continue;
    const KlValue kl = kl_divergence(p.row(x), cfg.reference.row(x));
    if (!kl.finite()) {
      fail(ErrorCode::kSupportViolation,
           "policy leaves the reference support on prompt '" + p.spaces().prompt(x) + "'");
    }
    penalty += q.weight(x) * kl.nats;
  }
  return expected_reward(p, r, q) - cfg.beta * penalty;
}

ConditionalPolicy gibbs_solution(const RlConfig& cfg, const RewardTable& r) {
  const ConditionalPolicy& ref = cfg.reference;
  require_same_spaces(ref.spaces(), r.spaces(), "gibbs_solution");
  const std::size_t ny = ref.num_responses();
  std::vector<double> data(ref.data().size(), 0.0);
  for (std::size_t x = 0; x < ref.num_prompts(); ++x) {
    const auto base = ref.row(x);
    const auto rew = r.row(x);
    // A reward that is constant on the reference support leaves the row unchanged.
    bool constant = true;
    std::optional<double> level;
    for (std::size_t y = 0; y < ny && constant; ++y) {
      if (base[y] <= 0.0) continue;
      if (!level) level = rew[y];
      constant = rew[y] == *level;
    }
    if (constant) {
      std::copy(base.begin(), base.end(), data.begin() + static_cast<std::ptrdiff_t>(x * ny));
      continue;
    }
    const double log_z = log_partition(base, rew, cfg.beta);
    double sum = 0.0;
    for (std::size_t y = 0; y < ny; ++y) {
      if (base[y] <= 0.0) continue;
      const double v = std::exp(std::log(base[y]) + rew[y] / cfg.beta - log_z);
      data[x * ny + y] = v;
      sum += v;
    }
    for (std::size_t y = 0; y < ny; ++y) data[x * ny + y] /= sum;
  }
  return ConditionalPolicy(ref.spaces_ptr(), std::move(data));
}

PartitionValue partition_function(const RlConfig& cfg, const RewardTable& r, std::size_t x) {
  require_same_spaces(cfg.reference.spaces(), r.spaces(), "partition_function");
  const double log_z = log_partition(cfg.reference.row(x), r.row(x), cfg.beta);
  return {std::exp(log_z), log_z};
}

std::vector<double> rl_objective_gradient(const SoftmaxPolicyParams& params, const RlConfig& cfg,
                                          const RewardTable& r, const PromptDist& q) {
  require_same_spaces(params.spaces(), cfg.reference.spaces(), "rl_objective_gradient");
  const std::size_t ny = params.spaces().num_responses();
  std::vector<double> grad(params.logits().size(), 0.0);
  for (std::size_t x = 0; x < params.spaces().num_prompts(); ++x) {
    const double w = q.weight(x);
    if (w == 0.0) continue;
    const auto pi = softmax(params.row(x));
    const auto ref = cfg.reference.row(x);
    const auto rew = r.row(x);
    double mean_reward = 0.0;
    double kl = 0.0;
    std::vector<double> log_ratio(ny);
    for (std::size_t y = 0; y < ny; ++y) {
      if (ref[y] <= 0.0) {
        fail(ErrorCode::kSupportViolation, "softmax policy needs a full-support reference");
      }
      log_ratio[y] = std::log(pi[y]) - std::log(ref[y]);
      mean_reward += pi[y] * rew[y];
      kl += pi[y] * log_ratio[y];
    }
    for (std::size_t y = 0; y < ny; ++y) {
      grad[x * ny + y] =
          w * pi[y] * ((rew[y] - mean_reward) - cfg.beta * (log_ratio[y] - kl));
    }
  }
  return grad;
}

std::vector<double> grpo_direction(const SoftmaxPolicyParams& params, const RlConfig& cfg,
                                   const RewardTable& r, const PromptDist& q,
                                   std::size_t group_size, std::uint64_t rng_seed) {
  if (group_size < 2) fail(ErrorCode::kInvalidArgument, "group_size must be >= 2");
  require_same_spaces(params.spaces(), r.spaces(), "grpo_direction");
  const std::size_t ny = params.spaces().num_responses();
  std::vector<double> direction(params.logits().size(), 0.0);
  std::vector<std::size_t> group(group_size);
  std::vector<double> rewards(group_size);
  for (std::size_t x = 0; x < params.spaces().num_prompts(); ++x) {
    const double w = q.weight(x);
    if (w == 0.0) continue;
    const auto pi = softmax(params.row(x));
    const auto ref = cfg.reference.row(x);
    CounterRng rng(rng_seed, static_cast<std::uint32_t>(x));
    for (std::size_t i = 0; i < group_size; ++i) {
      group[i] = inverse_cdf(pi, rng.uniform());
      rewards[i] = r.at(x, group[i]);
    }
    double* out = direction.data() + x * ny;

    const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
    if (*lo != *hi) {
      double mean = 0.0;
      for (double v : rewards) mean += v;
      mean /= static_cast<double>(group_size);
      double var = 0.0;
      for (double v : rewards) var += (v - mean) * (v - mean);
      const double std_dev = std::max(std::sqrt(var / static_cast<double>(group_size)),
                                      kGroupStdFloor);
      const double scale = w / static_cast<double>(group_size);
      for (std::size_t i = 0; i < group_size; ++i) {
        const double advantage = (rewards[i] - mean) / std_dev;
        // d log pi(y_i) / d logits = e_{y_i} - pi
        out[group[i]] += scale * advantage;
        for (std::size_t y = 0; y < ny; ++y) out[y] -= scale * advantage * pi[y];
      }
    }

    double kl = 0.0;
    std::vector<double> log_ratio(ny);
    for (std::size_t y = 0; y < ny; ++y) {
      if (ref[y] <= 0.0) {
        fail(ErrorCode::kSupportViolation, "softmax policy needs a full-support reference");
      }
      log_ratio[y] = std::log(pi[y]) - std::log(ref[y]);
      kl += pi[y] * log_ratio[y];
    }
    for (std::size_t y = 0; y < ny; ++y) out[y] -= w * cfg.beta * pi[y] * (log_ratio[y] - kl);
  }
  return direction;
}

SoftmaxPolicyParams grpo_step(const SoftmaxPolicyParams& params, const RlConfig& cfg,
                              const RewardTable& r, const PromptDist& q, std::size_t group_size,
                              double lr, std::uint64_t rng_seed) {
  if (!std::isfinite(lr) || lr <= 0.0) fail(ErrorCode::kInvalidArgument, "lr must be finite and > 0");
  const auto direction = grpo_direction(params, cfg, r, q, group_size, rng_seed);
  std::vector<double> logits = params.logits();
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += lr * direction[i];
  return SoftmaxPolicyParams(params.spaces_ptr(), std::move(logits));
}

}  // namespace coupling
