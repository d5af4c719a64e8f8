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

#include "coupling/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coupling/error.hpp"
#include "coupling/rng.hpp"

namespace coupling {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ConditionalPolicy tilt(const ConditionalPolicy& p, std::span<const double> direction, double t) {
  const std::size_t ny = p.num_responses();
  std::vector<double> data(p.data().size(), 0.0);
  for (std::size_t x = 0; x < p.num_prompts(); ++x) {
    const auto row = p.row(x);
    double shift = -kInf;
    for (std::size_t y = 0; y < ny; ++y) {
      if (row[y] > 0.0) shift = std::max(shift, std::log(row[y]) + t * direction[x * ny + y]);
    }
    double sum = 0.0;
    for (std::size_t y = 0; y < ny; ++y) {
      if (row[y] <= 0.0) continue;
      data[x * ny + y] = std::exp(std::log(row[y]) + t * direction[x * ny + y] - shift);
      sum += data[x * ny + y];
    }
    for (std::size_t y = 0; y < ny; ++y) data[x * ny + y] /= sum;
  }
  return ConditionalPolicy(p.spaces_ptr(), std::move(data));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ConditionalPolicy run_rl_stage(const ConditionalPolicy& input, const RewardTable& r,
                               const PromptDist& q, const PipelineOptions& options,
                               const PipelineObserver& observer) {
  RlConfig cfg(options.beta, input);
  if (options.rl.mode == RlStage::Mode::kGibbs) {
    ConditionalPolicy out = gibbs_solution(cfg, r);
    if (observer) observer(Phase::kRl, 1, out);
    return out;
  }
  if (options.rl.steps < 1) fail(ErrorCode::kInvalidArgument, "rl steps must be >= 1");
  SoftmaxPolicyParams params = SoftmaxPolicyParams::from_policy(input);
  for (std::size_t step = 1; step <= options.rl.steps; ++step) {
    params = grpo_step(params, cfg, r, q, options.rl.group_size, options.rl.lr,
                       derive_seed(options.seed, 0x5250u, step));
    if (observer) observer(Phase::kRl, step, params.to_policy());
  }
  return params.to_policy();
}

ConditionalPolicy run_sft_stage(const ConditionalPolicy& input, const SftDataset& d,
                                const PromptDist& q, const PipelineOptions& options,
                                const PipelineObserver& observer) {
  if (options.sft.mode == SftStage::Mode::kExact) {
    ConditionalPolicy out = exact_sft_fit(d, &q);
    if (observer) observer(Phase::kSft, 1, out);
    return out;
  }
  exact_sft_fit(d, &q);  // coverage check only
  auto result = sft_train(SoftmaxPolicyParams::from_policy(input), d, options.sft.lr,
                          options.sft.steps, options.sft.tol,
                          [&](std::size_t step, const SoftmaxPolicyParams& params) {
                            if (observer) observer(Phase::kSft, step, params.to_policy());
                          });
  return result.params.to_policy();
}

// Fills every field that depends only on the four checkpoints.
PipelineReport assemble_report(PipelineKind kind, const PromptDist& q, const SftDataset& d,
                               const RewardTable& r, const PipelineOptions& options,
                               const ConditionalPolicy& stage1, const ConditionalPolicy& stage2,
                               const ConditionalPolicy& rl_in, const ConditionalPolicy& rl_out,
                               bool exact_premise) {
  PipelineReport report;
  report.kind = kind;
  report.beta = options.beta;
  report.kl_band = options.band;

  const SftLoss before = sft_loss(stage1, d, LossMode::kMean);
  const SftLoss after = sft_loss(stage2, d, LossMode::kMean);
  report.epsilon_sft = before.nats;
  report.sft_loss_after = after.nats;
  report.floored_count = before.floored_count + after.floored_count;

  const PromptDist q_hat = d.prompt_marginal();
  const ConditionalPolicy p_data = exact_sft_fit(d, &q);
  const C1Decomposition c1 = c1_decomposition(rl_in, r, options.beta, q_hat, p_data);
  report.c1_beta = c1.c1;
  report.jensen_gap_per_prompt = c1.per_prompt;
  const double loss_in = sft_loss(rl_in, d, LossMode::kMean).nats;
  const double loss_out = sft_loss(rl_out, d, LossMode::kMean).nats;
  report.identity_residual = std::abs(loss_out - loss_in - c1.c1);

  report.reward_before = expected_reward(stage1, r, q);
  report.reward_after = expected_reward(stage2, r, q);
  report.reward_dropped = report.reward_after < report.reward_before;

  const RewardCeilingCheck ceiling = reward_ceiling_check(stage1, stage2, r, q);
  report.ceiling_lhs = ceiling.check.lhs;
  report.ceiling_rhs = ceiling.check.rhs;
  report.ceiling_support_violation = ceiling.support_violation;
  report.kl_budget_b = ceiling.support_violation ? kInf : kl_band_measure(stage2, stage1, q);
  report.band_holds = report.kl_budget_b >= options.band.a && report.kl_budget_b <= options.band.A;

  double mean_tv = 0.0;
  for (std::size_t x = 0; x < q.size(); ++x) {
    mean_tv += q.weight(x) * total_variation(stage2.row(x), stage1.row(x));
  }

  report.checks.push_back(
      {"c1_nonnegative", BoundCheck::make(-report.c1_beta, kC1Tolerance), exact_premise});
  report.checks.push_back({"rl_loss_identity",
                           BoundCheck::make(report.identity_residual, kIdentityTolerance),
                           options.rl.mode == RlStage::Mode::kGibbs});
  report.checks.push_back({"reward_ceiling", ceiling.check, true});
  report.checks.push_back(
      {"mean_tv_pinsker",
       BoundCheck::make(mean_tv, ceiling.support_violation ? kInf : std::sqrt(0.5 * report.kl_budget_b)),
       true});
  report.checks.push_back({"kl_band_lower", BoundCheck::make(options.band.a, report.kl_budget_b), false});
  report.checks.push_back({"kl_band_upper", BoundCheck::make(report.kl_budget_b, options.band.A), false});
  return report;
}

}  // namespace

std::string_view to_string(PipelineKind kind) {
  return kind == PipelineKind::kSftThenRl ? "sft_then_rl" : "rl_then_sft";
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::kBase: return "base";
    case Phase::kSft: return "sft";
    case Phase::kRl: return "rl";
  }
  return "unknown";
}

C1Decomposition c1_decomposition(const ConditionalPolicy& p_sft, const RewardTable& r,
                                 double beta, const PromptDist& q,
                                 const ConditionalPolicy& p_data) {
  require_same_spaces(p_sft.spaces(), p_data.spaces(), "c1_decomposition");
  require_same_spaces(p_sft.spaces(), q.spaces(), "c1_decomposition");
  const RlConfig cfg(beta, p_sft);
  C1Decomposition out;
  out.per_prompt.resize(p_sft.num_prompts());
  for (std::size_t x = 0; x < p_sft.num_prompts(); ++x) {
    const auto data = p_data.row(x);
    const auto rew = r.row(x);
    double mean_reward = 0.0;
    for (std::size_t y = 0; y < data.size(); ++y) mean_reward += data[y] * rew[y];
    out.per_prompt[x] = partition_function(cfg, r, x).log_z - mean_reward / beta;
    out.c1 += q.weight(x) * out.per_prompt[x];
  }
  return out;
}

RewardCeilingCheck reward_ceiling_check(const ConditionalPolicy& p1, const ConditionalPolicy& p2,
                             const RewardTable& r, const PromptDist& q) {
  require_same_spaces(p1.spaces(), p2.spaces(), "reward_ceiling_check");
  const double lhs = expected_reward(p2, r, q) - expected_reward(p1, r, q);
  double budget = 0.0;
  for (std::size_t x = 0; x < q.size(); ++x) {
    if (q.weight(x) == 0.0) continue;
    const KlValue kl = kl_divergence(p2.row(x), p1.row(x));
    if (!kl.finite()) return {BoundCheck::make(lhs, kInf), true};
    budget += q.weight(x) * kl.nats;
  }
  return {BoundCheck::make(lhs, r.r_max() * std::sqrt(2.0 * budget)), false};
}

double kl_band_measure(const ConditionalPolicy& p2, const ConditionalPolicy& p1,
                       const PromptDist& q) {
  require_same_spaces(p1.spaces(), p2.spaces(), "kl_band_measure");
  double total = 0.0;
  for (std::size_t x = 0; x < q.size(); ++x) {
    if (q.weight(x) == 0.0) continue;
    const KlValue kl = kl_divergence(p2.row(x), p1.row(x));
    if (!kl.finite()) {
      fail(ErrorCode::kSupportViolation,
           "KL(p2 || p1) is infinite on prompt '" + p1.spaces().prompt(x) + "'");
    }
    total += q.weight(x) * kl.nats;
  }
  return total;
}

LambdaEstimate lambda_estimate(const ConditionalPolicy& p_star, const RewardTable& r,
                               const PromptDist& q, double budget, std::size_t n_samples,
                               std::uint64_t rng_seed, double band_a) {
  if (n_samples < 1) fail(ErrorCode::kInvalidArgument, "n_samples must be >= 1");
  if (!(budget > 0.0) || !std::isfinite(budget)) {
    fail(ErrorCode::kInvalidArgument, "KL budget must be finite and > 0");
  }
  const double j_star = expected_reward(p_star, r, q);
  const std::size_t size = p_star.data().size();

  LambdaEstimate est;
  std::vector<double> direction(size);
  for (std::size_t i = 0; i < n_samples; ++i) {
    CounterRng rng(rng_seed, static_cast<std::uint32_t>(i), 0x4c41u);
    for (double& g : direction) g = rng.normal();
    const double target = rng.uniform_open_zero() * budget;
    auto kl_at = [&](double t) { return kl_band_measure(tilt(p_star, direction, t), p_star, q); };

    double hi = 1.0;
    while (kl_at(hi) < target && hi < 1e8) hi *= 2.0;
    double lo = 0.0;
    if (kl_at(hi) <= target) {
      lo = hi;
    } else {
      for (int iter = 0; iter < 200 && hi - lo > 1e-15 * hi; ++iter) {
        const double mid = 0.5 * (lo + hi);
        (kl_at(mid) <= target ? lo : hi) = mid;
      }
    }
    const ConditionalPolicy candidate = tilt(p_star, direction, lo);
    const double kl = kl_band_measure(candidate, p_star, q);
    if (!(kl > 0.0) || kl > budget) continue;
    const double gap = j_star - expected_reward(candidate, r, q);
    est.ratios.push_back(gap > 0.0 ? gap / kl : 0.0);
  }
  if (est.ratios.empty()) {
    fail(ErrorCode::kNoValidSamples, "no tilted policy with 0 < KL <= budget was found");
  }
  est.accepted = est.ratios.size();
  est.ratio_min = *std::min_element(est.ratios.begin(), est.ratios.end());
  est.ratio_max = *std::max_element(est.ratios.begin(), est.ratios.end());
  est.ratio_median = median(est.ratios);
  est.lambda_hat = est.ratio_min;
  est.all_positive = est.ratio_min > 0.0;
  est.c2_hat = est.all_positive ? band_a * est.lambda_hat : 0.0;
  return est;
}

bool PipelineReport::all_checks_hold() const { return failing_checks().empty(); }

std::vector<std::string> PipelineReport::failing_checks() const {
  std::vector<std::string> out;
  for (const auto& c : checks) {
    if (c.enforced && !c.check.holds) out.push_back(c.name);
  }
  return out;
}

PipelineReport run_sft_then_rl(const PromptDist& q, const SftDataset& d_sft,
                               const RewardTable& r, const PipelineOptions& options,
                               const PipelineObserver& observer) {
  const ConditionalPolicy base =
      options.base ? *options.base : ConditionalPolicy::uniform(d_sft.spaces_ptr());
  if (observer) observer(Phase::kBase, 0, base);
  const ConditionalPolicy stage1 = run_sft_stage(base, d_sft, q, options, observer);
  const ConditionalPolicy stage2 = run_rl_stage(stage1, r, q, options, observer);
  return assemble_report(PipelineKind::kSftThenRl, q, d_sft, r, options, stage1, stage2, stage1,
                         stage2, options.sft.mode == SftStage::Mode::kExact);
}

PipelineReport run_rl_then_sft(const PromptDist& q, const SftDataset& d_sft,
                               const RewardTable& r, const PipelineOptions& options,
                               const PipelineObserver& observer) {
  const ConditionalPolicy base =
      options.base ? *options.base : ConditionalPolicy::uniform(d_sft.spaces_ptr());
  if (observer) observer(Phase::kBase, 0, base);
  const ConditionalPolicy stage1 = run_rl_stage(base, r, q, options, observer);
  const ConditionalPolicy stage2 = run_sft_stage(stage1, d_sft, q, options, observer);
  PipelineReport report = assemble_report(PipelineKind::kRlThenSft, q, d_sft, r, options, stage1,
                                          stage2, base, stage1, false);
  if (std::isfinite(report.kl_budget_b) && report.kl_budget_b > 0.0) {
    try {
      report.lambda = lambda_estimate(stage1, r, q, report.kl_budget_b, options.lambda_samples,
                                      derive_seed(options.seed, 0x4c41u), options.band.a);
      report.lambda_hat = report.lambda->lambda_hat;
      report.c2_hat = report.lambda->c2_hat;
      report.kl_growth_holds = report.lambda->all_positive;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoValidSamples) throw;
    }
  }
  return report;
}

}  // namespace coupling
