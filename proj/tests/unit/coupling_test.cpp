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

#include <gtest/gtest.h>

#include <cmath>

#include "coupling/coupling.hpp"
#include "coupling/error.hpp"
#include "coupling/harness/instances.hpp"
#include "support/convert.hpp"
#include "support/oracles.hpp"

namespace coupling {
namespace {

using testing_support::empirical;
using testing_support::prompt_marginal;
using testing_support::rows_of;
using testing_support::weights_of;

struct Fixture {
  SpacesPtr spaces;
  PromptDist q;
  SftDataset d;
  RewardTable r;
};

Fixture random_fixture(std::uint32_t seed, std::size_t nx, std::size_t ny, std::size_t pairs = 6) {
  CounterRng rng(seed, 31);
  auto spaces = harness::atomic_spaces(nx, ny);
  auto d = harness::sample_dataset(rng, harness::random_policy(rng, spaces, 0.5), pairs);
  return {spaces, d.prompt_marginal(), d, harness::random_reward(rng, spaces)};
}

PipelineOptions exact_options(double beta) {
  PipelineOptions o;
  o.beta = beta;
  o.sft.mode = SftStage::Mode::kExact;
  o.rl.mode = RlStage::Mode::kGibbs;
  o.lambda_samples = 16;
  return o;
}

TEST(C1, HandValue) {
  auto spaces = harness::atomic_spaces(1, 2);
  const auto uniform = ConditionalPolicy::uniform(spaces);
  const RewardTable r(spaces, {1.0, -1.0}, 1.0);
  const auto c1 = c1_decomposition(uniform, r, 1.0, PromptDist::uniform(spaces), uniform);
  EXPECT_NEAR(c1.per_prompt[0], std::log((std::exp(1.0) + std::exp(-1.0)) / 2.0), 1e-15);
  EXPECT_NEAR(c1.c1, 0.433781, 1e-6);
}

TEST(C1, MatchesOracleAndLossIdentity) {
  for (std::uint32_t s = 0; s < 30; ++s) {
    const Fixture f = random_fixture(s, 1 + s % 5, 2 + s % 8);
    CounterRng rng(s, 32);
    const auto p_in = harness::random_policy(rng, f.spaces);
    const double beta = s % 3 == 0 ? 0.1 : (s % 3 == 1 ? 1.0 : 10.0);
    const auto c1 = c1_decomposition(p_in, f.r, beta, f.d.prompt_marginal(), exact_sft_fit(f.d));
    const double oracle_c1 =
        oracle::c1(rows_of(p_in), rows_of(f.r), beta, prompt_marginal(f.d), empirical(f.d));
    EXPECT_NEAR(c1.c1, oracle_c1, 1e-12);
    // loss(gibbs) - loss(p_in), both from the oracle.
    const auto gibbs = gibbs_solution(RlConfig(beta, p_in), f.r);
    const auto pairs = testing_support::pairs_of(f.d);
    EXPECT_NEAR(oracle::mean_nll(rows_of(gibbs), pairs) - oracle::mean_nll(rows_of(p_in), pairs), c1.c1,
                1e-10);
  }
}

TEST(C1, ConstantRewardIsZero) {
  const Fixture f = random_fixture(3, 4, 6);
  const RewardTable flat(f.spaces, std::vector<double>(24, 0.3), 1.0);
  const auto fit = exact_sft_fit(f.d);
  const auto c1 = c1_decomposition(fit, flat, 0.7, f.q, fit);
  EXPECT_LE(std::abs(c1.c1), 1e-12);
  for (double t : c1.per_prompt) EXPECT_LE(std::abs(t), 1e-12);
}

TEST(C1, ZeroWhenRewardConstantOnDataSupportOnly) {
  // The data never uses response 2, so its reward does not matter.
  auto spaces = harness::atomic_spaces(1, 3);
  const SftDataset d(spaces, {{0, 0, 2}, {0, 1, 1}});
  const RewardTable r(spaces, {0.5, 0.5, -1.0}, 1.0);
  const auto fit = exact_sft_fit(d);
  EXPECT_LE(std::abs(c1_decomposition(fit, r, 1.0, d.prompt_marginal(), fit).c1), 1e-12);
  const RewardTable spread(spaces, {0.5, -0.5, 0.0}, 1.0);
  EXPECT_GE(c1_decomposition(fit, spread, 1.0, d.prompt_marginal(), fit).c1, 1e-4);
}

TEST(RewardCeiling, TwoPointExample) {
  auto spaces = harness::atomic_spaces(1, 2);
  const ConditionalPolicy p1(spaces, {0.9, 0.1}), p2(spaces, {0.5, 0.5});
  const RewardTable r(spaces, {1.0, -1.0}, 1.0);
  const auto check = reward_ceiling_check(p1, p2, r, PromptDist::uniform(spaces));
  EXPECT_NEAR(check.check.lhs, -0.8, 1e-15);
  // KL((0.5,0.5) || (0.9,0.1)) = 0.5 log(0.5/0.9) + 0.5 log(0.5/0.1) = 0.510826.
  const double kl = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  EXPECT_NEAR(kl, 0.510826, 1e-6);
  EXPECT_NEAR(check.check.rhs, std::sqrt(2.0 * kl), 1e-15);
  EXPECT_TRUE(check.check.holds);
  EXPECT_FALSE(check.support_violation);
}

TEST(RewardCeiling, SupportViolationIsFlagged) {
  auto spaces = harness::atomic_spaces(1, 2);
  const ConditionalPolicy p1(spaces, {1.0, 0.0}), p2(spaces, {0.5, 0.5});
  const RewardTable r(spaces, {1.0, -1.0}, 1.0);
  const auto check = reward_ceiling_check(p1, p2, r, PromptDist::uniform(spaces));
  EXPECT_TRUE(check.support_violation);
  EXPECT_TRUE(std::isinf(check.check.rhs));
  EXPECT_TRUE(check.check.holds);
}

TEST(KlBand, TwoPromptHandSum) {
  auto spaces = harness::atomic_spaces(2, 2);
  const ConditionalPolicy p2(spaces, {1.0, 0.0, 0.5, 0.5});
  const ConditionalPolicy p1(spaces, {0.5, 0.5, 0.5, 0.5});
  const PromptDist q(spaces, {0.25, 0.75});
  EXPECT_NEAR(kl_band_measure(p2, p1, q), 0.25 * std::log(2.0), 1e-15);
  EXPECT_THROW(kl_band_measure(p1, p2, q), Error);
}

TEST(KlBand, MonotoneUnderInterpolation) {
  CounterRng rng(40);
  auto spaces = harness::atomic_spaces(3, 4);
  const auto p1 = harness::random_policy(rng, spaces);
  const auto p2 = harness::random_policy(rng, spaces);
  const auto q = PromptDist::uniform(spaces);
  double previous = kl_band_measure(p2, p1, q);
  for (int k = 1; k <= 10; ++k) {
    const double t = k / 10.0;
    std::vector<double> mix(p1.data().size());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = (1 - t) * p2.data()[i] + t * p1.data()[i];
    const double now = kl_band_measure(ConditionalPolicy(spaces, mix), p1, q);
    EXPECT_LE(now, previous + 1e-15);
    previous = now;
  }
  EXPECT_NEAR(previous, 0.0, 1e-15);
}

TEST(SftThenRl, ExactPipelineIdentity) {
  for (std::uint32_t s = 0; s < 10; ++s) {
    const Fixture f = random_fixture(s, 4, 8);
    const auto report = run_sft_then_rl(f.q, f.d, f.r, exact_options(1.0));
    EXPECT_LE(report.identity_residual, 1e-10);
    EXPECT_NEAR(report.sft_loss_after - report.epsilon_sft, report.c1_beta, 1e-10);
    EXPECT_GE(report.c1_beta, -1e-10);
    EXPECT_TRUE(report.all_checks_hold());
  }
}

TEST(SftThenRl, ConstantRewardChangesNothing) {
  const Fixture f = random_fixture(5, 3, 5);
  const RewardTable flat(f.spaces, std::vector<double>(15, -0.2), 1.0);
  const auto report = run_sft_then_rl(f.q, f.d, flat, exact_options(1.0));
  EXPECT_EQ(report.sft_loss_after, report.epsilon_sft);
  EXPECT_LE(std::abs(report.c1_beta), 1e-12);
}

TEST(SftThenRl, C1ShrinksAsBetaGrows) {
  const Fixture f = random_fixture(6, 4, 8);
  double previous = std::numeric_limits<double>::infinity();
  for (double beta : {0.1, 0.3, 1.0, 3.0, 10.0}) {
    const double c1 = run_sft_then_rl(f.q, f.d, f.r, exact_options(beta)).c1_beta;
    EXPECT_LE(c1, previous);
    previous = c1;
  }
  EXPECT_LT(previous, 0.01);
}

TEST(SftThenRl, UncoveredPromptIsAnError) {
  auto spaces = harness::atomic_spaces(2, 2);
  const SftDataset d(spaces, {{0, 0, 1}});
  const RewardTable r(spaces, {1, -1, 1, -1}, 1.0);
  try {
    run_sft_then_rl(PromptDist::uniform(spaces), d, r, exact_options(1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUncoveredPrompt);
  }
}

TEST(RlThenSft, SelfDistillationKeepsReward) {
  const Fixture f = random_fixture(7, 3, 4);
  PipelineOptions o = exact_options(1.0);
  const auto base = ConditionalPolicy::uniform(f.spaces);
  const auto stage1 = gibbs_solution(RlConfig(1.0, base), f.r);
  // Data exactly proportional to stage-1 rows up to rounding: use many counts.
  std::vector<SftPair> pairs;
  for (std::size_t x = 0; x < 3; ++x) {
    for (std::size_t y = 0; y < 4; ++y) {
      pairs.push_back({x, y, static_cast<std::uint64_t>(std::llround(stage1.prob(x, y) * 1e9)) + 1});
    }
  }
  const SftDataset d(f.spaces, pairs);
  const auto report = run_rl_then_sft(d.prompt_marginal(), d, f.r, o);
  EXPECT_LT(report.kl_budget_b, 1e-12);
  EXPECT_NEAR(report.reward_after, report.reward_before, 1e-6);
}

TEST(RlThenSft, CeilingHoldsOnRandomInstances) {
  for (std::uint32_t s = 0; s < 30; ++s) {
    const Fixture f = random_fixture(100 + s, 1 + s % 5, 2 + s % 6);
    const auto report = run_rl_then_sft(f.q, f.d, f.r, exact_options(0.5));
    EXPECT_LE(report.reward_after - report.reward_before, report.ceiling_rhs + 1e-10);
    EXPECT_TRUE(report.all_checks_hold());
  }
}

TEST(Lambda, NonnegativeAndSummarized) {
  const Fixture f = random_fixture(9, 3, 4);
  const auto p_star = gibbs_solution(RlConfig(0.5, ConditionalPolicy::uniform(f.spaces)), f.r);
  const auto est = lambda_estimate(p_star, f.r, f.q, 0.1, 32, 5, 1e-3);
  EXPECT_EQ(est.accepted, 32u);
  EXPECT_GE(est.lambda_hat, 0.0);
  EXPECT_LE(est.ratio_min, est.ratio_median);
  EXPECT_LE(est.ratio_median, est.ratio_max);
  EXPECT_EQ(est.c2_hat, est.all_positive ? 1e-3 * est.lambda_hat : 0.0);
  EXPECT_THROW(lambda_estimate(p_star, f.r, f.q, 0.1, 0, 5, 1e-3), Error);
}

TEST(Lambda, ArgmaxPolicyDominates) {
  // p_star concentrated on argmax rewards within a full-support reference at
  // small beta: every sampled tilt loses reward, so all ratios are >= 0.
  const Fixture f = random_fixture(10, 2, 5);
  const auto p_star = gibbs_solution(RlConfig(0.05, ConditionalPolicy::uniform(f.spaces)), f.r);
  const auto est = lambda_estimate(p_star, f.r, f.q, 0.05, 32, 6, 1e-3);
  for (double r : est.ratios) EXPECT_GE(r, 0.0);
}

}  // namespace
}  // namespace coupling
