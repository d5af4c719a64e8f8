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

#include "coupling/divergence.hpp"
#include "coupling/error.hpp"
#include "coupling/harness/instances.hpp"
#include "coupling/rl.hpp"
#include "support/convert.hpp"
#include "support/oracles.hpp"

namespace coupling {
namespace {

using testing_support::rows_of;
using testing_support::weights_of;

RewardTable plus_minus(const SpacesPtr& spaces) { return RewardTable(spaces, {1.0, -1.0}, 1.0); }

TEST(Gibbs, HandValues) {
  auto spaces = harness::atomic_spaces(1, 2);
  const RlConfig cfg(1.0, ConditionalPolicy::uniform(spaces));
  const auto g = gibbs_solution(cfg, plus_minus(spaces));
  const double e2 = std::exp(2.0);
  EXPECT_NEAR(g.prob(0, 0), e2 / (e2 + 1.0), 1e-15);
  EXPECT_NEAR(g.prob(0, 0), 0.880797, 1e-6);
  EXPECT_NEAR(g.prob(0, 1), 0.119203, 1e-6);
}

TEST(Partition, HandValue) {
  auto spaces = harness::atomic_spaces(1, 2);
  const RlConfig cfg(1.0, ConditionalPolicy::uniform(spaces));
  const auto z = partition_function(cfg, plus_minus(spaces), 0);
  EXPECT_NEAR(z.z, (std::exp(1.0) + std::exp(-1.0)) / 2.0, 1e-15);
  EXPECT_NEAR(z.z, 1.543081, 1e-6);
  EXPECT_NEAR(z.log_z, 0.433781, 1e-6);
}

TEST(Partition, TinyBetaStaysFiniteInLogSpace) {
  auto spaces = harness::atomic_spaces(1, 2);
  const RlConfig cfg(1e-5, ConditionalPolicy::uniform(spaces));
  const auto z = partition_function(cfg, plus_minus(spaces), 0);
  EXPECT_NEAR(z.log_z, 1e5 + std::log(0.5), 1e-6);
  const auto g = gibbs_solution(cfg, plus_minus(spaces));
  EXPECT_EQ(g.prob(0, 0), 1.0);
}

TEST(Gibbs, MatchesOracle) {
  for (std::uint32_t s = 0; s < 40; ++s) {
    CounterRng rng(s, 3);
    auto spaces = harness::atomic_spaces(1 + s % 6, 2 + s % 9);
    const auto ref = harness::random_policy(rng, spaces);
    const auto r = harness::random_reward(rng, spaces);
    const double beta = s % 2 ? 0.3 : 4.0;
    const auto g = gibbs_solution(RlConfig(beta, ref), r);
    const auto refs = rows_of(ref), rewards = rows_of(r);
    for (std::size_t x = 0; x < refs.size(); ++x) {
      const auto expect = oracle::gibbs_row(refs[x], rewards[x], beta);
      EXPECT_LT(oracle::max_abs_diff({g.row(x).begin(), g.row(x).end()}, expect), 1e-14);
      EXPECT_NEAR(partition_function(RlConfig(beta, ref), r, x).log_z,
                  oracle::log_partition(refs[x], rewards[x], beta), 1e-13);
    }
  }
}

TEST(Gibbs, ConstantRewardReturnsReferenceExactly) {
  CounterRng rng(2);
  auto spaces = harness::atomic_spaces(3, 4);
  const auto ref = harness::random_policy(rng, spaces);
  const RewardTable flat(spaces, std::vector<double>(12, 0.25), 1.0);
  EXPECT_EQ(gibbs_solution(RlConfig(0.3, ref), flat).data(), ref.data());
}

TEST(Gibbs, KeepsReferenceSupport) {
  auto spaces = harness::atomic_spaces(1, 3);
  const ConditionalPolicy ref(spaces, {0.5, 0.5, 0.0});
  const RewardTable r(spaces, {0.0, 0.0, 1.0}, 1.0);
  EXPECT_EQ(gibbs_solution(RlConfig(0.1, ref), r).prob(0, 2), 0.0);
}

TEST(Gibbs, BetaLimits) {
  CounterRng rng(21);
  auto spaces = harness::atomic_spaces(3, 5);
  const auto ref = harness::random_policy(rng, spaces);
  const auto r = harness::random_reward(rng, spaces);
  const auto flat = gibbs_solution(RlConfig(1e9, ref), r);
  const auto sharp = gibbs_solution(RlConfig(1e-3, ref), r);
  for (std::size_t x = 0; x < 3; ++x) {
    EXPECT_LE(total_variation(flat.row(x), ref.row(x)), 1e-8);
    const auto row = r.row(x);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    std::vector<double> onehot(5, 0.0);
    onehot[best] = 1.0;
    EXPECT_LE(total_variation(sharp.row(x), onehot), 1e-6);
  }
}

TEST(RlObjective, MatchesOracleAndGibbsIsOptimal) {
  for (std::uint32_t s = 0; s < 20; ++s) {
    CounterRng rng(s, 4);
    auto spaces = harness::atomic_spaces(1 + s % 4, 2 + s % 6);
    const auto ref = harness::random_policy(rng, spaces);
    const auto r = harness::random_reward(rng, spaces);
    const auto q = harness::random_prompt_dist(rng, spaces);
    const RlConfig cfg(0.7, ref);
    const auto g = gibbs_solution(cfg, r);
    const double best = rl_objective(g, cfg, r, q);
    EXPECT_NEAR(best, oracle::rl_objective(rows_of(g), rows_of(ref), rows_of(r), weights_of(q), 0.7), 1e-13);
    for (int k = 0; k < 50; ++k) {
      EXPECT_LE(rl_objective(harness::random_policy(rng, spaces), cfg, r, q), best + 1e-10);
    }
  }
}

TEST(RlObjective, SupportViolationThrows) {
  auto spaces = harness::atomic_spaces(1, 2);
  const RlConfig cfg(1.0, ConditionalPolicy(spaces, {1.0, 0.0}));
  try {
    rl_objective(ConditionalPolicy::uniform(spaces), cfg, plus_minus(spaces), PromptDist::uniform(spaces));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSupportViolation);
  }
}

TEST(RlGradient, MatchesCentralDifferences) {
  for (std::uint32_t s = 0; s < 10; ++s) {
    CounterRng rng(s, 5);
    auto spaces = harness::atomic_spaces(1 + s % 3, 2 + s % 5);
    const auto ref = harness::random_policy(rng, spaces);
    const auto r = harness::random_reward(rng, spaces);
    const auto q = harness::random_prompt_dist(rng, spaces);
    const RlConfig cfg(0.4, ref);
    std::vector<double> theta(spaces->num_prompts() * spaces->num_responses());
    for (double& t : theta) t = rng.normal();
    const auto analytic = rl_objective_gradient(SoftmaxPolicyParams(spaces, theta), cfg, r, q);
    const auto numeric = oracle::central_difference(
        [&](const std::vector<double>& t) {
          return rl_objective(SoftmaxPolicyParams(spaces, t).to_policy(), cfg, r, q);
        },
        theta, 1e-5);
    EXPECT_LT(oracle::max_abs_diff(analytic, numeric), 1e-8);
  }
}

TEST(Grpo, ConstantRewardsGiveOnlyKlTerm) {
  auto spaces = harness::atomic_spaces(1, 3);
  const RewardTable r(spaces, {0.5, 0.5, 0.5}, 1.0);
  const auto ref = ConditionalPolicy::uniform(spaces);
  // At the reference itself the KL gradient vanishes too.
  const auto dir = grpo_direction(SoftmaxPolicyParams::zeros(spaces), RlConfig(1.0, ref), r,
                                  PromptDist::uniform(spaces), 4, 3);
  for (double d : dir) EXPECT_EQ(d, 0.0);
}

TEST(Grpo, DeterministicPerSeed) {
  CounterRng rng(6);
  auto spaces = harness::atomic_spaces(2, 4);
  const auto ref = harness::random_policy(rng, spaces);
  const auto r = harness::random_reward(rng, spaces);
  const auto q = PromptDist::uniform(spaces);
  const auto params = SoftmaxPolicyParams::from_policy(ref);
  const RlConfig cfg(0.5, ref);
  EXPECT_EQ(grpo_direction(params, cfg, r, q, 8, 11), grpo_direction(params, cfg, r, q, 8, 11));
  EXPECT_NE(grpo_direction(params, cfg, r, q, 8, 11), grpo_direction(params, cfg, r, q, 8, 12));
  EXPECT_THROW(grpo_direction(params, cfg, r, q, 1, 11), Error);
}

TEST(Grpo, AverageDirectionAlignsWithExactGradient) {
  CounterRng rng(7);
  auto spaces = harness::atomic_spaces(2, 4);
  const auto ref = harness::random_policy(rng, spaces);
  const auto r = harness::random_reward(rng, spaces);
  const auto q = PromptDist::uniform(spaces);
  const auto params = SoftmaxPolicyParams::from_policy(ref);
  const RlConfig cfg(0.5, ref);
  std::vector<double> mean(params.logits().size(), 0.0);
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const auto d = grpo_direction(params, cfg, r, q, 8, seed);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += d[i];
  }
  EXPECT_GT(oracle::cosine(mean, rl_objective_gradient(params, cfg, r, q)), 0.5);
}

TEST(Verifier, StrictClassAndReward) {
  auto spaces = make_spaces({"s0", "s1"}, ResponseSpace::parse({"yes <eos>", "no <eos>", "yes no <eos>"}));
  const auto& alpha = spaces->responses().alphabet();
  VerifierRule rule;
  rule.class_labels = {{*alpha.find("yes")}, {*alpha.find("no")}};
  rule.label_map = {0, 1};
  EXPECT_EQ(strict_class(rule, spaces->responses().at(0), alpha.eos()), 0u);
  EXPECT_FALSE(strict_class(rule, spaces->responses().at(2), alpha.eos()).has_value());
  const auto r = reward_from_verifier(rule, spaces);
  EXPECT_EQ(r.at(0, 0), 1.0);
  EXPECT_EQ(r.at(0, 1), -1.0);
  EXPECT_EQ(r.at(1, 1), 1.0);
  EXPECT_EQ(r.at(1, 2), -1.0);
}

TEST(RewardTable, RejectsOutOfBound) {
  auto spaces = harness::atomic_spaces(1, 2);
  EXPECT_THROW(RewardTable(spaces, {2.0, 0.0}, 1.0), Error);
  EXPECT_THROW(RlConfig(0.0, ConditionalPolicy::uniform(spaces)), Error);
}

}  // namespace
}  // namespace coupling
