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

#include "coupling/error.hpp"
#include "coupling/harness/instances.hpp"
#include "coupling/sft.hpp"
#include "support/convert.hpp"
#include "support/oracles.hpp"

namespace coupling {
namespace {

using testing_support::pairs_of;
using testing_support::rows_of;

TEST(SftLoss, UniformOverFourOnThreePairs) {
  auto spaces = harness::atomic_spaces(1, 4);
  const SftDataset d(spaces, {{0, 0, 1}, {0, 1, 1}, {0, 3, 1}});
  const auto p = ConditionalPolicy::uniform(spaces);
  EXPECT_NEAR(sft_loss(p, d, LossMode::kSum).nats, 3.0 * std::log(4.0), 1e-14);
  EXPECT_NEAR(sft_loss(p, d, LossMode::kMean).nats, std::log(4.0), 1e-14);
}

TEST(SftLoss, FloorsZeroProbabilities) {
  auto spaces = harness::atomic_spaces(1, 2);
  const SftDataset d(spaces, {{0, 1, 2}});
  const SftLoss loss = sft_loss(ConditionalPolicy(spaces, {1.0, 0.0}), d, LossMode::kSum);
  EXPECT_EQ(loss.floored_count, 2u);
  EXPECT_NEAR(loss.nats, -2.0 * std::log(1e-12), 1e-9);
}

TEST(SftLoss, MatchesOracle) {
  for (std::uint32_t s = 0; s < 30; ++s) {
    CounterRng rng(s, 1);
    auto spaces = harness::atomic_spaces(1 + s % 5, 2 + s % 7);
    const auto p = harness::random_policy(rng, spaces);
    const auto d = harness::sample_dataset(rng, harness::random_policy(rng, spaces), 7);
    EXPECT_NEAR(sft_loss(p, d, LossMode::kMean).nats, oracle::mean_nll(rows_of(p), pairs_of(d)), 1e-12);
  }
}

TEST(ExactFit, EmpiricalFrequencies) {
  auto spaces = harness::atomic_spaces(1, 2);
  const SftDataset d(spaces, {{0, 0, 3}, {0, 1, 1}});
  const auto fit = exact_sft_fit(d);
  EXPECT_NEAR(fit.prob(0, 0), 0.75, 1e-15);
  EXPECT_NEAR(fit.prob(0, 1), 0.25, 1e-15);
}

TEST(ExactFit, UncoveredPrompts) {
  auto spaces = harness::atomic_spaces(2, 2);
  const SftDataset d(spaces, {{0, 0, 1}});
  const auto fit = exact_sft_fit(d);
  EXPECT_NEAR(fit.prob(1, 0), 0.5, 1e-15);
  const PromptDist q = PromptDist::uniform(spaces);
  EXPECT_THROW(exact_sft_fit(d, &q), Error);
  const PromptDist only_first(spaces, {1.0, 0.0});
  EXPECT_NO_THROW(exact_sft_fit(d, &only_first));
}

TEST(ExactFit, MinimizesLossAgainstRivals) {
  CounterRng rng(12);
  auto spaces = harness::atomic_spaces(3, 5);
  const auto d = harness::sample_dataset(rng, harness::random_policy(rng, spaces), 9);
  const double best = sft_loss(exact_sft_fit(d), d, LossMode::kMean).nats;
  for (int i = 0; i < 200; ++i) {
    EXPECT_LE(best, sft_loss(harness::random_policy(rng, spaces), d, LossMode::kMean).nats + 1e-12);
  }
}

TEST(SftGradient, MatchesCentralDifferences) {
  for (std::uint32_t s = 0; s < 10; ++s) {
    CounterRng rng(s, 2);
    auto spaces = harness::atomic_spaces(1 + s % 4, 2 + s % 5);
    const auto d = harness::sample_dataset(rng, harness::random_policy(rng, spaces), 5);
    std::vector<double> theta(spaces->num_prompts() * spaces->num_responses());
    for (double& t : theta) t = rng.normal();
    const SoftmaxPolicyParams params(spaces, theta);
    const auto analytic = sft_gradient(params, d);
    const auto numeric = oracle::central_difference(
        [&](const std::vector<double>& t) {
          return sft_loss(SoftmaxPolicyParams(spaces, t).to_policy(), d, LossMode::kMean).nats;
        },
        theta, 1e-5);
    EXPECT_LT(oracle::max_abs_diff(analytic, numeric), 1e-8);
  }
}

TEST(SftTrain, ConvergesToExactFitLoss) {
  CounterRng rng(13);
  auto spaces = harness::atomic_spaces(3, 4);
  // Full support: with a zero-count response the optimum sits at infinite logits.
  std::vector<SftPair> pairs;
  for (std::size_t x = 0; x < 3; ++x) {
    for (std::size_t y = 0; y < 4; ++y) pairs.push_back({x, y, 1 + rng.next_u32() % 5});
  }
  const SftDataset d(spaces, pairs);
  std::vector<double> theta(12);
  for (double& t : theta) t = rng.normal();
  const auto result = sft_train(SoftmaxPolicyParams(spaces, theta), d, 0.5, 500, 0.0);
  const double exact = sft_loss(exact_sft_fit(d), d, LossMode::kMean).nats;
  ASSERT_FALSE(result.loss_trace.empty());
  EXPECT_LE(result.loss_trace.size(), 500u);
  EXPECT_LT(result.loss_trace.back() - exact, 1e-6);
  for (std::size_t i = 1; i < result.loss_trace.size(); ++i) {
    EXPECT_LE(result.loss_trace[i], result.loss_trace[i - 1]);
  }
}

TEST(SftGradient, StationaryAtOptimum) {
  auto spaces = harness::atomic_spaces(2, 3);
  const SftDataset d(spaces, {{0, 0, 2}, {0, 1, 1}, {0, 2, 1}, {1, 0, 1}, {1, 1, 1}, {1, 2, 3}});
  const auto params = SoftmaxPolicyParams::from_policy(exact_sft_fit(d));
  double norm = 0.0;
  for (double g : sft_gradient(params, d)) norm += g * g;
  EXPECT_LE(std::sqrt(norm), 1e-10);
}

TEST(SftTrain, StopsEarlyOnTolerance) {
  auto spaces = harness::atomic_spaces(1, 2);
  const SftDataset d(spaces, {{0, 0, 1}, {0, 1, 1}});
  // Zero logits already fit the uniform data; the first step cannot improve.
  const auto result = sft_train(SoftmaxPolicyParams::zeros(spaces), d, 1.0, 100, 1e-12);
  EXPECT_EQ(result.loss_trace.size(), 1u);
}

TEST(SftTrain, RejectsBadArguments) {
  auto spaces = harness::atomic_spaces(1, 2);
  const SftDataset d(spaces, {{0, 0, 1}});
  EXPECT_THROW(sft_train(SoftmaxPolicyParams::zeros(spaces), d, 1.0, 0, 0.0), Error);
  EXPECT_THROW(sft_train(SoftmaxPolicyParams::zeros(spaces), d, -1.0, 5, 0.0), Error);
}

TEST(SoftmaxParams, FromPolicyRoundTrip) {
  CounterRng rng(8);
  auto spaces = harness::atomic_spaces(3, 4);
  const auto p = harness::random_policy(rng, spaces);
  const auto back = SoftmaxPolicyParams::from_policy(p).to_policy();
  EXPECT_LT(oracle::max_abs_diff(p.data(), back.data()), 1e-14);
  EXPECT_THROW(SoftmaxPolicyParams::from_policy(ConditionalPolicy(harness::atomic_spaces(1, 2), {1.0, 0.0})),
               Error);
}

}  // namespace
}  // namespace coupling
