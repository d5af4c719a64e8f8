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

#include "coupling/harness/checks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "coupling/coupling.hpp"
#include "coupling/divergence.hpp"
#include "coupling/harness/instances.hpp"
#include "coupling/rng.hpp"
#include "coupling/serialize.hpp"

namespace coupling::harness {
namespace {

constexpr std::uint32_t kTrials = 200;

using Trial = std::function<double(std::uint64_t, std::uint32_t)>;

struct Outcome {
  bool ok = true;
  double worst = 0.0;
};

struct Instance {
  SpacesPtr spaces;
  PromptDist q;
  ConditionalPolicy p;
  RewardTable r;
};

Instance make_instance(std::uint64_t seed, std::uint32_t trial) {
  CounterRng rng(seed, trial, 0xC4EC);
  const std::size_t nx = 1 + rng.next_u32() % 6;
  const std::size_t ny = 2 + rng.next_u32() % 10;
  SpacesPtr spaces = atomic_spaces(nx, ny);
  PromptDist q = random_prompt_dist(rng, spaces);
  ConditionalPolicy p = random_policy(rng, spaces);
  RewardTable r = random_reward(rng, spaces);
  return {spaces, std::move(q), std::move(p), std::move(r)};
}

Outcome min_slack(std::uint64_t seed, const Trial& slack) {
  Outcome o{true, std::numeric_limits<double>::infinity()};
  for (std::uint32_t t = 0; t < kTrials; ++t) {
    const double s = slack(seed, t);
    o.worst = std::min(o.worst, s);
    if (!(s >= -1e-12)) o.ok = false;
  }
  return o;
}

Outcome max_residual(std::uint64_t seed, double tol, const Trial& residual) {
  Outcome o;
  for (std::uint32_t t = 0; t < kTrials; ++t) {
    const double e = residual(seed, t);
    o.worst = std::max(o.worst, e);
    if (!(e <= tol)) o.ok = false;
  }
  return o;
}

double beta_for(std::uint32_t t) {
  static constexpr double kBetas[] = {0.1, 1.0, 10.0};
  return kBetas[t % 3];
}

double tv_axioms(std::uint64_t seed, std::uint32_t t) {
  CounterRng rng(seed, t, 0x7476);
  const std::size_t n = 2 + rng.next_u32() % 12;
  const auto a = random_distribution(rng, n);
  const auto b = random_distribution(rng, n);
  const auto c = random_distribution(rng, n);
  double residual = std::abs(total_variation(a, b) - total_variation(b, a));
  residual = std::max(residual, total_variation(a, a));
  residual = std::max(residual, -tv_triangle_check(a, b, c).slack);
  return std::max(residual, total_variation(a, b) - 1.0);
}

double pinsker(std::uint64_t seed, std::uint32_t t) {
  CounterRng rng(seed, t, 0x7069);
  const std::size_t n = 2 + rng.next_u32() % 12;
  const double alpha = 0.1 + 2.0 * rng.uniform();
  const auto a = random_distribution(rng, n, alpha);
  const auto b = random_distribution(rng, n, alpha);
  return pinsker_check(a, b).slack;
}

double factor_two(std::uint64_t seed, std::uint32_t t) {
  CounterRng rng(seed, t, 0x6632);
  const std::size_t n = 2 + rng.next_u32() % 12;
  std::vector<double> f(n);
  for (double& v : f) v = 2.0 * rng.uniform() - 1.0;
  const auto a = random_distribution(rng, n);
  const auto b = random_distribution(rng, n);
  return bounded_expectation_gap(f, a, b).slack;
}

double chain_rule(std::uint64_t seed, std::uint32_t t) {
  CounterRng rng(seed, t, 0x6c31);
  const std::size_t nx = 1 + rng.next_u32() % 3;
  const std::size_t alphabet = 1 + rng.next_u32() % 3;
  const std::size_t l_max = 1 + rng.next_u32() % 3;
  const AutoregressivePolicy ar = random_autoregressive(rng, nx, alphabet, l_max);
  const ConditionalPolicy flat = flatten(ar);
  double worst = 0.0;
  for (std::size_t x = 0; x < flat.num_prompts(); ++x) {
    for (std::size_t y = 0; y < flat.num_responses(); ++y) {
      const Sequence& seq = flat.spaces().responses().at(y);
      worst = std::max(worst, std::abs(token_nll_sum(ar, x, seq) + sequence_logprob(flat, x, y)));
    }
  }
  return worst;
}

double loss_identity(std::uint64_t seed, std::uint32_t t) {
  const Instance in = make_instance(seed, t);
  CounterRng rng(seed, t, 0x6964);
  const SftDataset d = sample_dataset(rng, in.p, 10);
  const ConditionalPolicy p_in = random_policy(rng, in.spaces);
  const double beta = beta_for(t);
  const ConditionalPolicy gibbs = gibbs_solution(RlConfig(beta, p_in), in.r);
  const double c1 = c1_decomposition(p_in, in.r, beta, d.prompt_marginal(), exact_sft_fit(d)).c1;
  const double delta =
      sft_loss(gibbs, d, LossMode::kMean).nats - sft_loss(p_in, d, LossMode::kMean).nats;
  return std::abs(delta - c1);
}

double c1_sign(std::uint64_t seed, std::uint32_t t) {
  const Instance in = make_instance(seed, t);
  CounterRng rng(seed, t, 0x6331);
  const SftDataset d = sample_dataset(rng, in.p, 10);
  const ConditionalPolicy fit = exact_sft_fit(d);
  return c1_decomposition(fit, in.r, beta_for(t), d.prompt_marginal(), fit).c1 + kC1Tolerance;
}

double c1_constant_reward(std::uint64_t seed, std::uint32_t t) {
  const Instance in = make_instance(seed, t);
  CounterRng rng(seed, t, 0x6330);
  const SftDataset d = sample_dataset(rng, in.p, 10);
  const ConditionalPolicy fit = exact_sft_fit(d);
  const double level = 2.0 * rng.uniform() - 1.0;
  const RewardTable flat(in.spaces, std::vector<double>(fit.data().size(), level), 1.0);
  return std::abs(c1_decomposition(fit, flat, beta_for(t), d.prompt_marginal(), fit).c1);
}

double reward_ceiling(std::uint64_t seed, std::uint32_t t) {
  const Instance in = make_instance(seed, t);
  CounterRng rng(seed, t, 0x7031);
  const ConditionalPolicy other = random_policy(rng, in.spaces, 0.3);
  return reward_ceiling_check(in.p, other, in.r, in.q).check.slack;
}

double gibbs_optimality(std::uint64_t seed, std::uint32_t t) {
  const Instance in = make_instance(seed, t);
  CounterRng rng(seed, t, 0x6762);
  const RlConfig cfg(beta_for(t), in.p);
  const double j_best = rl_objective(gibbs_solution(cfg, in.r), cfg, in.r, in.q);
  double slack = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 20; ++k) {
    const ConditionalPolicy rival = random_policy(rng, in.spaces);
    slack = std::min(slack, j_best - rl_objective(rival, cfg, in.r, in.q) + 1e-10);
  }
  return slack;
}

}  // namespace

bool run_check_suite(std::uint64_t seed, std::ostream& out) {
  bool all = true;
  auto emit = [&](const std::string& name, bool ok, const std::string& detail) {
    out << (ok ? "PASS " : "FAIL ") << name << " " << detail << "\n";
    all = all && ok;
  };
  auto slack = [&](const std::string& name, const Trial& trial) {
    const Outcome o = min_slack(seed, trial);
    emit(name, o.ok, "min_slack=" + format_double(o.worst));
  };
  auto residual = [&](const std::string& name, double tol, const Trial& trial) {
    const Outcome o = max_residual(seed, tol, trial);
    emit(name, o.ok, "max_residual=" + format_double(o.worst));
  };

  residual("tv_metric_axioms", 1e-12, tv_axioms);
  slack("pinsker", pinsker);
  slack("factor_two_expectation", factor_two);
  {
    // Point masses on disjoint supports with f = (+1, -1) make the bound tight.
    const std::vector<double> p{1.0, 0.0}, q{0.0, 1.0}, f{1.0, -1.0};
    const BoundCheck c = bounded_expectation_gap(f, p, q);
    emit("factor_two_equality_witness", std::abs(c.slack) <= 1e-12, "slack=" + format_double(c.slack));
  }
  residual("sequence_nll_chain_rule", 1e-12, chain_rule);
  residual("rl_loss_identity", kIdentityTolerance, loss_identity);
  slack("c1_nonnegative_at_exact_fit", c1_sign);
  residual("c1_zero_for_constant_reward", 1e-12, c1_constant_reward);
  slack("reward_ceiling", reward_ceiling);
  slack("gibbs_optimality", gibbs_optimality);
  return all;
}

}  // namespace coupling::harness
