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

// The two canonical post-training pipelines (SFT then RL, RL then SFT) and
// the quantities that tie their stages together.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coupling/divergence.hpp"
#include "coupling/policy.hpp"
#include "coupling/rl.hpp"
#include "coupling/sft.hpp"

namespace coupling {

enum class PipelineKind { kSftThenRl, kRlThenSft };
std::string_view to_string(PipelineKind kind);

struct SftStage {
  enum class Mode { kExact, kGradient };
  Mode mode = Mode::kExact;
  double lr = 10.0;
  std::size_t steps = 300;
  double tol = 0.0;
};

struct RlStage {
  enum class Mode { kGibbs, kGrpo };
  Mode mode = Mode::kGibbs;
  std::size_t group_size = 8;
  double lr = 5.0;
  std::size_t steps = 300;
};

/// Two-sided bound a <= E_q[KL(after || before)] <= A on the second stage.
struct KlBand {
  double a = 1e-3;
  double A = 10.0;
};

struct PipelineOptions {
  double beta = 1.0;
  SftStage sft;
  RlStage rl;
  KlBand band;
  // Starting policy for whichever stage runs first; uniform when absent.
  std::optional<ConditionalPolicy> base;
  std::size_t lambda_samples = 64;
  std::uint64_t seed = 0;
};

enum class Phase { kBase, kSft, kRl };
std::string_view to_string(Phase phase);

/// Called with every checkpoint a pipeline produces, in order. `step` counts
/// from 0 within a phase.
using PipelineObserver =
    std::function<void(Phase phase, std::size_t step, const ConditionalPolicy& policy)>;

struct C1Decomposition {
  double c1 = 0.0;
  // log Z_beta(x) - E_{p_data(.|x)}[r]/beta, one entry per prompt.
  std::vector<double> per_prompt;
};

/// C1(beta) = E_{x~q}[log Z_beta(x) - (1/beta) E_{y~p_data(.|x)} r(x,y)] with
/// Z_beta taken under p_sft. Nonnegative per prompt when p_sft = p_data.
C1Decomposition c1_decomposition(const ConditionalPolicy& p_sft, const RewardTable& r,
                                 double beta, const PromptDist& q,
                                 const ConditionalPolicy& p_data);

/// J(p2) - J(p1) <= r_max sqrt(2 E_q[KL(p2 || p1)]). A support violation
/// gives an infinite rhs (the check holds trivially) and sets
/// `support_violation`.
struct RewardCeilingCheck {
  BoundCheck check;
  bool support_violation = false;
};
RewardCeilingCheck reward_ceiling_check(const ConditionalPolicy& p1, const ConditionalPolicy& p2,
                             const RewardTable& r, const PromptDist& q);

/// E_{x~q}[KL(p2(.|x) || p1(.|x))]. Throws SupportViolation.
double kl_band_measure(const ConditionalPolicy& p2, const ConditionalPolicy& p1,
                       const PromptDist& q);

struct LambdaEstimate {
  // min over samples of (J(p*) - J(pi)) / KL(pi || p*), each ratio clamped
  // at 0 when J(pi) >= J(p*).
  double lambda_hat = 0.0;
  // a * lambda_hat when every sampled ratio is positive, else 0.
  double c2_hat = 0.0;
  double ratio_min = 0.0;
  double ratio_median = 0.0;
  double ratio_max = 0.0;
  std::size_t accepted = 0;
  bool all_positive = false;
  std::vector<double> ratios;
};

/// Empirical KL-growth coefficient around p_star. Candidates are random
/// exponential tilts p_star * exp(t g) / Z with g ~ N(0, 1) per entry and
/// the scale t solved so that E_q KL(pi || p_star) = u B, u ~ U(0, 1].
/// Throws NoValidSamples when no candidate has 0 < KL <= B.
LambdaEstimate lambda_estimate(const ConditionalPolicy& p_star, const RewardTable& r,
                               const PromptDist& q, double budget, std::size_t n_samples,
                               std::uint64_t rng_seed, double band_a);

struct NamedCheck {
  std::string name;
  BoundCheck check;
  // Enforced checks decide the pass/fail verdict; the rest are recorded.
  bool enforced = true;
};

struct PipelineReport {
  PipelineKind kind = PipelineKind::kSftThenRl;
  double beta = 0.0;
  // SFT loss (dataset mean, nats) of the stage-1 and stage-2 checkpoints.
  double epsilon_sft = 0.0;
  double sft_loss_after = 0.0;
  std::uint64_t floored_count = 0;
  // The RL transition's loss increase predicted from its input policy:
  // loss(out) - loss(in) = c1_beta exactly when the RL stage is the closed form.
  double c1_beta = 0.0;
  std::vector<double> jensen_gap_per_prompt;
  double identity_residual = 0.0;
  double reward_before = 0.0;
  double reward_after = 0.0;
  double kl_budget_b = 0.0;
  KlBand kl_band;
  bool band_holds = false;
  double ceiling_lhs = 0.0;
  double ceiling_rhs = 0.0;
  bool ceiling_support_violation = false;
  std::optional<LambdaEstimate> lambda;
  double lambda_hat = 0.0;
  double c2_hat = 0.0;
  bool kl_growth_holds = false;
  bool reward_dropped = false;
  std::vector<NamedCheck> checks;

  bool all_checks_hold() const;
  std::vector<std::string> failing_checks() const;
};

inline constexpr double kIdentityTolerance = 1e-10;
inline constexpr double kC1Tolerance = 1e-10;

/// Stage 1 fits the SFT data (exactly, or by gradient descent from the base);
/// stage 2 is RL with the stage-1 policy as reference.
PipelineReport run_sft_then_rl(const PromptDist& q, const SftDataset& d_sft,
                               const RewardTable& r, const PipelineOptions& options,
                               const PipelineObserver& observer = {});

/// Stage 1 is RL from the base policy; stage 2 is SFT (exact fit, or
/// gradient descent starting from the stage-1 policy).
PipelineReport run_rl_then_sft(const PromptDist& q, const SftDataset& d_sft,
                               const RewardTable& r, const PipelineOptions& options,
                               const PipelineObserver& observer = {});

}  // namespace coupling
