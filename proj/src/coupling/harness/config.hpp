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
#include <string>
#include <vector>

#include "coupling/coupling.hpp"
#include "coupling/serialize.hpp"

namespace coupling::harness {

enum class TaskKind { kSyntheticAcceptability, kRandomTables };

struct SpacesConfig {
  std::size_t num_prompts = 16;
  std::size_t pairs_per_prompt = 20;
  // Synthetic task: add free-form responses that only the robust decoder
  // can score.
  bool verbose_responses = false;
  // Random tables: atomic responses per prompt.
  std::size_t num_responses = 8;
  std::size_t l_max = 3;
};

struct EvalConfig {
  double temperature = 0.6;
  double top_p = 0.95;
  bool robust = true;
  // Apply top-p after the temperature transform (the usual sampler order).
  bool top_p_after_temperature = true;
  // Number of (prompt, response) draws behind each mean@1 value.
  std::size_t samples = 4096;
};

struct SweepConfig {
  std::vector<double> betas;        // empty: use the experiment's beta
  std::vector<double> noise_rates;  // empty: use the experiment's noise_rate
  std::size_t workers = 0;          // 0: hardware concurrency
};

struct ExperimentConfig {
  PipelineKind pipeline = PipelineKind::kSftThenRl;
  TaskKind task = TaskKind::kSyntheticAcceptability;
  SpacesConfig spaces;
  double noise_rate = 0.3;
  double beta = 0.5;
  SftStage sft{SftStage::Mode::kGradient, 10.0, 300, 1e-12};
  RlStage rl{RlStage::Mode::kGibbs, 8, 5.0, 300};
  EvalConfig eval;
  KlBand kl_band;
  std::size_t lambda_samples = 64;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "out";
  SweepConfig sweep;
};

/// Validates every field; throws InvalidArgument naming the offending key.
void validate(const ExperimentConfig& cfg);

Json config_to_json(const ExperimentConfig& cfg);
/// Missing keys take their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const Json& j);

/// The pipeline options a config implies for one seed.
PipelineOptions pipeline_options(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace coupling::harness
