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
#include <filesystem>
#include <string>
#include <vector>

#include "coupling/coupling.hpp"
#include "coupling/harness/config.hpp"
#include "coupling/harness/eval.hpp"
#include "coupling/harness/synthetic.hpp"
#include "coupling/serialize.hpp"

namespace coupling::harness {

struct CurvePoint {
  std::size_t step = 0;
  double sft_test_loss = 0.0;
  double mean_at_1 = 0.0;
  double accuracy = 0.0;
};

struct SeedRun {
  std::uint64_t seed = 0;
  PipelineReport report;
  // One point for the base policy (step 0), then one per training step of
  // each stage, numbered globally.
  std::vector<CurvePoint> curve;
  // Global step of the last stage-1 point.
  std::size_t stage1_end_step = 0;
  EvalResult final_eval;
  std::string inputs_hash;
};

/// Builds the task for `seed`, runs the configured pipeline and evaluates
/// every checkpoint. Pure; touches no files.
SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed);

/// Git-style hash of the serialized task (spaces, dataset, reward).
std::string task_inputs_hash(const Task& task);

/// The config as echoed into outputs. output_dir and sweep.workers are
/// dropped: where and how wide a run executes does not change its bytes.
Json config_echo(const ExperimentConfig& cfg);

std::string curve_to_csv(const std::vector<CurvePoint>& curve);
Json seed_report_json(const ExperimentConfig& cfg, const SeedRun& run);

struct RunOutcome {
  std::string manifest_sha256;
  bool all_checks_hold = true;
  // "seed=<s>: <check name>" for every enforced check that failed.
  std::vector<std::string> failing;
};

/// Writes <out>/seed_<s>/{curve.csv,report.json} for every seed and
/// <out>/MANIFEST.json.
RunOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Grid over sweep.betas x sweep.noise_rates x seeds. Cells run
/// concurrently, each in <out>/cells/<cell>/; after all finish, sweep.csv
/// and MANIFEST.json are written in grid order.
RunOutcome run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

enum class ReportFormat { kCsv, kJson };

std::vector<std::string> report_row_header();
/// One row per report: instance_id, beta, rho, seed, then scalar fields.
std::vector<std::string> report_row(const Json& report);
/// Collects every report.json below `dir` (sorted by path) into one table.
std::string aggregate_reports(const std::filesystem::path& dir, ReportFormat format);

/// Writes spaces.json, reward.json and dataset.jsonl (or dataset.csv).
void write_task_files(const Task& task, const std::filesystem::path& out_dir, ReportFormat format);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace coupling::harness
