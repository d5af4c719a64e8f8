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

#include "coupling/harness/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "coupling/error.hpp"
#include "coupling/harness/digest.hpp"
#include "coupling/rng.hpp"

namespace coupling::harness {
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kEvalStream = 0xE7A1;

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

// Scalar columns copied from a report, in output order.
const std::vector<std::string>& scalar_fields() {
  static const std::vector<std::string> fields{
      "pipeline_kind", "epsilon_sft",   "sft_loss_after",  "floored_count",
      "c1_beta",       "identity_residual", "reward_before", "reward_after",
      "kl_budget_b",   "band_holds",    "ceiling_lhs",       "ceiling_rhs",
      "ceiling_support_violation", "lambda_hat", "c2_hat",   "kl_growth_holds",
      "reward_dropped", "all_checks_hold"};
  return fields;
}

const std::vector<std::string>& eval_fields() {
  static const std::vector<std::string> fields{"mean_at_1", "accuracy", "exact_mean",
                                               "parsed_accuracy", "parse_failures"};
  return fields;
}

std::string cell_text(const Json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string csv_line(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line.push_back(',');
    line += cells[i];
  }
  line.push_back('\n');
  return line;
}

Json eval_to_json(const EvalResult& e) {
  return {{"mean_at_1", e.mean_at_1},
          {"accuracy", e.accuracy},
          {"exact_mean", e.exact_mean},
          {"parsed_accuracy", e.parsed_accuracy},
          {"parse_failures", e.parse_failures},
          {"samples", e.samples}};
}

std::string cell_name(double beta, double rho, std::uint64_t seed) {
  return "beta=" + format_double(beta) + "_rho=" + format_double(rho) +
         "_seed=" + std::to_string(seed);
}

}  // namespace

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << content;
  if (!out.flush()) fail(ErrorCode::kIo, "write failed for " + path.string());
}

std::string task_inputs_hash(const Task& task) {
  return git_style_hash(spaces_to_json(*task.spaces).dump() + "\n" + dataset_to_jsonl(task.sft) +
                        reward_to_json(task.reward).dump() + "\n");
}

Json config_echo(const ExperimentConfig& cfg) {
  Json j = config_to_json(cfg);
  j.erase("output_dir");
  j["sweep"].erase("workers");
  return j;
}

SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  const Task task = generate_task(cfg, seed);
  const ScoreTable scores = score_task(task, cfg.eval);

  SeedRun run;
  run.seed = seed;
  run.inputs_hash = task_inputs_hash(task);

  std::optional<Phase> current, first_stage;
  std::size_t offset = 0, last = 0;
  auto observer = [&](Phase phase, std::size_t step, const ConditionalPolicy& policy) {
    if (phase != Phase::kBase) {
      if (!first_stage) first_stage = phase;
      if (current != phase) offset = last;
    }
    current = phase;
    const std::size_t global = phase == Phase::kBase ? 0 : offset + step;
    if (phase == first_stage) run.stage1_end_step = global;
    last = global;

    run.final_eval =
        eval_mean_at_1(policy, scores, task.q, cfg.eval, derive_seed(seed, kEvalStream, global));
    run.curve.push_back({global, sft_loss(policy, task.sft, LossMode::kMean).nats,
                         run.final_eval.mean_at_1, run.final_eval.accuracy});
  };

  const PipelineOptions options = pipeline_options(cfg, seed);
  run.report = cfg.pipeline == PipelineKind::kSftThenRl
                   ? run_sft_then_rl(task.q, task.sft, task.reward, options, observer)
                   : run_rl_then_sft(task.q, task.sft, task.reward, options, observer);
  return run;
}

std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "step,sft_test_loss,mean_at_1,accuracy\n";
  for (const CurvePoint& p : curve) {
    out += csv_line({std::to_string(p.step), format_double(p.sft_test_loss),
                     format_double(p.mean_at_1), format_double(p.accuracy)});
  }
  return out;
}

Json seed_report_json(const ExperimentConfig& cfg, const SeedRun& run) {
  Json j = report_to_json(run.report);
  j["config"] = config_echo(cfg);
  j["seed"] = run.seed;
  j["inputs_hash"] = run.inputs_hash;
  j["final_eval"] = eval_to_json(run.final_eval);
  j["stage1_end_step"] = run.stage1_end_step;
  return j;
}

RunOutcome run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  validate(cfg);
  const Json echo = config_echo(cfg);
  Json inputs = Json::object();
  Json outputs = Json::object();
  RunOutcome outcome;

  for (std::uint64_t seed : cfg.seeds) {
    const SeedRun run = run_seed(cfg, seed);
    const std::string dir = "seed_" + std::to_string(seed);
    const std::string curve = curve_to_csv(run.curve);
    const std::string report = dump(seed_report_json(cfg, run));
    write_text_file(out_dir / dir / "curve.csv", curve);
    write_text_file(out_dir / dir / "report.json", report);
    inputs[dir] = run.inputs_hash;
    outputs[dir + "/curve.csv"] = sha256_hex(curve);
    outputs[dir + "/report.json"] = sha256_hex(report);
    for (const std::string& name : run.report.failing_checks()) {
      outcome.failing.push_back("seed=" + std::to_string(seed) + ": " + name);
    }
  }

  const Json manifest{{"config", echo},
                      {"config_sha256", sha256_hex(echo.dump())},
                      {"inputs", inputs},
                      {"outputs", outputs},
                      {"all_checks_hold", outcome.failing.empty()}};
  const std::string text = dump(manifest);
  write_text_file(out_dir / "MANIFEST.json", text);
  outcome.manifest_sha256 = sha256_hex(text);
  outcome.all_checks_hold = outcome.failing.empty();
  return outcome;
}

RunOutcome run_sweep(const ExperimentConfig& cfg, const fs::path& out_dir) {
  validate(cfg);
  const std::vector<double> betas =
      cfg.sweep.betas.empty() ? std::vector<double>{cfg.beta} : cfg.sweep.betas;
  const std::vector<double> rhos =
      cfg.sweep.noise_rates.empty() ? std::vector<double>{cfg.noise_rate} : cfg.sweep.noise_rates;

  struct Cell {
    std::string name;
    ExperimentConfig cfg;
    RunOutcome outcome;
    std::exception_ptr error;
  };
  std::vector<Cell> cells;
  for (double beta : betas) {
    for (double rho : rhos) {
      for (std::uint64_t seed : cfg.seeds) {
        Cell cell;
        cell.name = cell_name(beta, rho, seed);
        cell.cfg = cfg;
        cell.cfg.beta = beta;
        cell.cfg.noise_rate = rho;
        cell.cfg.seeds = {seed};
        cell.cfg.sweep = SweepConfig{};
        cells.push_back(std::move(cell));
      }
    }
  }

  std::size_t workers = cfg.sweep.workers ? cfg.sweep.workers : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, cells.size());
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
          try {
            cells[i].outcome = run_experiment(cells[i].cfg, out_dir / "cells" / cells[i].name);
          } catch (...) {
            cells[i].error = std::current_exception();
          }
        }
      });
    }
  }  // join barrier
  for (const Cell& cell : cells) {
    if (cell.error) std::rethrow_exception(cell.error);
  }

  std::string csv = csv_line(report_row_header());
  RunOutcome outcome;
  Json listed = Json::object();
  for (const Cell& cell : cells) {
    const fs::path cell_dir = out_dir / "cells" / cell.name;
    const std::uint64_t seed = cell.cfg.seeds.front();
    csv += csv_line(report_row(
        parse_json(read_text_file(cell_dir / ("seed_" + std::to_string(seed)) / "report.json"))));
    listed[cell.name] = cell.outcome.manifest_sha256;
    for (const std::string& f : cell.outcome.failing) outcome.failing.push_back(cell.name + " " + f);
  }
  write_text_file(out_dir / "sweep.csv", csv);

  const Json echo = config_echo(cfg);
  const Json manifest{{"config", echo},
                      {"config_sha256", sha256_hex(echo.dump())},
                      {"cells", listed},
                      {"outputs", {{"sweep.csv", sha256_hex(csv)}}},
                      {"all_checks_hold", outcome.failing.empty()}};
  const std::string text = dump(manifest);
  write_text_file(out_dir / "MANIFEST.json", text);
  outcome.manifest_sha256 = sha256_hex(text);
  outcome.all_checks_hold = outcome.failing.empty();
  return outcome;
}

std::vector<std::string> report_row_header() {
  std::vector<std::string> header{"instance_id", "beta", "rho", "seed"};
  for (const auto& f : scalar_fields()) header.push_back(f);
  for (const auto& f : eval_fields()) header.push_back("final_" + f);
  return header;
}

std::vector<std::string> report_row(const Json& report) {
  auto field = [&](const Json& obj, const std::string& key) -> Json {
    return obj.is_object() && obj.contains(key) ? obj.at(key) : Json(nullptr);
  };
  const Json config = field(report, "config");
  // The instance is the generated task, identified by its input hash.
  std::string instance = cell_text(field(report, "inputs_hash")).substr(0, 16);
  std::vector<std::string> row{instance, cell_text(field(report, "beta")),
                               cell_text(field(config, "noise_rate")),
                               cell_text(field(report, "seed"))};
  for (const auto& f : scalar_fields()) row.push_back(cell_text(field(report, f)));
  const Json final_eval = field(report, "final_eval");
  for (const auto& f : eval_fields()) row.push_back(cell_text(field(final_eval, f)));
  return row;
}

std::string aggregate_reports(const fs::path& dir, ReportFormat format) {
  if (!fs::is_directory(dir)) fail(ErrorCode::kIo, "not a directory: " + dir.string());
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "report.json") {
      paths.push_back(entry.path());
    }
  }
  std::sort(paths.begin(), paths.end());

  const std::vector<std::string> header = report_row_header();
  if (format == ReportFormat::kCsv) {
    std::string csv = csv_line(header);
    for (const auto& p : paths) csv += csv_line(report_row(parse_json(read_text_file(p))));
    return csv;
  }
  Json rows = Json::array();
  for (const auto& p : paths) {
    const std::vector<std::string> row = report_row(parse_json(read_text_file(p)));
    Json obj = Json::object();
    for (std::size_t i = 0; i < header.size(); ++i) obj[header[i]] = row[i];
    obj["path"] = fs::relative(p, dir).generic_string();
    rows.push_back(std::move(obj));
  }
  return dump(rows);
}

void write_task_files(const Task& task, const fs::path& out_dir, ReportFormat format) {
  write_text_file(out_dir / "spaces.json", dump(spaces_to_json(*task.spaces)));
  write_text_file(out_dir / "reward.json", dump(reward_to_json(task.reward)));
  if (format == ReportFormat::kJson) {
    write_text_file(out_dir / "dataset.jsonl", dataset_to_jsonl(task.sft));
    return;
  }
  const ResponseSpace& space = task.spaces->responses();
  std::string csv = "prompt,response,count\n";
  for (const SftPair& pair : task.sft.pairs()) {
    csv += csv_line({task.spaces->prompt(pair.prompt), space.render(pair.response),
                     std::to_string(pair.count)});
  }
  write_text_file(out_dir / "dataset.csv", csv);
}

}  // namespace coupling::harness
