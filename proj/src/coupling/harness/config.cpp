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

#include "coupling/harness/config.hpp"

#include <cmath>
#include <set>

#include "coupling/error.hpp"

namespace coupling::harness {
namespace {

void check(bool ok, const std::string& key, const std::string& what) {
  if (!ok) fail(ErrorCode::kInvalidArgument, "config." + key + ": " + what);
}

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

void reject_unknown(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::kParse, where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) fail(ErrorCode::kParse, where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
  check(cfg.spaces.num_prompts >= 1 && cfg.spaces.num_prompts <= kMaxPrompts,
        "spaces.num_prompts", "must be in [1, 64]");
  check(cfg.spaces.pairs_per_prompt >= 1, "spaces.pairs_per_prompt", "must be >= 1");
  check(cfg.spaces.num_responses >= 2 && cfg.spaces.num_responses <= kMaxResponses,
        "spaces.num_responses", "must be in [2, 256]");
  check(cfg.spaces.l_max >= 1, "spaces.l_max", "must be >= 1");
  check(cfg.noise_rate >= 0.0 && cfg.noise_rate <= 1.0, "noise_rate", "must be in [0, 1]");
  check(positive_finite(cfg.beta), "beta", "must be finite and > 0");
  check(positive_finite(cfg.sft.lr), "sft.lr", "must be finite and > 0");
  check(cfg.sft.steps >= 1, "sft.steps", "must be >= 1");
  check(std::isfinite(cfg.sft.tol) && cfg.sft.tol >= 0.0, "sft.tol", "must be finite and >= 0");
  check(cfg.rl.group_size >= 2, "rl.group_size", "must be >= 2");
  check(positive_finite(cfg.rl.lr), "rl.lr", "must be finite and > 0");
  check(cfg.rl.steps >= 1, "rl.steps", "must be >= 1");
  check(positive_finite(cfg.eval.temperature), "eval.temperature", "must be finite and > 0");
  check(cfg.eval.top_p > 0.0 && cfg.eval.top_p <= 1.0, "eval.top_p", "must be in (0, 1]");
  check(cfg.eval.samples >= 1, "eval.samples", "must be >= 1");
  check(cfg.kl_band.a > 0.0 && cfg.kl_band.a <= cfg.kl_band.A && std::isfinite(cfg.kl_band.A),
        "kl_band", "must satisfy 0 < a <= A < inf");
  check(cfg.lambda_samples >= 1, "lambda_samples", "must be >= 1");
  check(!cfg.seeds.empty(), "seeds", "must list at least one seed");
  for (double b : cfg.sweep.betas) check(positive_finite(b), "sweep.betas", "entries must be > 0");
  for (double r : cfg.sweep.noise_rates) {
    check(r >= 0.0 && r <= 1.0, "sweep.noise_rates", "entries must be in [0, 1]");
  }
}

Json config_to_json(const ExperimentConfig& cfg) {
  return Json{
      {"pipeline", std::string(to_string(cfg.pipeline))},
      {"task", cfg.task == TaskKind::kSyntheticAcceptability ? "synthetic_acceptability"
                                                             : "random_tables"},
      {"spaces",
       {{"num_prompts", cfg.spaces.num_prompts},
        {"pairs_per_prompt", cfg.spaces.pairs_per_prompt},
        {"verbose_responses", cfg.spaces.verbose_responses},
        {"num_responses", cfg.spaces.num_responses},
        {"l_max", cfg.spaces.l_max}}},
      {"noise_rate", cfg.noise_rate},
      {"beta", cfg.beta},
      {"sft",
       {{"mode", cfg.sft.mode == SftStage::Mode::kExact ? "exact" : "gradient"},
        {"lr", cfg.sft.lr},
        {"steps", cfg.sft.steps},
        {"tol", cfg.sft.tol}}},
      {"rl",
       {{"mode", cfg.rl.mode == RlStage::Mode::kGibbs ? "gibbs" : "grpo"},
        {"group_size", cfg.rl.group_size},
        {"lr", cfg.rl.lr},
        {"steps", cfg.rl.steps}}},
      {"eval",
       {{"temperature", cfg.eval.temperature},
        {"top_p", cfg.eval.top_p},
        {"robust", cfg.eval.robust},
        {"top_p_after_temperature", cfg.eval.top_p_after_temperature},
        {"samples", cfg.eval.samples}}},
      {"kl_band", {cfg.kl_band.a, cfg.kl_band.A}},
      {"lambda_samples", cfg.lambda_samples},
      {"seeds", cfg.seeds},
      {"output_dir", cfg.output_dir},
      {"sweep",
       {{"betas", cfg.sweep.betas},
        {"noise_rates", cfg.sweep.noise_rates},
        {"workers", cfg.sweep.workers}}},
  };
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig cfg;
  try {
    reject_unknown(j,
                   {"pipeline", "task", "spaces", "noise_rate", "beta", "sft", "rl", "eval",
                    "kl_band", "lambda_samples", "seeds", "output_dir", "sweep"},
                   "config");
    if (j.contains("pipeline")) {
      const auto v = j.at("pipeline").get<std::string>();
      if (v == "sft_then_rl") cfg.pipeline = PipelineKind::kSftThenRl;
      else if (v == "rl_then_sft") cfg.pipeline = PipelineKind::kRlThenSft;
      else fail(ErrorCode::kParse, "config.pipeline: unknown value '" + v + "'");
    }
    if (j.contains("task")) {
      const auto v = j.at("task").get<std::string>();
      if (v == "synthetic_acceptability") cfg.task = TaskKind::kSyntheticAcceptability;
      else if (v == "random_tables") cfg.task = TaskKind::kRandomTables;
      else fail(ErrorCode::kParse, "config.task: unknown value '" + v + "'");
    }
    if (j.contains("spaces")) {
      const Json& s = j.at("spaces");
      reject_unknown(s, {"num_prompts", "pairs_per_prompt", "verbose_responses", "num_responses", "l_max"},
                     "config.spaces");
      read(s, "num_prompts", cfg.spaces.num_prompts);
      read(s, "pairs_per_prompt", cfg.spaces.pairs_per_prompt);
      read(s, "verbose_responses", cfg.spaces.verbose_responses);
      read(s, "num_responses", cfg.spaces.num_responses);
      read(s, "l_max", cfg.spaces.l_max);
    }
    read(j, "noise_rate", cfg.noise_rate);
    read(j, "beta", cfg.beta);
    if (j.contains("sft")) {
      const Json& s = j.at("sft");
      reject_unknown(s, {"mode", "lr", "steps", "tol"}, "config.sft");
      if (s.contains("mode")) {
        const auto v = s.at("mode").get<std::string>();
        if (v == "exact") cfg.sft.mode = SftStage::Mode::kExact;
        else if (v == "gradient") cfg.sft.mode = SftStage::Mode::kGradient;
        else fail(ErrorCode::kParse, "config.sft.mode: unknown value '" + v + "'");
      }
      read(s, "lr", cfg.sft.lr);
      read(s, "steps", cfg.sft.steps);
      read(s, "tol", cfg.sft.tol);
    }
    if (j.contains("rl")) {
      const Json& s = j.at("rl");
      reject_unknown(s, {"mode", "group_size", "lr", "steps"}, "config.rl");
      if (s.contains("mode")) {
        const auto v = s.at("mode").get<std::string>();
        if (v == "gibbs") cfg.rl.mode = RlStage::Mode::kGibbs;
        else if (v == "grpo") cfg.rl.mode = RlStage::Mode::kGrpo;
        else fail(ErrorCode::kParse, "config.rl.mode: unknown value '" + v + "'");
      }
      read(s, "group_size", cfg.rl.group_size);
      read(s, "lr", cfg.rl.lr);
      read(s, "steps", cfg.rl.steps);
    }
    if (j.contains("eval")) {
      const Json& s = j.at("eval");
      reject_unknown(s, {"temperature", "top_p", "robust", "top_p_after_temperature", "samples"},
                     "config.eval");
      read(s, "temperature", cfg.eval.temperature);
      read(s, "top_p", cfg.eval.top_p);
      read(s, "robust", cfg.eval.robust);
      read(s, "top_p_after_temperature", cfg.eval.top_p_after_temperature);
      read(s, "samples", cfg.eval.samples);
    }
    if (j.contains("kl_band")) {
      const auto band = j.at("kl_band").get<std::vector<double>>();
      if (band.size() != 2) fail(ErrorCode::kParse, "config.kl_band: expected [a, A]");
      cfg.kl_band = {band[0], band[1]};
    }
    read(j, "lambda_samples", cfg.lambda_samples);
    read(j, "seeds", cfg.seeds);
    read(j, "output_dir", cfg.output_dir);
    if (j.contains("sweep")) {
      const Json& s = j.at("sweep");
      reject_unknown(s, {"betas", "noise_rates", "workers"}, "config.sweep");
      read(s, "betas", cfg.sweep.betas);
      read(s, "noise_rates", cfg.sweep.noise_rates);
      read(s, "workers", cfg.sweep.workers);
    }
  } catch (const Json::exception& e) {
    fail(ErrorCode::kParse, std::string("config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

PipelineOptions pipeline_options(const ExperimentConfig& cfg, std::uint64_t seed) {
  PipelineOptions options;
  options.beta = cfg.beta;
  options.sft = cfg.sft;
  options.rl = cfg.rl;
  options.band = cfg.kl_band;
  options.lambda_samples = cfg.lambda_samples;
  options.seed = seed;
  return options;
}

}  // namespace coupling::harness
