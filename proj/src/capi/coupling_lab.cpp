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

#include "coupling_lab/coupling_lab.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <span>
#include <sstream>
#include <string>

#include "coupling/coupling.hpp"
#include "coupling/divergence.hpp"
#include "coupling/error.hpp"
#include "coupling/harness/checks.hpp"
#include "coupling/harness/config.hpp"
#include "coupling/harness/experiment.hpp"
#include "coupling/harness/synthetic.hpp"
#include "coupling/serialize.hpp"

struct cl_spaces {
  coupling::SpacesPtr value;
};
struct cl_policy {
  coupling::ConditionalPolicy value;
};
struct cl_reward {
  coupling::RewardTable value;
};
struct cl_dataset {
  coupling::SftDataset value;
};

namespace {

using coupling::ErrorCode;
namespace h = coupling::harness;

thread_local std::string g_last_error;

cl_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return CL_ERR_INVALID_ARGUMENT;
    case ErrorCode::kDimensionMismatch: return CL_ERR_DIMENSION_MISMATCH;
    case ErrorCode::kSupportViolation: return CL_ERR_SUPPORT_VIOLATION;
    case ErrorCode::kZeroProbability: return CL_ERR_ZERO_PROBABILITY;
    case ErrorCode::kMissingConditional: return CL_ERR_MISSING_CONDITIONAL;
    case ErrorCode::kMassLeak: return CL_ERR_MASS_LEAK;
    case ErrorCode::kUncoveredPrompt: return CL_ERR_UNCOVERED_PROMPT;
    case ErrorCode::kNoValidSamples: return CL_ERR_NO_VALID_SAMPLES;
    case ErrorCode::kParse: return CL_ERR_PARSE;
    case ErrorCode::kIo: return CL_ERR_IO;
    case ErrorCode::kCheckFailed: return CL_ERR_CHECK_FAILED;
  }
  return CL_ERR_INTERNAL;
}

cl_status set_error(cl_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs `body`, translating exceptions into status codes.
template <typename Body>
cl_status guarded(Body&& body) {
  g_last_error.clear();
  try {
    return body();
  } catch (const coupling::Error& e) {
    return set_error(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(CL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(CL_ERR_INTERNAL, e.what());
  }
}

cl_status require(bool ok, const char* what) {
  return ok ? CL_OK : set_error(CL_ERR_INVALID_ARGUMENT, std::string(what) + " is null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

std::span<const double> view(const double* p, std::size_t n) { return {p, n}; }

void copy_check(const coupling::BoundCheck& c, cl_bound_check* out) {
  *out = {c.lhs, c.rhs, c.slack, c.holds ? 1 : 0};
}

h::ExperimentConfig load_config(const char* json, int seed_override, std::uint64_t seed) {
  h::ExperimentConfig cfg;
  if (json && *json) cfg = h::config_from_json(coupling::parse_json(json));
  if (seed_override) cfg.seeds = {seed};
  h::validate(cfg);
  return cfg;
}

h::ReportFormat to_format(cl_format format) {
  return format == CL_FORMAT_CSV ? h::ReportFormat::kCsv : h::ReportFormat::kJson;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

cl_status finish_run(const h::RunOutcome& outcome, char** out_sha, char** out_failing) {
  if (out_sha) *out_sha = dup_string(outcome.manifest_sha256);
  if (out_failing) *out_failing = dup_string(join_lines(outcome.failing));
  if (outcome.all_checks_hold) return CL_OK;
  return set_error(CL_ERR_CHECK_FAILED, "failing checks: " + join_lines(outcome.failing));
}

}  // namespace

extern "C" {

const char* cl_last_error(void) { return g_last_error.c_str(); }

const char* cl_status_name(cl_status status) {
  switch (status) {
    case CL_OK: return "ok";
    case CL_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case CL_ERR_DIMENSION_MISMATCH: return "dimension_mismatch";
    case CL_ERR_SUPPORT_VIOLATION: return "support_violation";
    case CL_ERR_ZERO_PROBABILITY: return "zero_probability";
    case CL_ERR_MISSING_CONDITIONAL: return "missing_conditional";
    case CL_ERR_MASS_LEAK: return "mass_leak";
    case CL_ERR_UNCOVERED_PROMPT: return "uncovered_prompt";
    case CL_ERR_NO_VALID_SAMPLES: return "no_valid_samples";
    case CL_ERR_PARSE: return "parse";
    case CL_ERR_IO: return "io";
    case CL_ERR_CHECK_FAILED: return "check_failed";
    case CL_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void cl_string_free(char* s) { std::free(s); }

cl_status cl_spaces_from_json(const char* json, cl_spaces** out) {
  return guarded([&] {
    if (cl_status s = require(json && out, "argument"); s != CL_OK) return s;
    *out = new cl_spaces{coupling::spaces_from_json(coupling::parse_json(json))};
    return CL_OK;
  });
}

cl_status cl_spaces_to_json(const cl_spaces* spaces, char** out_json) {
  return guarded([&] {
    if (cl_status s = require(spaces && out_json, "argument"); s != CL_OK) return s;
    *out_json = dup_string(coupling::spaces_to_json(*spaces->value).dump());
    return CL_OK;
  });
}

cl_status cl_spaces_size(const cl_spaces* spaces, size_t* num_prompts, size_t* num_responses) {
  return guarded([&] {
    if (cl_status s = require(spaces, "spaces"); s != CL_OK) return s;
    if (num_prompts) *num_prompts = spaces->value->num_prompts();
    if (num_responses) *num_responses = spaces->value->num_responses();
    return CL_OK;
  });
}

void cl_spaces_free(cl_spaces* spaces) { delete spaces; }

cl_status cl_policy_from_json(const char* json, cl_policy** out) {
  return guarded([&] {
    if (cl_status s = require(json && out, "argument"); s != CL_OK) return s;
    *out = new cl_policy{coupling::policy_from_json(coupling::parse_json(json))};
    return CL_OK;
  });
}

cl_status cl_policy_to_json(const cl_policy* policy, char** out_json) {
  return guarded([&] {
    if (cl_status s = require(policy && out_json, "argument"); s != CL_OK) return s;
    *out_json = dup_string(coupling::policy_to_json(policy->value).dump());
    return CL_OK;
  });
}

cl_status cl_policy_spaces(const cl_policy* policy, cl_spaces** out) {
  return guarded([&] {
    if (cl_status s = require(policy && out, "argument"); s != CL_OK) return s;
    *out = new cl_spaces{policy->value.spaces_ptr()};
    return CL_OK;
  });
}

cl_status cl_policy_prob(const cl_policy* policy, size_t x, size_t y, double* out) {
  return guarded([&] {
    if (cl_status s = require(policy && out, "argument"); s != CL_OK) return s;
    if (x >= policy->value.num_prompts() || y >= policy->value.num_responses()) {
      return set_error(CL_ERR_INVALID_ARGUMENT, "index out of range");
    }
    *out = policy->value.prob(x, y);
    return CL_OK;
  });
}

void cl_policy_free(cl_policy* policy) { delete policy; }

cl_status cl_reward_from_json(const cl_spaces* spaces, const char* json, cl_reward** out) {
  return guarded([&] {
    if (cl_status s = require(spaces && json && out, "argument"); s != CL_OK) return s;
    *out = new cl_reward{coupling::reward_from_json(coupling::parse_json(json), spaces->value)};
    return CL_OK;
  });
}

cl_status cl_reward_to_json(const cl_reward* reward, char** out_json) {
  return guarded([&] {
    if (cl_status s = require(reward && out_json, "argument"); s != CL_OK) return s;
    *out_json = dup_string(coupling::reward_to_json(reward->value).dump());
    return CL_OK;
  });
}

void cl_reward_free(cl_reward* reward) { delete reward; }

cl_status cl_dataset_from_jsonl(const cl_spaces* spaces, const char* jsonl, cl_dataset** out) {
  return guarded([&] {
    if (cl_status s = require(spaces && jsonl && out, "argument"); s != CL_OK) return s;
    *out = new cl_dataset{coupling::dataset_from_jsonl(jsonl, spaces->value)};
    return CL_OK;
  });
}

cl_status cl_dataset_to_jsonl(const cl_dataset* dataset, char** out_jsonl) {
  return guarded([&] {
    if (cl_status s = require(dataset && out_jsonl, "argument"); s != CL_OK) return s;
    *out_jsonl = dup_string(coupling::dataset_to_jsonl(dataset->value));
    return CL_OK;
  });
}

void cl_dataset_free(cl_dataset* dataset) { delete dataset; }

cl_status cl_total_variation(const double* p, const double* q, size_t n, double* out) {
  return guarded([&] {
    if (cl_status s = require(p && q && out, "argument"); s != CL_OK) return s;
    *out = coupling::total_variation(view(p, n), view(q, n));
    return CL_OK;
  });
}

cl_status cl_kl_divergence(const double* p, const double* q, size_t n, double* out) {
  return guarded([&] {
    if (cl_status s = require(p && q && out, "argument"); s != CL_OK) return s;
    const coupling::KlValue kl = coupling::kl_divergence(view(p, n), view(q, n));
    *out = kl.nats;
    if (kl.support_violation) {
      return set_error(CL_ERR_SUPPORT_VIOLATION, "p has mass outside the support of q");
    }
    return CL_OK;
  });
}

cl_status cl_pinsker_check(const double* p, const double* q, size_t n, cl_bound_check* out) {
  return guarded([&] {
    if (cl_status s = require(p && q && out, "argument"); s != CL_OK) return s;
    copy_check(coupling::pinsker_check(view(p, n), view(q, n)), out);
    return CL_OK;
  });
}

cl_status cl_gibbs_solution(const cl_policy* reference, const cl_reward* reward, double beta,
                            cl_policy** out) {
  return guarded([&] {
    if (cl_status s = require(reference && reward && out, "argument"); s != CL_OK) return s;
    const coupling::RlConfig cfg(beta, reference->value);
    *out = new cl_policy{coupling::gibbs_solution(cfg, reward->value)};
    return CL_OK;
  });
}

cl_status cl_exact_sft_fit(const cl_dataset* dataset, cl_policy** out) {
  return guarded([&] {
    if (cl_status s = require(dataset && out, "argument"); s != CL_OK) return s;
    *out = new cl_policy{coupling::exact_sft_fit(dataset->value)};
    return CL_OK;
  });
}

cl_status cl_sft_loss(const cl_policy* policy, const cl_dataset* dataset, double* out) {
  return guarded([&] {
    if (cl_status s = require(policy && dataset && out, "argument"); s != CL_OK) return s;
    *out = coupling::sft_loss(policy->value, dataset->value, coupling::LossMode::kMean).nats;
    return CL_OK;
  });
}

cl_status cl_c1(const cl_policy* policy, const cl_reward* reward, double beta,
                const cl_dataset* dataset, double* out) {
  return guarded([&] {
    if (cl_status s = require(policy && reward && dataset && out, "argument"); s != CL_OK) return s;
    const auto& d = dataset->value;
    *out = coupling::c1_decomposition(policy->value, reward->value, beta, d.prompt_marginal(),
                                      coupling::exact_sft_fit(d))
               .c1;
    return CL_OK;
  });
}

cl_status cl_reward_ceiling_check(const cl_policy* p1, const cl_policy* p2,
                                  const cl_reward* reward, cl_bound_check* out) {
  return guarded([&] {
    if (cl_status s = require(p1 && p2 && reward && out, "argument"); s != CL_OK) return s;
    const auto q = coupling::PromptDist::uniform(p1->value.spaces_ptr());
    const coupling::RewardCeilingCheck c = coupling::reward_ceiling_check(p1->value, p2->value, reward->value, q);
    copy_check(c.check, out);
    return CL_OK;
  });
}

cl_status cl_config_default_json(char** out_json) {
  return guarded([&] {
    if (cl_status s = require(out_json, "out_json"); s != CL_OK) return s;
    *out_json = dup_string(h::config_to_json(h::ExperimentConfig{}).dump(2) + "\n");
    return CL_OK;
  });
}

cl_status cl_generate_task(const char* config_json, uint64_t seed, const char* out_dir,
                           cl_format format) {
  return guarded([&] {
    const h::ExperimentConfig cfg = load_config(config_json, 1, seed);
    h::write_task_files(h::generate_task(cfg, seed), out_dir ? out_dir : cfg.output_dir,
                        to_format(format));
    return CL_OK;
  });
}

cl_status cl_run_experiment(const char* config_json, int seed_override, uint64_t seed,
                            const char* out_dir, char** out_manifest_sha256, char** out_failing) {
  return guarded([&] {
    const h::ExperimentConfig cfg = load_config(config_json, seed_override, seed);
    return finish_run(h::run_experiment(cfg, out_dir ? out_dir : cfg.output_dir), out_manifest_sha256, out_failing);
  });
}

cl_status cl_run_sweep(const char* config_json, int seed_override, uint64_t seed,
                       const char* out_dir, char** out_manifest_sha256, char** out_failing) {
  return guarded([&] {
    const h::ExperimentConfig cfg = load_config(config_json, seed_override, seed);
    return finish_run(h::run_sweep(cfg, out_dir ? out_dir : cfg.output_dir), out_manifest_sha256, out_failing);
  });
}

cl_status cl_run_checks(uint64_t seed, char** out_text) {
  return guarded([&] {
    std::ostringstream text;
    const bool ok = h::run_check_suite(seed, text);
    if (out_text) *out_text = dup_string(text.str());
    return ok ? CL_OK : set_error(CL_ERR_CHECK_FAILED, "invariant suite reported failures");
  });
}

cl_status cl_aggregate_reports(const char* dir, cl_format format, char** out_text) {
  return guarded([&] {
    if (cl_status s = require(dir && out_text, "argument"); s != CL_OK) return s;
    *out_text = dup_string(h::aggregate_reports(dir, to_format(format)));
    return CL_OK;
  });
}

}  // extern "C"
