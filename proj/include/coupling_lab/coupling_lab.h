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

/*
 * C interface to the coupling lab. Objects are opaque handles created from
 * JSON and released with the matching *_free call. Every function returns a
 * cl_status; on failure cl_last_error() describes the problem (per thread).
 * Strings returned through char** are owned by the caller and released with
 * cl_string_free.
 */
#ifndef COUPLING_LAB_COUPLING_LAB_H_
#define COUPLING_LAB_COUPLING_LAB_H_

#include <stddef.h>
#include <stdint.h>

#if defined(COUPLING_LAB_BUILDING)
#define CL_API __attribute__((visibility("default")))
#else
#define CL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cl_status {
  CL_OK = 0,
  CL_ERR_INVALID_ARGUMENT = 1,
  CL_ERR_DIMENSION_MISMATCH = 2,
  CL_ERR_SUPPORT_VIOLATION = 3,
  CL_ERR_ZERO_PROBABILITY = 4,
  CL_ERR_MISSING_CONDITIONAL = 5,
  CL_ERR_MASS_LEAK = 6,
  CL_ERR_UNCOVERED_PROMPT = 7,
  CL_ERR_NO_VALID_SAMPLES = 8,
  CL_ERR_PARSE = 9,
  CL_ERR_IO = 10,
  CL_ERR_CHECK_FAILED = 11,
  CL_ERR_INTERNAL = 99
} cl_status;

typedef enum cl_format { CL_FORMAT_CSV = 0, CL_FORMAT_JSON = 1 } cl_format;

typedef struct cl_spaces cl_spaces;
typedef struct cl_policy cl_policy;
typedef struct cl_reward cl_reward;
typedef struct cl_dataset cl_dataset;

typedef struct cl_bound_check {
  double lhs;
  double rhs;
  double slack;
  int holds;
} cl_bound_check;

/* Message for the last failing call on this thread; "" if none. */
CL_API const char* cl_last_error(void);
CL_API const char* cl_status_name(cl_status status);
CL_API void cl_string_free(char* s);

/* Spaces: {"prompts": [...], "responses": ["tok <eos>", ...]}. */
CL_API cl_status cl_spaces_from_json(const char* json, cl_spaces** out);
CL_API cl_status cl_spaces_to_json(const cl_spaces* spaces, char** out_json);
CL_API cl_status cl_spaces_size(const cl_spaces* spaces, size_t* num_prompts,
                                size_t* num_responses);
CL_API void cl_spaces_free(cl_spaces* spaces);

/* Policies: spaces plus "rows". Rows are row-major, prompts by responses. */
CL_API cl_status cl_policy_from_json(const char* json, cl_policy** out);
CL_API cl_status cl_policy_to_json(const cl_policy* policy, char** out_json);
CL_API cl_status cl_policy_spaces(const cl_policy* policy, cl_spaces** out);
CL_API cl_status cl_policy_prob(const cl_policy* policy, size_t x, size_t y, double* out);
CL_API void cl_policy_free(cl_policy* policy);

/* Rewards and datasets are decoded against existing spaces. */
CL_API cl_status cl_reward_from_json(const cl_spaces* spaces, const char* json, cl_reward** out);
CL_API cl_status cl_reward_to_json(const cl_reward* reward, char** out_json);
CL_API void cl_reward_free(cl_reward* reward);

CL_API cl_status cl_dataset_from_jsonl(const cl_spaces* spaces, const char* jsonl,
                                       cl_dataset** out);
CL_API cl_status cl_dataset_to_jsonl(const cl_dataset* dataset, char** out_jsonl);
CL_API void cl_dataset_free(cl_dataset* dataset);

/* Divergences over plain arrays of length n. KL is +inf with
 * CL_ERR_SUPPORT_VIOLATION when p puts mass where q has none. */
CL_API cl_status cl_total_variation(const double* p, const double* q, size_t n, double* out);
CL_API cl_status cl_kl_divergence(const double* p, const double* q, size_t n, double* out);
CL_API cl_status cl_pinsker_check(const double* p, const double* q, size_t n, cl_bound_check* out);

/* Closed-form KL-regularized RL maximizer with `reference` as anchor. */
CL_API cl_status cl_gibbs_solution(const cl_policy* reference, const cl_reward* reward,
                                   double beta, cl_policy** out);
/* Per-prompt empirical conditional; uncovered prompts get a uniform row. */
CL_API cl_status cl_exact_sft_fit(const cl_dataset* dataset, cl_policy** out);
/* Mean per-pair negative log-likelihood of the dataset, in nats. */
CL_API cl_status cl_sft_loss(const cl_policy* policy, const cl_dataset* dataset, double* out);
/* Loss increase of the RL step from `policy`, weighted by the dataset's
 * prompt marginal. */
CL_API cl_status cl_c1(const cl_policy* policy, const cl_reward* reward, double beta,
                       const cl_dataset* dataset, double* out);
/* J(p2) - J(p1) <= r_max sqrt(2 E_q KL(p2 || p1)) under uniform prompts. */
CL_API cl_status cl_reward_ceiling_check(const cl_policy* p1, const cl_policy* p2,
                                         const cl_reward* reward, cl_bound_check* out);

/* Harness. Configs are ExperimentConfig JSON; NULL or "" means defaults.
 * `seed` overrides the config's seed list when seed_override is nonzero.
 * A NULL out_dir falls back to the config's output_dir. */
CL_API cl_status cl_config_default_json(char** out_json);
CL_API cl_status cl_generate_task(const char* config_json, uint64_t seed, const char* out_dir,
                                  cl_format format);
/* CL_ERR_CHECK_FAILED when an enforced bound check failed; outputs are
 * still written and *out_failing lists the failures one per line. */
CL_API cl_status cl_run_experiment(const char* config_json, int seed_override, uint64_t seed,
                                   const char* out_dir, char** out_manifest_sha256,
                                   char** out_failing);
CL_API cl_status cl_run_sweep(const char* config_json, int seed_override, uint64_t seed,
                              const char* out_dir, char** out_manifest_sha256,
                              char** out_failing);
/* Runs the invariant suite; *out_text holds one PASS/FAIL line per check. */
CL_API cl_status cl_run_checks(uint64_t seed, char** out_text);
CL_API cl_status cl_aggregate_reports(const char* dir, cl_format format, char** out_text);

#ifdef __cplusplus
}
#endif

#endif /* COUPLING_LAB_COUPLING_LAB_H_ */
