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

#include "coupling/harness/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coupling/error.hpp"
#include "coupling/rng.hpp"

namespace coupling::harness {
namespace {

std::vector<double> normalized(std::vector<double> v) {
  const double sum = std::accumulate(v.begin(), v.end(), 0.0);
  if (!(sum > 0.0)) fail(ErrorCode::kInvalidArgument, "transformed row has no mass");
  for (double& e : v) e /= sum;
  return v;
}

}  // namespace

std::optional<std::size_t> robust_decode(const Sequence& response, const VerifierRule& rule) {
  std::optional<std::size_t> found;
  std::size_t found_start = 0, found_length = 0;
  for (std::size_t start = 0; start < response.size(); ++start) {
    for (std::size_t c = 0; c < rule.class_labels.size(); ++c) {
      const Sequence& label = rule.class_labels[c];
      if (label.empty() || start + label.size() > response.size()) continue;
      if (!std::equal(label.begin(), label.end(), response.begin() + static_cast<std::ptrdiff_t>(start))) {
        continue;
      }
      // Later start wins; at the same start the longer label wins.
      if (!found || start > found_start || label.size() > found_length) {
        found = c;
        found_start = start;
        found_length = label.size();
      }
    }
  }
  return found;
}

std::vector<double> apply_temperature(std::span<const double> row, double temperature) {
  if (!(temperature > 0.0)) fail(ErrorCode::kInvalidArgument, "temperature must be > 0");
  if (temperature == 1.0) return std::vector<double>(row.begin(), row.end());
  // Work in log space relative to the max so small temperatures don't underflow.
  double peak = 0.0;
  for (double v : row) peak = std::max(peak, v);
  std::vector<double> out(row.size(), 0.0);
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (row[i] > 0.0) out[i] = std::exp((std::log(row[i]) - std::log(peak)) / temperature);
  }
  return normalized(std::move(out));
}

std::vector<double> apply_top_p(std::span<const double> row, double top_p) {
  if (!(top_p > 0.0) || top_p > 1.0) fail(ErrorCode::kInvalidArgument, "top_p must be in (0, 1]");
  if (top_p >= 1.0) return std::vector<double>(row.begin(), row.end());
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  std::vector<double> out(row.size(), 0.0);
  double mass = 0.0;
  for (std::size_t i : order) {
    if (row[i] <= 0.0) break;
    out[i] = row[i];
    mass += row[i];
    if (mass >= top_p) break;
  }
  return normalized(std::move(out));
}

std::vector<double> transform_row(std::span<const double> row, const EvalConfig& cfg) {
  if (cfg.top_p_after_temperature) {
    return apply_top_p(apply_temperature(row, cfg.temperature), cfg.top_p);
  }
  return apply_temperature(apply_top_p(row, cfg.top_p), cfg.temperature);
}

ScoreTable score_with_rule(const VerifierRule& rule, const Spaces& spaces, bool robust) {
  if (rule.label_map.size() != spaces.num_prompts()) {
    fail(ErrorCode::kInvalidArgument, "verifier label map must cover every prompt");
  }
  const ResponseSpace& space = spaces.responses();
  ScoreTable table;
  table.num_responses = space.size();
  for (std::size_t x = 0; x < spaces.num_prompts(); ++x) {
    for (std::size_t y = 0; y < space.size(); ++y) {
      const auto cls = robust ? robust_decode(space.at(y), rule)
                              : strict_class(rule, space.at(y), space.alphabet().eos());
      table.parsed.push_back(cls.has_value());
      table.score.push_back(cls && *cls == rule.label_map[x] ? rule.match_reward
                                                             : rule.mismatch_reward);
    }
  }
  return table;
}

ScoreTable score_with_reward(const RewardTable& reward) {
  ScoreTable table;
  table.num_responses = reward.spaces().num_responses();
  table.score = reward.values();
  table.parsed.assign(table.score.size(), true);
  return table;
}

ScoreTable score_task(const Task& task, const EvalConfig& cfg) {
  if (task.rule) return score_with_rule(*task.rule, *task.spaces, cfg.robust);
  return score_with_reward(task.reward);
}

double accuracy_from_mean_at_1(double mean_at_1) { return (mean_at_1 + 1.0) / 2.0; }

EvalResult eval_mean_at_1(const ConditionalPolicy& p, const ScoreTable& scores,
                          const PromptDist& q, const EvalConfig& cfg, std::uint64_t rng_seed) {
  require_same_spaces(p.spaces(), q.spaces(), "eval_mean_at_1");
  if (scores.num_responses != p.num_responses() ||
      scores.score.size() != p.data().size()) {
    fail(ErrorCode::kDimensionMismatch, "score table does not match policy");
  }
  if (cfg.samples < 1) fail(ErrorCode::kInvalidArgument, "eval needs at least one sample");

  std::vector<std::vector<double>> rows;
  EvalResult result;
  for (std::size_t x = 0; x < p.num_prompts(); ++x) {
    rows.push_back(transform_row(p.row(x), cfg));
    double inner = 0.0;
    for (std::size_t y = 0; y < rows.back().size(); ++y) inner += rows.back()[y] * scores.at(x, y);
    result.exact_mean += q.weight(x) * inner;
  }

  CounterRng rng(rng_seed, 0x6576u);
  double total = 0.0;
  std::size_t parsed = 0, correct = 0;
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const std::size_t x = inverse_cdf(q.weights(), rng.uniform());
    const std::size_t y = inverse_cdf(rows[x], rng.uniform());
    const double s = scores.at(x, y);
    total += s;
    if (scores.parsed_at(x, y)) {
      ++parsed;
      if (s > 0.0) ++correct;
    }
  }
  result.samples = cfg.samples;
  result.mean_at_1 = total / static_cast<double>(cfg.samples);
  result.accuracy = accuracy_from_mean_at_1(result.mean_at_1);
  result.parse_failures = cfg.samples - parsed;
  result.parsed_accuracy = parsed > 0 ? static_cast<double>(correct) / static_cast<double>(parsed) : 0.0;
  return result;
}

EvalResult eval_mean_at_1(const ConditionalPolicy& p, const VerifierRule& rule,
                          const PromptDist& q, const EvalConfig& cfg, std::uint64_t rng_seed) {
  return eval_mean_at_1(p, score_with_rule(rule, p.spaces(), cfg.robust), q, cfg, rng_seed);
}

}  // namespace coupling::harness
