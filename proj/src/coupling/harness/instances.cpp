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

#include "coupling/harness/instances.hpp"

#include <cmath>
#include <string>

namespace coupling::harness {
namespace {

double gamma_draw(CounterRng& rng, double alpha) {
  if (alpha == 1.0) return rng.exponential();
  if (alpha < 1.0) {
    // Boost to alpha + 1 and scale by U^(1/alpha).
    return gamma_draw(rng, alpha + 1.0) * std::pow(rng.uniform_open_zero(), 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open_zero();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

void enumerate_prefixes(std::size_t depth, std::size_t l_max, std::size_t body_tokens,
                        Sequence& prefix, std::vector<Sequence>& out) {
  out.push_back(prefix);
  if (depth + 1 >= l_max) return;
  for (TokenId t = 0; t < body_tokens; ++t) {
    prefix.push_back(t);
    enumerate_prefixes(depth + 1, l_max, body_tokens, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

std::vector<double> random_distribution(CounterRng& rng, std::size_t n, double alpha) {
  std::vector<double> p(n);
  double sum = 0.0;
  for (double& v : p) {
    v = gamma_draw(rng, alpha);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

SpacesPtr atomic_spaces(std::size_t num_prompts, std::size_t num_responses) {
  std::vector<std::string> prompts;
  for (std::size_t x = 0; x < num_prompts; ++x) prompts.push_back("x" + std::to_string(x));
  std::vector<std::string> tokens;
  for (std::size_t y = 0; y < num_responses; ++y) tokens.push_back("r" + std::to_string(y));
  tokens.push_back("<eos>");
  TokenAlphabet alphabet(tokens, "<eos>");
  std::vector<Sequence> responses;
  for (std::size_t y = 0; y < num_responses; ++y) {
    responses.push_back({static_cast<TokenId>(y), alphabet.eos()});
  }
  return make_spaces(std::move(prompts), ResponseSpace(std::move(alphabet), std::move(responses), 2));
}

ConditionalPolicy random_policy(CounterRng& rng, const SpacesPtr& spaces, double alpha) {
  std::vector<double> data;
  for (std::size_t x = 0; x < spaces->num_prompts(); ++x) {
    auto row = random_distribution(rng, spaces->num_responses(), alpha);
    data.insert(data.end(), row.begin(), row.end());
  }
  return ConditionalPolicy(spaces, std::move(data));
}

PromptDist random_prompt_dist(CounterRng& rng, const SpacesPtr& spaces) {
  return PromptDist(spaces, random_distribution(rng, spaces->num_prompts()));
}

RewardTable random_reward(CounterRng& rng, const SpacesPtr& spaces, double r_max) {
  std::vector<double> values(spaces->num_prompts() * spaces->num_responses());
  for (double& v : values) v = r_max * (2.0 * rng.uniform() - 1.0);
  return RewardTable(spaces, std::move(values), r_max);
}

SftDataset sample_dataset(CounterRng& rng, const ConditionalPolicy& truth,
                          std::size_t pairs_per_prompt) {
  const std::size_t ny = truth.num_responses();
  std::vector<SftPair> pairs;
  for (std::size_t x = 0; x < truth.num_prompts(); ++x) {
    std::vector<std::uint64_t> counts(ny, 0);
    for (std::size_t i = 0; i < pairs_per_prompt; ++i) {
      ++counts[inverse_cdf(truth.row(x), rng.uniform())];
    }
    for (std::size_t y = 0; y < ny; ++y) {
      if (counts[y] > 0) pairs.push_back({x, y, counts[y]});
    }
  }
  return SftDataset(truth.spaces_ptr(), std::move(pairs));
}

AutoregressivePolicy random_autoregressive(CounterRng& rng, std::size_t num_prompts,
                                           std::size_t alphabet_size, std::size_t l_max) {
  std::vector<std::string> tokens;
  for (std::size_t t = 0; t < alphabet_size; ++t) tokens.push_back("t" + std::to_string(t));
  tokens.push_back("<eos>");
  TokenAlphabet alphabet(tokens, "<eos>");
  const TokenId eos = alphabet.eos();
  std::vector<std::string> prompts;
  for (std::size_t x = 0; x < num_prompts; ++x) prompts.push_back("x" + std::to_string(x));
  auto spaces = make_spaces(std::move(prompts), ResponseSpace::exhaustive(alphabet, l_max));

  std::vector<Sequence> prefixes;
  Sequence scratch;
  enumerate_prefixes(0, l_max, alphabet_size, scratch, prefixes);

  AutoregressivePolicy::Table table;
  for (std::size_t x = 0; x < num_prompts; ++x) {
    for (const Sequence& prefix : prefixes) {
      std::vector<double> cond;
      if (prefix.size() + 1 == l_max) {
        cond.assign(alphabet.size(), 0.0);
        cond[eos] = 1.0;
      } else {
        cond = random_distribution(rng, alphabet.size());
      }
      table.emplace(AutoregressivePolicy::Key{x, prefix}, std::move(cond));
    }
  }
  return AutoregressivePolicy::from_table(spaces, std::move(table));
}

}  // namespace coupling::harness
