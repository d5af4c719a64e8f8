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

#include "coupling/harness/synthetic.hpp"

#include <array>
#include <set>
#include <string>

#include "coupling/error.hpp"
#include "coupling/harness/instances.hpp"
#include "coupling/rng.hpp"

namespace coupling::harness {
namespace {

constexpr std::array<const char*, 12> kWords = {
    "the", "a", "cat", "dog", "bird", "saw", "chased", "sang", "quickly", "big", "green", "who"};

ResponseSpace label_responses(bool verbose) {
  TokenAlphabet alphabet({kAcceptableToken, kUnacceptableToken, "answer", "unsure", kEosToken},
                         kEosToken);
  const TokenId ok = 0, bad = 1, answer = 2, unsure = 3, eos = 4;
  std::vector<Sequence> responses{{ok, eos}, {bad, eos}};
  if (verbose) {
    responses.push_back({answer, ok, eos});
    responses.push_back({answer, bad, eos});
    responses.push_back({ok, bad, eos});
    responses.push_back({bad, ok, eos});
    responses.push_back({unsure, eos});
  }
  return ResponseSpace(std::move(alphabet), std::move(responses), 3);
}

}  // namespace

Task gen_synthetic_acceptability(const SpacesConfig& size, double noise_rate,
                                 std::uint64_t rng_seed) {
  if (size.num_prompts < 1 || size.num_prompts > kMaxPrompts) {
    fail(ErrorCode::kInvalidArgument, "num_prompts must be in [1, 64]");
  }
  if (noise_rate < 0.0 || noise_rate > 1.0) fail(ErrorCode::kInvalidArgument, "noise_rate must be in [0, 1]");
  CounterRng grammar(rng_seed, 0x6772u);
  std::set<std::string> seen;
  std::vector<std::string> prompts;
  while (prompts.size() < size.num_prompts) {
    const std::size_t length = 3 + grammar.next_u32() % 3;
    std::string sentence;
    for (std::size_t i = 0; i < length; ++i) {
      if (i > 0) sentence += ' ';
      sentence += kWords[grammar.next_u32() % kWords.size()];
    }
    if (seen.insert(sentence).second) prompts.push_back(std::move(sentence));
  }

  VerifierRule rule;
  rule.class_labels = {Sequence{0}, Sequence{1}};
  for (std::size_t x = 0; x < prompts.size(); ++x) {
    rule.label_map.push_back(grammar.uniform() < 0.5 ? 0 : 1);
  }

  auto spaces = make_spaces(std::move(prompts), label_responses(size.verbose_responses));
  CounterRng labels(rng_seed, 0x6e6fu);
  std::vector<SftPair> pairs;
  for (std::size_t x = 0; x < spaces->num_prompts(); ++x) {
    std::uint64_t flipped = 0;
    for (std::size_t i = 0; i < size.pairs_per_prompt; ++i) {
      if (labels.uniform() < noise_rate) ++flipped;
    }
    // Responses 0 and 1 are the bare class labels.
    const std::size_t gold = rule.label_map[x];
    const std::uint64_t kept = size.pairs_per_prompt - flipped;
    if (kept > 0) pairs.push_back({x, gold, kept});
    if (flipped > 0) pairs.push_back({x, 1 - gold, flipped});
  }

  SftDataset dataset(spaces, std::move(pairs));
  RewardTable reward = reward_from_verifier(rule, spaces);
  return Task{spaces, PromptDist::uniform(spaces), std::move(dataset), std::move(rule),
              std::move(reward)};
}

Task gen_random_tables(const SpacesConfig& size, std::uint64_t rng_seed) {
  CounterRng rng(rng_seed, 0x7274u);
  auto spaces = atomic_spaces(size.num_prompts, size.num_responses);
  const ConditionalPolicy truth = random_policy(rng, spaces);
  SftDataset dataset = sample_dataset(rng, truth, size.pairs_per_prompt);
  RewardTable reward = random_reward(rng, spaces, 1.0);
  return Task{spaces, PromptDist::uniform(spaces), std::move(dataset), std::nullopt,
              std::move(reward)};
}

Task generate_task(const ExperimentConfig& cfg, std::uint64_t rng_seed) {
  if (cfg.task == TaskKind::kSyntheticAcceptability) {
    return gen_synthetic_acceptability(cfg.spaces, cfg.noise_rate, rng_seed);
  }
  return gen_random_tables(cfg.spaces, rng_seed);
}

}  // namespace coupling::harness
