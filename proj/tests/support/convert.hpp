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

// Conversions between library objects and the oracle's plain tables.

#include <vector>

#include "coupling/policy.hpp"
#include "coupling/rl.hpp"
#include "coupling/sft.hpp"
#include "oracles.hpp"

namespace testing_support {

inline oracle::Table rows_of(const coupling::ConditionalPolicy& p) {
  oracle::Table t;
  for (std::size_t x = 0; x < p.num_prompts(); ++x) t.emplace_back(p.row(x).begin(), p.row(x).end());
  return t;
}

inline oracle::Table rows_of(const coupling::RewardTable& r) {
  oracle::Table t;
  for (std::size_t x = 0; x < r.spaces().num_prompts(); ++x) t.emplace_back(r.row(x).begin(), r.row(x).end());
  return t;
}

inline oracle::Row weights_of(const coupling::PromptDist& q) {
  return {q.weights().begin(), q.weights().end()};
}

inline std::vector<oracle::Pair> pairs_of(const coupling::SftDataset& d) {
  std::vector<oracle::Pair> out;
  for (const auto& p : d.pairs()) out.push_back({p.prompt, p.response, static_cast<unsigned long>(p.count)});
  return out;
}

/// Count-weighted empirical conditional, recomputed from the raw pairs.
inline oracle::Table empirical(const coupling::SftDataset& d) {
  const std::size_t nx = d.spaces().num_prompts(), ny = d.spaces().num_responses();
  oracle::Table t(nx, oracle::Row(ny, 0.0));
  std::vector<double> totals(nx, 0.0);
  for (const auto& p : d.pairs()) {
    t[p.prompt][p.response] += static_cast<double>(p.count);
    totals[p.prompt] += static_cast<double>(p.count);
  }
  for (std::size_t x = 0; x < nx; ++x) {
    for (double& v : t[x]) v = totals[x] > 0 ? v / totals[x] : 1.0 / static_cast<double>(ny);
  }
  return t;
}

inline oracle::Row prompt_marginal(const coupling::SftDataset& d) {
  oracle::Row q(d.spaces().num_prompts(), 0.0);
  double total = 0.0;
  for (const auto& p : d.pairs()) {
    q[p.prompt] += static_cast<double>(p.count);
    total += static_cast<double>(p.count);
  }
  for (double& v : q) v /= total;
  return q;
}

}  // namespace testing_support
