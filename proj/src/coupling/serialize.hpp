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

// JSON encodings of the core types. Doubles are written in shortest
// round-trip form, so decoding an encoded table reproduces it bit for bit.

#include <string>
#include <string_view>

#include <json.hpp>

#include "coupling/coupling.hpp"
#include "coupling/policy.hpp"
#include "coupling/rl.hpp"
#include "coupling/sft.hpp"

namespace coupling {

using Json = nlohmann::json;

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

/// Parses JSON text, mapping syntax errors to ErrorCode::kParse.
Json parse_json(std::string_view text);

/// {"prompts": [...], "responses": ["tok <eos>", ...]}
Json spaces_to_json(const Spaces& spaces);
SpacesPtr spaces_from_json(const Json& j);

/// {"prompts": [...], "responses": [...], "rows": [[...], ...]}
Json policy_to_json(const ConditionalPolicy& p);
ConditionalPolicy policy_from_json(const Json& j);
/// Decodes onto existing spaces; the declared prompts/responses must match.
ConditionalPolicy policy_from_json(const Json& j, const SpacesPtr& spaces);

/// {"r_max": number, "rows": [[...], ...]}, indexed like the policy rows.
Json reward_to_json(const RewardTable& r);
RewardTable reward_from_json(const Json& j, const SpacesPtr& spaces);

/// One {"prompt": id, "response": rendered, "count": n} object per line.
std::string dataset_to_jsonl(const SftDataset& d);
SftDataset dataset_from_jsonl(std::string_view text, const SpacesPtr& spaces);

/// Non-finite doubles become null.
Json report_to_json(const PipelineReport& report);

}  // namespace coupling
