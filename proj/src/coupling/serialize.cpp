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

#include "coupling/serialize.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "coupling/error.hpp"

namespace coupling {
namespace {

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::vector<std::vector<double>> rows_of(const Json& j, std::size_t nx, std::size_t ny) {
  if (!j.is_array() || j.size() != nx) fail(ErrorCode::kParse, "rows: expected one row per prompt");
  std::vector<std::vector<double>> rows;
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != ny) {
      fail(ErrorCode::kParse, "rows: expected one entry per response");
    }
    rows.push_back(row.get<std::vector<double>>());
  }
  return rows;
}

template <typename Fn>
auto guarded(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Json::exception& e) {
    fail(ErrorCode::kParse, e.what());
  }
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) fail(ErrorCode::kInvalidArgument, "cannot format double");
  return std::string(buf, end);
}

Json parse_json(std::string_view text) {
  return guarded([&] { return Json::parse(text.begin(), text.end()); });
}

Json spaces_to_json(const Spaces& spaces) {
  Json responses = Json::array();
  for (std::size_t y = 0; y < spaces.num_responses(); ++y) {
    responses.push_back(spaces.responses().render(y));
  }
  const ResponseSpace& space = spaces.responses();
  return Json{{"prompts", spaces.prompts()},
              {"responses", responses},
              {"tokens", space.alphabet().tokens()},
              {"eos", space.alphabet().name(space.alphabet().eos())},
              {"l_max", space.l_max()}};
}

SpacesPtr spaces_from_json(const Json& j) {
  return guarded([&] {
    auto prompts = j.at("prompts").get<std::vector<std::string>>();
    const auto rendered = j.at("responses").get<std::vector<std::string>>();
    if (!j.contains("tokens")) return make_spaces(std::move(prompts), ResponseSpace::parse(rendered));
    // An explicit alphabet pins token ids, so round trips reproduce the spaces exactly.
    TokenAlphabet alphabet(j.at("tokens").get<std::vector<std::string>>(), j.at("eos").get<std::string>());
    std::vector<Sequence> seqs;
    std::size_t l_max = 0;
    for (const auto& r : rendered) {
      Sequence seq;
      for (const auto& t : split_tokens(r)) {
        const auto id = alphabet.find(t);
        if (!id) fail(ErrorCode::kParse, "token '" + t + "' is not in the alphabet");
        seq.push_back(*id);
      }
      l_max = std::max(l_max, seq.size());
      seqs.push_back(std::move(seq));
    }
    if (j.contains("l_max")) l_max = j.at("l_max").get<std::size_t>();
    return make_spaces(std::move(prompts), ResponseSpace(std::move(alphabet), std::move(seqs), l_max));
  });
}

Json policy_to_json(const ConditionalPolicy& p) {
  Json j = spaces_to_json(p.spaces());
  Json rows = Json::array();
  for (std::size_t x = 0; x < p.num_prompts(); ++x) {
    const auto row = p.row(x);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["rows"] = std::move(rows);
  return j;
}

ConditionalPolicy policy_from_json(const Json& j) {
  return policy_from_json(j, spaces_from_json(j));
}

ConditionalPolicy policy_from_json(const Json& j, const SpacesPtr& spaces) {
  return guarded([&] {
    if (j.contains("prompts") || j.contains("responses")) {
      // Compare what is written down; the declared form may omit the alphabet.
      const Json declared = spaces_to_json(*spaces);
      if (j.value("prompts", declared.at("prompts")) != declared.at("prompts") ||
          j.value("responses", declared.at("responses")) != declared.at("responses")) {
        fail(ErrorCode::kDimensionMismatch, "policy_from_json: declared spaces do not match");
      }
    }
    return ConditionalPolicy::from_rows(
        spaces, rows_of(j.at("rows"), spaces->num_prompts(), spaces->num_responses()));
  });
}

Json reward_to_json(const RewardTable& r) {
  Json rows = Json::array();
  for (std::size_t x = 0; x < r.spaces().num_prompts(); ++x) {
    const auto row = r.row(x);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return Json{{"r_max", r.r_max()}, {"rows", rows}};
}

RewardTable reward_from_json(const Json& j, const SpacesPtr& spaces) {
  return guarded([&] {
    auto rows = rows_of(j.at("rows"), spaces->num_prompts(), spaces->num_responses());
    std::vector<double> values;
    for (const auto& row : rows) values.insert(values.end(), row.begin(), row.end());
    return RewardTable(spaces, std::move(values), j.at("r_max").get<double>());
  });
}

std::string dataset_to_jsonl(const SftDataset& d) {
  std::string out;
  for (const SftPair& pair : d.pairs()) {
    Json line{{"prompt", d.spaces().prompt(pair.prompt)},
              {"response", d.spaces().responses().render(pair.response)},
              {"count", pair.count}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

SftDataset dataset_from_jsonl(std::string_view text, const SpacesPtr& spaces) {
  std::vector<SftPair> pairs;
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const Json j = parse_json(line);
    guarded([&] {
      const auto prompt = j.at("prompt").get<std::string>();
      const auto response = j.at("response").get<std::string>();
      const auto x = spaces->prompt_index(prompt);
      const auto y = spaces->response_index(response);
      if (!x || !y) {
        fail(ErrorCode::kParse, "line " + std::to_string(line_no) +
                                    ": pair is not in the declared spaces");
      }
      const auto count = j.value("count", std::int64_t{1});
      if (count < 1) fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": count < 1");
      pairs.push_back({*x, *y, static_cast<std::uint64_t>(count)});
      return 0;
    });
  }
  return SftDataset(spaces, std::move(pairs));
}

Json report_to_json(const PipelineReport& report) {
  Json gaps = Json::array();
  for (double g : report.jensen_gap_per_prompt) gaps.push_back(number_or_null(g));
  Json checks = Json::array();
  for (const auto& c : report.checks) {
    checks.push_back({{"name", c.name},
                      {"lhs", number_or_null(c.check.lhs)},
                      {"rhs", number_or_null(c.check.rhs)},
                      {"slack", number_or_null(c.check.slack)},
                      {"holds", c.check.holds},
                      {"enforced", c.enforced}});
  }
  Json lambda = nullptr;
  if (report.lambda) {
    lambda = {{"lambda_hat", report.lambda->lambda_hat},
              {"c2_hat", report.lambda->c2_hat},
              {"min", report.lambda->ratio_min},
              {"median", report.lambda->ratio_median},
              {"max", report.lambda->ratio_max},
              {"accepted", report.lambda->accepted},
              {"all_positive", report.lambda->all_positive}};
  }
  return Json{
      {"pipeline_kind", std::string(to_string(report.kind))},
      {"beta", report.beta},
      {"epsilon_sft", number_or_null(report.epsilon_sft)},
      {"sft_loss_after", number_or_null(report.sft_loss_after)},
      {"floored_count", report.floored_count},
      {"c1_beta", number_or_null(report.c1_beta)},
      {"jensen_gap_per_prompt", gaps},
      {"identity_residual", number_or_null(report.identity_residual)},
      {"reward_before", report.reward_before},
      {"reward_after", report.reward_after},
      {"kl_budget_b", number_or_null(report.kl_budget_b)},
      {"kl_band", {report.kl_band.a, report.kl_band.A}},
      {"band_holds", report.band_holds},
      {"ceiling_lhs", report.ceiling_lhs},
      {"ceiling_rhs", number_or_null(report.ceiling_rhs)},
      {"ceiling_support_violation", report.ceiling_support_violation},
      {"lambda_hat", report.lambda_hat},
      {"c2_hat", report.c2_hat},
      {"lambda", lambda},
      {"kl_growth_holds", report.kl_growth_holds},
      {"reward_dropped", report.reward_dropped},
      {"checks", checks},
      {"all_checks_hold", report.all_checks_hold()},
  };
}

}  // namespace coupling
