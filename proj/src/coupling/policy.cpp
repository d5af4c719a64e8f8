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

#include "coupling/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "coupling/error.hpp"
#include "coupling/rng.hpp"

namespace coupling {

std::vector<std::string> split_tokens(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

namespace {

constexpr double kMassLeakTolerance = 1e-9;

// Unnormalized flattened row: product of token conditionals for every
// response in the space.
std::vector<double> chain_rule_row(const AutoregressivePolicy& ar, std::size_t x) {
  const ResponseSpace& space = ar.spaces().responses();
  std::vector<double> row(space.size());
  for (std::size_t y = 0; y < space.size(); ++y) {
    const Sequence& seq = space.at(y);
    double prob = 1.0;
    Sequence prefix;
    prefix.reserve(seq.size());
    for (TokenId tok : seq) {
      const std::vector<double>* cond = ar.conditional(x, prefix);
      if (cond == nullptr) {
        fail(ErrorCode::kMissingConditional,
             "no conditional for prompt '" + ar.spaces().prompt(x) +
                 "' at prefix length " + std::to_string(prefix.size()) +
                 " of response '" + space.render(y) + "'");
      }
      prob *= (*cond)[tok];
      prefix.push_back(tok);
    }
    row[y] = prob;
  }
  return row;
}

}  // namespace

TokenAlphabet::TokenAlphabet(std::vector<std::string> tokens, std::string_view eos)
    : tokens_(std::move(tokens)) {
  if (tokens_.empty()) fail(ErrorCode::kInvalidArgument, "token alphabet is empty");
  std::set<std::string> seen;
  for (const auto& t : tokens_) {
    if (t.empty() || t.find_first_of(" \t\n") != std::string::npos) {
      fail(ErrorCode::kInvalidArgument, "token names must be nonempty and contain no whitespace");
    }
    if (!seen.insert(t).second) fail(ErrorCode::kInvalidArgument, "duplicate token '" + t + "'");
  }
  auto found = find(eos);
  if (!found) fail(ErrorCode::kInvalidArgument, "eos token '" + std::string(eos) + "' not in alphabet");
  eos_ = *found;
}

std::optional<TokenId> TokenAlphabet::find(std::string_view name) const {
  auto it = std::find(tokens_.begin(), tokens_.end(), name);
  if (it == tokens_.end()) return std::nullopt;
  return static_cast<TokenId>(it - tokens_.begin());
}

ResponseSpace::ResponseSpace(TokenAlphabet alphabet, std::vector<Sequence> responses,
                             std::size_t l_max)
    : alphabet_(std::move(alphabet)), responses_(std::move(responses)), l_max_(l_max) {
  if (responses_.empty()) fail(ErrorCode::kInvalidArgument, "response space is empty");
  if (responses_.size() > kMaxResponses) {
    fail(ErrorCode::kInvalidArgument, "response space exceeds " + std::to_string(kMaxResponses));
  }
  std::set<Sequence> seen;
  for (const Sequence& seq : responses_) {
    if (seq.empty() || seq.back() != alphabet_.eos()) {
      fail(ErrorCode::kInvalidArgument, "every response must end with eos");
    }
    if (seq.size() > l_max_) fail(ErrorCode::kInvalidArgument, "response longer than l_max");
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (seq[i] >= alphabet_.size()) fail(ErrorCode::kInvalidArgument, "token id out of range");
      if (i + 1 < seq.size() && seq[i] == alphabet_.eos()) {
        fail(ErrorCode::kInvalidArgument, "eos may only appear as the final token");
      }
    }
    if (!seen.insert(seq).second) fail(ErrorCode::kInvalidArgument, "duplicate response");
  }
}

ResponseSpace ResponseSpace::exhaustive(TokenAlphabet alphabet, std::size_t l_max) {
  if (l_max == 0) fail(ErrorCode::kInvalidArgument, "l_max must be >= 1");
  std::vector<TokenId> body_tokens;
  for (TokenId t = 0; t < alphabet.size(); ++t) {
    if (t != alphabet.eos()) body_tokens.push_back(t);
  }
  std::vector<Sequence> out;
  std::vector<Sequence> level{Sequence{}};
  for (std::size_t len = 0; len < l_max; ++len) {
    for (const Sequence& body : level) {
      Sequence seq = body;
      seq.push_back(alphabet.eos());
      out.push_back(std::move(seq));
    }
    if (len + 1 == l_max) break;
    std::vector<Sequence> next;
    for (const Sequence& body : level) {
      for (TokenId t : body_tokens) {
        Sequence longer = body;
        longer.push_back(t);
        next.push_back(std::move(longer));
      }
    }
    level = std::move(next);
  }
  return ResponseSpace(std::move(alphabet), std::move(out), l_max);
}

ResponseSpace ResponseSpace::parse(const std::vector<std::string>& rendered) {
  if (rendered.empty()) fail(ErrorCode::kParse, "no responses");
  std::vector<std::vector<std::string>> split;
  std::string eos;
  std::vector<std::string> tokens;
  for (const auto& r : rendered) {
    auto toks = split_tokens(r);
    if (toks.empty()) fail(ErrorCode::kParse, "empty response string");
    if (eos.empty()) eos = toks.back();
    if (toks.back() != eos) fail(ErrorCode::kParse, "responses disagree on the eos token");
    for (const auto& t : toks) {
      if (std::find(tokens.begin(), tokens.end(), t) == tokens.end()) tokens.push_back(t);
    }
    split.push_back(std::move(toks));
  }
  TokenAlphabet alphabet(tokens, eos);
  std::vector<Sequence> seqs;
  std::size_t l_max = 0;
  for (const auto& toks : split) {
    Sequence seq;
    for (const auto& t : toks) seq.push_back(*alphabet.find(t));
    l_max = std::max(l_max, seq.size());
    seqs.push_back(std::move(seq));
  }
  return ResponseSpace(std::move(alphabet), std::move(seqs), l_max);
}

std::optional<std::size_t> ResponseSpace::index_of(const Sequence& response) const {
  auto it = std::find(responses_.begin(), responses_.end(), response);
  if (it == responses_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - responses_.begin());
}

std::string ResponseSpace::render(std::size_t index) const {
  std::string out;
  for (TokenId t : at(index)) {
    if (!out.empty()) out += ' ';
    out += alphabet_.name(t);
  }
  return out;
}

Spaces::Spaces(std::vector<std::string> prompts, ResponseSpace responses)
    : prompts_(std::move(prompts)), responses_(std::move(responses)) {
  if (prompts_.empty()) fail(ErrorCode::kInvalidArgument, "prompt set is empty");
  if (prompts_.size() > kMaxPrompts) {
    fail(ErrorCode::kInvalidArgument, "prompt set exceeds " + std::to_string(kMaxPrompts));
  }
  std::set<std::string> seen;
  for (const auto& p : prompts_) {
    if (!seen.insert(p).second) fail(ErrorCode::kInvalidArgument, "duplicate prompt '" + p + "'");
  }
}

std::optional<std::size_t> Spaces::prompt_index(std::string_view id) const {
  auto it = std::find(prompts_.begin(), prompts_.end(), id);
  if (it == prompts_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - prompts_.begin());
}

std::optional<std::size_t> Spaces::response_index(std::string_view rendered) const {
  auto toks = split_tokens(std::string(rendered));
  Sequence seq;
  for (const auto& t : toks) {
    auto id = responses_.alphabet().find(t);
    if (!id) return std::nullopt;
    seq.push_back(*id);
  }
  return responses_.index_of(seq);
}

SpacesPtr make_spaces(std::vector<std::string> prompts, ResponseSpace responses) {
  return std::make_shared<const Spaces>(std::move(prompts), std::move(responses));
}

void require_same_spaces(const Spaces& a, const Spaces& b, std::string_view what) {
  if (&a == &b) return;
  if (!(a == b)) {
    fail(ErrorCode::kDimensionMismatch, std::string(what) + ": operands are defined over different spaces");
  }
}

void require_distribution(std::span<const double> p, std::string_view what) {
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) {
      fail(ErrorCode::kInvalidArgument, std::string(what) + ": entries must be finite and >= 0");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kRowSumTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << what << ": entries sum to " << sum << ", not 1";
    fail(ErrorCode::kInvalidArgument, msg.str());
  }
}

PromptDist::PromptDist(SpacesPtr spaces, std::vector<double> weights)
    : spaces_(std::move(spaces)), weights_(std::move(weights)) {
  if (!spaces_) fail(ErrorCode::kInvalidArgument, "prompt distribution needs spaces");
  if (weights_.size() != spaces_->num_prompts()) {
    fail(ErrorCode::kDimensionMismatch, "prompt weights do not match prompt count");
  }
  require_distribution(weights_, "prompt distribution");
}

PromptDist PromptDist::uniform(SpacesPtr spaces) {
  const std::size_t n = spaces->num_prompts();
  return PromptDist(std::move(spaces), std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

ConditionalPolicy::ConditionalPolicy(SpacesPtr spaces, std::vector<double> row_major)
    : spaces_(std::move(spaces)), data_(std::move(row_major)) {
  if (!spaces_) fail(ErrorCode::kInvalidArgument, "policy needs spaces");
  if (data_.size() != spaces_->num_prompts() * spaces_->num_responses()) {
    fail(ErrorCode::kDimensionMismatch, "policy table size does not match spaces");
  }
  for (std::size_t x = 0; x < num_prompts(); ++x) {
    require_distribution(row(x), "policy row '" + spaces_->prompt(x) + "'");
  }
}

ConditionalPolicy ConditionalPolicy::uniform(SpacesPtr spaces) {
  const std::size_t n = spaces->num_responses();
  std::vector<double> data(spaces->num_prompts() * n, 1.0 / static_cast<double>(n));
  return ConditionalPolicy(std::move(spaces), std::move(data));
}

ConditionalPolicy ConditionalPolicy::from_rows(SpacesPtr spaces,
                                               const std::vector<std::vector<double>>& rows) {
  std::vector<double> data;
  for (const auto& r : rows) {
    if (r.size() != spaces->num_responses()) {
      fail(ErrorCode::kDimensionMismatch, "row length does not match response count");
    }
    data.insert(data.end(), r.begin(), r.end());
  }
  return ConditionalPolicy(std::move(spaces), std::move(data));
}

std::span<const double> ConditionalPolicy::row(std::size_t x) const {
  if (x >= num_prompts()) fail(ErrorCode::kInvalidArgument, "prompt index out of range");
  const std::size_t n = num_responses();
  return std::span<const double>(data_).subspan(x * n, n);
}

AutoregressivePolicy::AutoregressivePolicy(SpacesPtr spaces, Table conditionals,
                                           Parameterization tag)
    : spaces_(std::move(spaces)), conditionals_(std::move(conditionals)), parameterization_(tag) {
  const std::size_t vocab = spaces_->responses().alphabet().size();
  for (const auto& [key, probs] : conditionals_) {
    if (key.first >= spaces_->num_prompts()) {
      fail(ErrorCode::kInvalidArgument, "conditional refers to an unknown prompt");
    }
    if (probs.size() != vocab) {
      fail(ErrorCode::kDimensionMismatch, "conditional length does not match alphabet size");
    }
    require_distribution(probs, "token conditional");
  }
}

AutoregressivePolicy AutoregressivePolicy::from_table(SpacesPtr spaces, Table conditionals) {
  return AutoregressivePolicy(std::move(spaces), std::move(conditionals), Parameterization::kTable);
}

AutoregressivePolicy AutoregressivePolicy::from_logits(SpacesPtr spaces, Table logits) {
  for (auto& [key, row] : logits) {
    for (double v : row) {
      if (!std::isfinite(v)) fail(ErrorCode::kInvalidArgument, "logits must be finite");
    }
    row = softmax(row);
  }
  return AutoregressivePolicy(std::move(spaces), std::move(logits), Parameterization::kSoftmaxLogits);
}

const std::vector<double>* AutoregressivePolicy::conditional(std::size_t x,
                                                             const Sequence& prefix) const {
  auto it = conditionals_.find(Key{x, prefix});
  return it == conditionals_.end() ? nullptr : &it->second;
}

ConditionalPolicy flatten(const AutoregressivePolicy& ar) {
  const Spaces& spaces = ar.spaces();
  std::vector<double> data;
  data.reserve(spaces.num_prompts() * spaces.num_responses());
  for (std::size_t x = 0; x < spaces.num_prompts(); ++x) {
    std::vector<double> row = chain_rule_row(ar, x);
    const double sum = std::accumulate(row.begin(), row.end(), 0.0);
    if (sum < 1.0 - kMassLeakTolerance) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "response space truncates the sequence space for prompt '" << spaces.prompt(x)
          << "': leaked mass " << 1.0 - sum;
      fail(ErrorCode::kMassLeak, msg.str());
    }
    for (double& v : row) v /= sum;
    data.insert(data.end(), row.begin(), row.end());
  }
  return ConditionalPolicy(ar.spaces_ptr(), std::move(data));
}

double leaked_mass(const AutoregressivePolicy& ar, std::size_t x) {
  std::vector<double> row = chain_rule_row(ar, x);
  return 1.0 - std::accumulate(row.begin(), row.end(), 0.0);
}

double sequence_logprob(const ConditionalPolicy& p, std::size_t x, std::size_t y) {
  if (y >= p.num_responses()) fail(ErrorCode::kInvalidArgument, "response index out of range");
  const double prob = p.prob(x, y);
  if (prob <= 0.0) {
    fail(ErrorCode::kZeroProbability,
         "p(y|x) = 0 for response '" + p.spaces().responses().render(y) + "'");
  }
  return std::log(prob);
}

double token_nll_sum(const AutoregressivePolicy& ar, std::size_t x, const Sequence& y) {
  double nll = 0.0;
  Sequence prefix;
  for (TokenId tok : y) {
    const std::vector<double>* cond = ar.conditional(x, prefix);
    if (cond == nullptr) {
      fail(ErrorCode::kMissingConditional,
           "no conditional at prefix length " + std::to_string(prefix.size()));
    }
    if (tok >= cond->size()) fail(ErrorCode::kInvalidArgument, "token id out of range");
    const double prob = (*cond)[tok];
    if (prob <= 0.0) fail(ErrorCode::kZeroProbability, "token probability is zero");
    nll -= std::log(prob);
    prefix.push_back(tok);
  }
  return nll;
}

std::size_t inverse_cdf(std::span<const double> row, double u) {
  double cumulative = 0.0;
  std::size_t last_positive = row.size();
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (row[i] <= 0.0) continue;
    last_positive = i;
    cumulative += row[i];
    if (u < cumulative) return i;
  }
  // u landed in the rounding gap above the accumulated sum.
  if (last_positive == row.size()) fail(ErrorCode::kInvalidArgument, "row has no mass");
  return last_positive;
}

std::size_t sample_response(const ConditionalPolicy& p, std::size_t x, std::uint64_t rng_seed) {
  CounterRng rng(rng_seed);
  return inverse_cdf(p.row(x), rng.uniform());
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double shift = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - shift);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace coupling
