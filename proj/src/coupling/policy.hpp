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

// Finite prompt/response spaces, conditional policies and autoregressive
// sequence models. All theorem-level computation happens on the flattened
// ConditionalPolicy; the autoregressive form exists to relate token-level
// and sequence-level likelihoods.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace coupling {

using TokenId = std::uint32_t;
using Sequence = std::vector<TokenId>;

inline constexpr std::size_t kMaxPrompts = 64;
inline constexpr std::size_t kMaxResponses = 256;
// Row sums of every stored distribution are checked against this.
inline constexpr double kRowSumTolerance = 1e-12;

class TokenAlphabet {
 public:
  TokenAlphabet(std::vector<std::string> tokens, std::string_view eos);

  std::size_t size() const { return tokens_.size(); }
  TokenId eos() const { return eos_; }
  const std::string& name(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::optional<TokenId> find(std::string_view name) const;

  bool operator==(const TokenAlphabet&) const = default;

 private:
  std::vector<std::string> tokens_;
  TokenId eos_ = 0;
};

/// Ordered set of EOS-terminated token sequences. `l_max` counts tokens
/// including the terminating EOS.
class ResponseSpace {
 public:
  ResponseSpace(TokenAlphabet alphabet, std::vector<Sequence> responses,
                std::size_t l_max);

  /// Every sequence of non-EOS tokens of length < l_max, followed by EOS,
  /// in breadth-first (shortlex) order.
  static ResponseSpace exhaustive(TokenAlphabet alphabet, std::size_t l_max);

  /// Rebuilds a space from rendered responses ("tok tok <eos>"). The last
  /// token of every response must be the same and is taken as EOS; the
  /// alphabet is the tokens in order of first appearance.
  static ResponseSpace parse(const std::vector<std::string>& rendered);

  std::size_t size() const { return responses_.size(); }
  std::size_t l_max() const { return l_max_; }
  const TokenAlphabet& alphabet() const { return alphabet_; }
  const Sequence& at(std::size_t index) const { return responses_.at(index); }
  const std::vector<Sequence>& responses() const { return responses_; }
  std::optional<std::size_t> index_of(const Sequence& response) const;

  /// Space-separated token names, EOS included.
  std::string render(std::size_t index) const;

  bool operator==(const ResponseSpace&) const = default;

 private:
  TokenAlphabet alphabet_;
  std::vector<Sequence> responses_;
  std::size_t l_max_ = 0;
};

/// Prompts and responses shared by every table defined over them.
class Spaces {
 public:
  Spaces(std::vector<std::string> prompts, ResponseSpace responses);

  std::size_t num_prompts() const { return prompts_.size(); }
  std::size_t num_responses() const { return responses_.size(); }
  const std::vector<std::string>& prompts() const { return prompts_; }
  const std::string& prompt(std::size_t x) const { return prompts_.at(x); }
  const ResponseSpace& responses() const { return responses_; }
  std::optional<std::size_t> prompt_index(std::string_view id) const;
  std::optional<std::size_t> response_index(std::string_view rendered) const;

  bool operator==(const Spaces&) const = default;

 private:
  std::vector<std::string> prompts_;
  ResponseSpace responses_;
};

using SpacesPtr = std::shared_ptr<const Spaces>;

/// Whitespace tokenization of a rendered response.
std::vector<std::string> split_tokens(const std::string& text);

SpacesPtr make_spaces(std::vector<std::string> prompts, ResponseSpace responses);

/// Throws DimensionMismatch unless both refer to the same prompt/response sets.
void require_same_spaces(const Spaces& a, const Spaces& b, std::string_view what);

/// Throws InvalidArgument unless `p` is a probability vector (entries >= 0,
/// finite, sum within kRowSumTolerance of 1).
void require_distribution(std::span<const double> p, std::string_view what);

class PromptDist {
 public:
  PromptDist(SpacesPtr spaces, std::vector<double> weights);
  static PromptDist uniform(SpacesPtr spaces);

  const Spaces& spaces() const { return *spaces_; }
  const SpacesPtr& spaces_ptr() const { return spaces_; }
  std::span<const double> weights() const { return weights_; }
  double weight(std::size_t x) const { return weights_.at(x); }
  std::size_t size() const { return weights_.size(); }

 private:
  SpacesPtr spaces_;
  std::vector<double> weights_;
};

/// Row-stochastic table pi(y|x) stored densely, row-major.
class ConditionalPolicy {
 public:
  ConditionalPolicy(SpacesPtr spaces, std::vector<double> row_major);
  static ConditionalPolicy uniform(SpacesPtr spaces);
  static ConditionalPolicy from_rows(SpacesPtr spaces,
                                     const std::vector<std::vector<double>>& rows);

  const Spaces& spaces() const { return *spaces_; }
  const SpacesPtr& spaces_ptr() const { return spaces_; }
  std::size_t num_prompts() const { return spaces_->num_prompts(); }
  std::size_t num_responses() const { return spaces_->num_responses(); }
  std::span<const double> row(std::size_t x) const;
  double prob(std::size_t x, std::size_t y) const { return row(x)[y]; }
  const std::vector<double>& data() const { return data_; }

 private:
  SpacesPtr spaces_;
  std::vector<double> data_;
};

enum class Parameterization { kTable, kSoftmaxLogits };

/// Token-level conditionals p(token | prompt, prefix). Prefixes are stored
/// without the prompt; the prompt index is part of the key.
class AutoregressivePolicy {
 public:
  using Key = std::pair<std::size_t, Sequence>;
  using Table = std::map<Key, std::vector<double>>;

  static AutoregressivePolicy from_table(SpacesPtr spaces, Table conditionals);
  static AutoregressivePolicy from_logits(SpacesPtr spaces, Table logits);

  const Spaces& spaces() const { return *spaces_; }
  const SpacesPtr& spaces_ptr() const { return spaces_; }
  Parameterization parameterization() const { return parameterization_; }

  /// nullptr when no conditional is stored for this prefix.
  const std::vector<double>* conditional(std::size_t x, const Sequence& prefix) const;

 private:
  AutoregressivePolicy(SpacesPtr spaces, Table conditionals, Parameterization tag);

  SpacesPtr spaces_;
  Table conditionals_;
  Parameterization parameterization_;
};

/// Chain rule over the response space: p(y|x) = prod_j p(y_j | x, y_<j),
/// where the final factor is the EOS probability after the last body token
/// (termination is read as "EOS emitted after the final token").
///
/// Throws MissingConditional if a prefix has no table entry and MassLeak if
/// a row sums to less than 1 - 1e-9 (the response space truncates the
/// sequence space). Rows that pass are divided by their sum to remove
/// rounding residue only.
ConditionalPolicy flatten(const AutoregressivePolicy& ar);

/// Total probability that `ar` assigns to sequences outside the response
/// space, for prompt x.
double leaked_mass(const AutoregressivePolicy& ar, std::size_t x);

/// log p(y|x) in nats. Throws ZeroProbability when p(y|x) == 0.
double sequence_logprob(const ConditionalPolicy& p, std::size_t x, std::size_t y);

/// Sum over positions of -log p(y_j | x, y_<j), EOS step included.
double token_nll_sum(const AutoregressivePolicy& ar, std::size_t x, const Sequence& y);

/// Inverse-CDF draw from row x; deterministic given seed.
std::size_t sample_response(const ConditionalPolicy& p, std::size_t x,
                            std::uint64_t rng_seed);

/// Inverse CDF of a probability vector at u in [0, 1). Zero-probability
/// entries are never returned.
std::size_t inverse_cdf(std::span<const double> row, double u);

/// Row-wise softmax with max shift.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace coupling
