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

// Total variation and KL divergence on finite probability vectors, plus the
// inequalities that relate them expressed as checkable predicates. All
// logarithms are natural (results in nats).

#include <span>

namespace coupling {

inline constexpr double kBoundTolerance = 1e-12;

/// Verdict for an inequality lhs <= rhs. `holds` iff slack >= -1e-12.
/// An infinite rhs gives infinite slack.
struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool holds = true;

  static BoundCheck make(double lhs, double rhs);
};

/// KL value with an explicit support-violation tag. When the tag is set,
/// `nats` is +infinity.
struct KlValue {
  double nats = 0.0;
  bool support_violation = false;

  bool finite() const { return !support_violation; }
};

/// 1/2 sum |p_i - q_i|. Throws DimensionMismatch.
double total_variation(std::span<const double> p, std::span<const double> q);

/// sum p_i log(p_i / q_i) in nats, 0 log(0/.) = 0. Throws DimensionMismatch.
KlValue kl_divergence(std::span<const double> p, std::span<const double> q);

/// TV(p, q) <= sqrt(D(p||q) / 2).
BoundCheck pinsker_check(std::span<const double> p, std::span<const double> q);

/// |E_p f - E_q f| <= factor * sup|f| * TV(p, q).
///
/// factor = 2 is the form that holds in general (take f = (1, -1) on
/// disjoint supports: the gap is 2 while sup|f| TV = 1). factor = 1 is only
/// valid for f with values in [0, 1] and is kept selectable so that the
/// weaker form can be probed.
BoundCheck bounded_expectation_gap(std::span<const double> f, std::span<const double> p,
                                   std::span<const double> q, double factor = 2.0);

/// TV(p, r) <= TV(p, q) + TV(q, r).
BoundCheck tv_triangle_check(std::span<const double> p, std::span<const double> q,
                             std::span<const double> r);

}  // namespace coupling
