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

#include "coupling/divergence.hpp"

#include <cmath>
#include <limits>

#include "coupling/error.hpp"

namespace coupling {
namespace {

void require_same_size(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    fail(ErrorCode::kDimensionMismatch, "vectors of size " + std::to_string(a.size()) +
                                            " and " + std::to_string(b.size()));
  }
}

// p log(p / q) - p + q, which is nonnegative term by term. Near p == q the
// direct form cancels, so a series in u = (p - q) / q takes over.
double kl_term(double p, double q) {
  const double u = (p - q) / q;
  if (std::abs(u) < 0.05) {
    double power = u * u, sum = 0.0;
    for (int n = 2; n < 16; ++n) {
      sum += power / (n * (n - 1.0));
      power *= -u;
    }
    return q * sum;
  }
  return (p == 0.0 ? 0.0 : p * std::log(p / q)) - p + q;
}

}  // namespace

BoundCheck BoundCheck::make(double lhs, double rhs) {
  BoundCheck check;
  check.lhs = lhs;
  check.rhs = rhs;
  check.slack = std::isinf(rhs) && rhs > 0 ? std::numeric_limits<double>::infinity() : rhs - lhs;
  check.holds = check.slack >= -kBoundTolerance;
  return check;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  require_same_size(p, q);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return 0.5 * sum;
}

KlValue kl_divergence(std::span<const double> p, std::span<const double> q) {
  require_same_size(p, q);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return {std::numeric_limits<double>::infinity(), true};
  }
  // The added -p + q terms sum to zero for distributions; they keep near-equal
  // inputs from cancelling to rounding noise.
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (q[i] != 0.0) sum += kl_term(p[i], q[i]);
  }
  return {sum, false};
}

BoundCheck pinsker_check(std::span<const double> p, std::span<const double> q) {
  const double tv = total_variation(p, q);
  const KlValue kl = kl_divergence(p, q);
  if (!kl.finite()) return BoundCheck::make(tv, std::numeric_limits<double>::infinity());
  return BoundCheck::make(tv, std::sqrt(0.5 * kl.nats));
}

BoundCheck bounded_expectation_gap(std::span<const double> f, std::span<const double> p,
                                   std::span<const double> q, double factor) {
  require_same_size(f, p);
  require_same_size(p, q);
  double ep = 0.0, eq = 0.0, sup = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!std::isfinite(f[i])) fail(ErrorCode::kInvalidArgument, "f must be finite");
    ep += p[i] * f[i];
    eq += q[i] * f[i];
    sup = std::max(sup, std::abs(f[i]));
  }
  return BoundCheck::make(std::abs(ep - eq), factor * sup * total_variation(p, q));
}

BoundCheck tv_triangle_check(std::span<const double> p, std::span<const double> q,
                             std::span<const double> r) {
  require_same_size(p, q);
  require_same_size(q, r);
  return BoundCheck::make(total_variation(p, r), total_variation(p, q) + total_variation(q, r));
}

}  // namespace coupling
