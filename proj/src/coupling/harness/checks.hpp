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

#include <cstdint>
#include <ostream>

namespace coupling::harness {

/// Fast randomized invariant suite: TV axioms, Pinsker, the factor-2
/// expectation bound, the chain rule for sequence NLL, the RL loss
/// identity, C1 sign and boundary, the reward ceiling and Gibbs optimality.
/// Prints one "PASS|FAIL <name> ..." line per check; true iff all pass.
bool run_check_suite(std::uint64_t seed, std::ostream& out);

}  // namespace coupling::harness
