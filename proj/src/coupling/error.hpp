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

#include <stdexcept>
#include <string>
#include <string_view>

namespace coupling {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kSupportViolation,
  kZeroProbability,
  kMissingConditional,
  kMassLeak,
  kUncoveredPrompt,
  kNoValidSamples,
  kParse,
  kIo,
  kCheckFailed,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// C boundary can map it to a status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kSupportViolation: return "SupportViolation";
    case ErrorCode::kZeroProbability: return "ZeroProbability";
    case ErrorCode::kMissingConditional: return "MissingConditional";
    case ErrorCode::kMassLeak: return "MassLeak";
    case ErrorCode::kUncoveredPrompt: return "UncoveredPrompt";
    case ErrorCode::kNoValidSamples: return "NoValidSamples";
    case ErrorCode::kParse: return "Parse";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kCheckFailed: return "CheckFailed";
  }
  return "Unknown";
}

}  // namespace coupling
