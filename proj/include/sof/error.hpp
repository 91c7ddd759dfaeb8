// Copyright 2026 The stochopt-forest Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace sof {

enum class ErrorCode {
  kNonFinite,
  kDimensionMismatch,
  kEmpty,
  kSingularAfterRidge,
  kAllZeroWeights,
  kNonPositiveBandwidth,
  kNotPSD,
  kRateOutOfRange,
  kKOutOfRange,
  kNoNeighbors,
  kNoSplits,
  kNoValidCandidate,
  kDegenerateDenominator,
  kInfeasible,
  kUnbounded,
  kIterationLimit,
  kConfig,
  kData,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kEmpty: return "Empty";
    case ErrorCode::kSingularAfterRidge: return "SingularAfterRidge";
    case ErrorCode::kAllZeroWeights: return "AllZeroWeights";
    case ErrorCode::kNonPositiveBandwidth: return "NonPositiveBandwidth";
    case ErrorCode::kNotPSD: return "NotPSD";
    case ErrorCode::kRateOutOfRange: return "RateOutOfRange";
    case ErrorCode::kKOutOfRange: return "KOutOfRange";
    case ErrorCode::kNoNeighbors: return "NoNeighbors";
    case ErrorCode::kNoSplits: return "NoSplits";
    case ErrorCode::kNoValidCandidate: return "NoValidCandidate";
    case ErrorCode::kDegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kUnbounded: return "Unbounded";
    case ErrorCode::kIterationLimit: return "IterationLimit";
    case ErrorCode::kConfig: return "Config";
    case ErrorCode::kData: return "Data";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace sof
