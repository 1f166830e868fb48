#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nsaudit {

enum class ErrorCode {
  // linalg
  NonFiniteInput,
  ToleranceInvalid,
  ZeroVector,
  DimensionMismatch,
  // model_io
  BadMagic,
  UnsupportedVersion,
  ChecksumMismatch,
  LabelOutOfRange,
  NonFiniteValue,
  Truncated,
  IoFailure,
  // audit
  ClassOutOfRange,
  DegenerateHead,
  EmptyAfterFilter,
  CohortTooSmall,
  ZeroDenominator,
  // toy pipeline
  InvalidParam,
  DivergenceDetected,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteInput: return "non-finite input";
    case ErrorCode::ToleranceInvalid: return "invalid rank tolerance";
    case ErrorCode::ZeroVector: return "zero vector";
    case ErrorCode::DimensionMismatch: return "dimension mismatch";
    case ErrorCode::BadMagic: return "bad magic";
    case ErrorCode::UnsupportedVersion: return "unsupported version";
    case ErrorCode::ChecksumMismatch: return "checksum mismatch";
    case ErrorCode::LabelOutOfRange: return "label out of range";
    case ErrorCode::NonFiniteValue: return "non-finite value";
    case ErrorCode::Truncated: return "truncated input";
    case ErrorCode::IoFailure: return "i/o failure";
    case ErrorCode::ClassOutOfRange: return "class out of range";
    case ErrorCode::DegenerateHead: return "degenerate head";
    case ErrorCode::EmptyAfterFilter: return "no samples after filter";
    case ErrorCode::CohortTooSmall: return "cohort too small";
    case ErrorCode::ZeroDenominator: return "zero denominator";
    case ErrorCode::InvalidParam: return "invalid parameter";
    case ErrorCode::DivergenceDetected: return "divergence detected";
  }
  return "unknown error";
}

/// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(format(code, detail)), code_(code), detail_(detail) {}
  explicit Error(ErrorCode code) : Error(code, {}) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

  /// Same code, with `context` prefixed to the detail.
  Error with_context(const std::string& context) const {
    return Error(code_, detail_.empty() ? context : context + ": " + detail_);
  }

 private:
  static std::string format(ErrorCode code, const std::string& detail) {
    std::string msg(to_string(code));
    if (!detail.empty()) {
      msg += ": ";
      msg += detail;
    }
    return msg;
  }

  ErrorCode code_;
  std::string detail_;
};

}  // namespace nsaudit
