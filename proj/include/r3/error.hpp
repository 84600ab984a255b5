#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace r3 {

// Machine-readable error codes. The CLI prints them as the first token of its
// one-line stderr message; the service returns them in the JSON error body.
enum class ErrorCode {
  kInvalidArgument,
  kReferenceRequired,
  kCalibrationRequired,
  kDegenerateRange,
  kDimensionMismatch,
  kTransport,
  kBadResponse,
  kMalformedInput,
  kUnknownField,
  kPayloadTooLarge,
  kNonFinite,
  kConfig,
  kIo,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::kReferenceRequired: return "REFERENCE_REQUIRED";
    case ErrorCode::kCalibrationRequired: return "CALIBRATION_REQUIRED";
    case ErrorCode::kDegenerateRange: return "DEGENERATE_RANGE";
    case ErrorCode::kDimensionMismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::kTransport: return "TRANSPORT";
    case ErrorCode::kBadResponse: return "BAD_RESPONSE";
    case ErrorCode::kMalformedInput: return "MALFORMED_INPUT";
    case ErrorCode::kUnknownField: return "UNKNOWN_FIELD";
    case ErrorCode::kPayloadTooLarge: return "PAYLOAD_TOO_LARGE";
    case ErrorCode::kNonFinite: return "NON_FINITE";
    case ErrorCode::kConfig: return "CONFIG";
    case ErrorCode::kIo: return "IO";
  }
  return "UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, bool retryable = false)
      : std::runtime_error(message), code_(code), retryable_(retryable) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view code_name() const noexcept { return error_code_name(code_); }
  bool retryable() const noexcept { return retryable_; }

 private:
  ErrorCode code_;
  bool retryable_;
};

}  // namespace r3
