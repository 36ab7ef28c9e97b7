#include "melfill/error.hpp"

namespace melfill {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kConfigMismatch: return "config-mismatch";
    case ErrorCode::kTooShort: return "too-short";
    case ErrorCode::kAllSilent: return "all-silent";
    case ErrorCode::kZeroVariance: return "zero-variance";
    case ErrorCode::kStateMismatch: return "state-mismatch";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kLeakage: return "leakage";
    case ErrorCode::kNonFinite: return "non-finite";
    case ErrorCode::kUnavailable: return "unavailable";
  }
  return "unknown";
}

}  // namespace melfill
