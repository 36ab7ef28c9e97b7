#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace melfill {

enum class ErrorCode {
  kInvalidArgument,
  kNotFound,
  kIo,
  kFormat,
  kConfigMismatch,
  kTooShort,
  kAllSilent,
  kZeroVariance,
  kStateMismatch,
  kShapeMismatch,
  kLeakage,
  kNonFinite,
  kUnavailable,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

}  // namespace melfill
