#pragma once

#include <stdexcept>
#include <string>

namespace robcov {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NotPositiveDefinite,
  DivergentIntegral,
  NoConvergence,
  RejectionLimit,
  SoundnessGap,
  Io,
  Numeric,
};

const char* to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries a code so the C layer can map
// it onto a status without parsing messages.
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

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::InvalidArgument, what);
}

}  // namespace robcov
