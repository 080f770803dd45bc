#include "robcov/error.hpp"

namespace robcov {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::DimensionMismatch: return "dimension mismatch";
    case ErrorCode::NotPositiveDefinite: return "not positive definite";
    case ErrorCode::DivergentIntegral: return "divergent integral";
    case ErrorCode::NoConvergence: return "no convergence";
    case ErrorCode::RejectionLimit: return "rejection limit";
    case ErrorCode::SoundnessGap: return "soundness gap";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::Numeric: return "numerical error";
  }
  return "unknown error";
}

}  // namespace robcov
