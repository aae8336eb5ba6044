#include "uwmmse/error.hpp"

namespace uwmmse {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::degenerate_geometry: return "degenerate-geometry";
    case ErrorCode::unsupported_size: return "unsupported-size";
    case ErrorCode::numerical_degeneracy: return "numerical-degeneracy";
    case ErrorCode::domain_error: return "domain-error";
    case ErrorCode::non_finite: return "non-finite";
    case ErrorCode::parse_error: return "parse-error";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::config_error: return "config-error";
  }
  return "unknown";
}

}  // namespace uwmmse
