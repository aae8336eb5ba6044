#pragma once

#include <stdexcept>
#include <string>

namespace uwmmse {

enum class ErrorCode {
  invalid_argument = 1,
  degenerate_geometry,
  unsupported_size,
  numerical_degeneracy,
  domain_error,
  non_finite,
  parse_error,
  io_error,
  config_error,
};

const char* error_code_name(ErrorCode code) noexcept;

// Single exception type for the library; the code carries the category the
// C API maps to a status value.
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
  if (!cond) fail(ErrorCode::invalid_argument, what);
}

}  // namespace uwmmse
