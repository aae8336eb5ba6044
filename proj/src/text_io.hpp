#pragma once

#include <charconv>
#include <cstddef>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "uwmmse/error.hpp"

// Line-oriented helpers for the parameter file format.
namespace uwmmse::text_io {

inline std::string format_double(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  (void)ec;
  return std::string(buf, end);
}

[[noreturn]] inline void parse_fail(std::size_t line, const std::string& what) {
  std::ostringstream msg;
  msg << "line " << line << ": " << what;
  fail(ErrorCode::parse_error, msg.str());
}

inline std::vector<std::string> next_tokens(std::istream& in, std::size_t& line,
                                            const char* expecting) {
  std::string text;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty() || text[0] == '#') continue;
    std::istringstream fields(text);
    std::vector<std::string> tokens;
    for (std::string t; fields >> t;) tokens.push_back(std::move(t));
    if (!tokens.empty()) return tokens;
  }
  parse_fail(line + 1, std::string("unexpected end of file, expected ") + expecting);
}

inline double parse_double(std::string_view s, std::size_t line) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size())
    parse_fail(line, "malformed number '" + std::string(s) + "'");
  return x;
}

inline std::size_t parse_size(std::string_view s, std::size_t line) {
  std::size_t x = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size())
    parse_fail(line, "malformed integer '" + std::string(s) + "'");
  return x;
}

}  // namespace uwmmse::text_io
