#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "uwmmse/channel.hpp"
#include "uwmmse/error.hpp"

namespace test {

inline uwmmse::ChannelMatrix channel(std::size_t m, std::vector<double> h, double sigma = 1.0) {
  return {uwmmse::Matrix(m, m, std::move(h)), sigma};
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Runs fn and returns the library error code it throws, or 0 when it returns.
template <class F>
int error_code_of(F&& fn) {
  try {
    fn();
  } catch (const uwmmse::Error& e) {
    return static_cast<int>(e.code());
  }
  return 0;
}

inline int code(uwmmse::ErrorCode c) { return static_cast<int>(c); }

}  // namespace test
