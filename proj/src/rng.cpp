#include "uwmmse/rng.hpp"

#include <cmath>

#include "uwmmse/error.hpp"

namespace uwmmse {

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  require(lo <= hi, "uniform_int: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(engine_());
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % span);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return lo + static_cast<std::int64_t>(x % span);
}

double Rng::rayleigh() {
  // 1 - U is in (0, 1], so the log is finite.
  return std::sqrt(-2.0 * std::log(1.0 - uniform()));
}

}  // namespace uwmmse
