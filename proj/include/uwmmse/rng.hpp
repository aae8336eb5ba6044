#pragma once

#include <cstdint>
#include <random>

namespace uwmmse {

// Seed splitting.
//
// Every random quantity in the project is drawn from a std::mt19937_64 engine
// whose seed is derived as
//
//     derive_seed(root, stream, index) = mix(mix(root ^ tag(stream)) + index)
//
// where mix is the SplitMix64 finalizer. Streams are independent substreams
// (topology placement, receiver redraws, fading, training batches, held-out
// data, parameter init, evaluation data). mt19937_64's output sequence is fixed
// by the standard, and the conversions below avoid the implementation-defined
// std:: distributions, so draws are identical across standard libraries.
enum class Stream : std::uint64_t {
  topology = 0x746f706f6c6f6779ULL,
  receiver = 0x7265636569766572ULL,
  fading = 0x666164696e670000ULL,
  training = 0x747261696e696e67ULL,
  holdout = 0x686f6c646f757400ULL,
  init = 0x696e697400000000ULL,
  evaluation = 0x6576616c75617465ULL,
  resize = 0x726573697a650000ULL,
  density = 0x64656e7369747900ULL,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, Stream stream,
                                    std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(root ^ static_cast<std::uint64_t>(stream)) + index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t root, Stream stream, std::uint64_t index = 0)
      : engine_(derive_seed(root, stream, index)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] (inclusive), by rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Rayleigh with scale 1: density x exp(-x^2/2), by inverse CDF.
  double rayleigh();

 private:
  std::mt19937_64 engine_;
};

}  // namespace uwmmse
