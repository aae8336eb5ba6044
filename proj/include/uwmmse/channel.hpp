#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "uwmmse/matrix.hpp"

namespace uwmmse {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

double distance(Point a, Point b) noexcept;

// Transmitter/receiver placement for M transceiver pairs. `extent` is the
// placement half-width (the original network size M); it is carried through
// density scaling and resizing unchanged.
struct Topology {
  std::vector<Point> tx;
  std::vector<Point> rx;
  double extent = 0.0;

  std::size_t size() const noexcept { return tx.size(); }
  friend bool operator==(const Topology&, const Topology&) = default;
};

// Amplitude channel gains. h(i, j) is the gain from transmitter j into
// receiver r(i); the diagonal holds the direct links.
struct ChannelMatrix {
  Matrix h;
  double sigma = 1.0;

  std::size_t size() const noexcept { return h.rows(); }
  double noise_power() const noexcept { return sigma * sigma; }

  // Validates squareness, nonnegative entries, sigma > 0.
  void validate() const;
};

inline constexpr double kPathLossExponent = 2.2;
inline constexpr double kMinPairDistance = 1e-6;
inline constexpr int kMaxReceiverRedraws = 100;

// Transmitters uniform on [-M, M]^2, receivers uniform in the box of
// half-width M/4 around their transmitter.
Topology gen_topology(std::size_t m, std::uint64_t seed);

// Divides transmitter coordinates by d and redraws every receiver around its
// scaled transmitter (box half-width extent/4).
Topology apply_density(const Topology& top, double d, std::uint64_t seed);

// Keeps the first n pairs, or appends n - M fresh pairs placed with the
// original extent.
Topology resize(const Topology& top, std::size_t n, std::uint64_t seed);

// Entry (i, j) = |t_i - r_j|^-2.2; rows index transmitters.
Matrix path_gain_matrix(const Topology& top);

enum class Fading {
  rayleigh,
  unit,  // every fading draw replaced by 1; test hook
};

// h(i, j) = pathgain(j, i) * f_ij with f_ij ~ Rayleigh(1) i.i.d., drawn in
// row-major order of h.
ChannelMatrix sample_channel(const Topology& top, double sigma, std::uint64_t seed,
                             Fading fading = Fading::rayleigh);

}  // namespace uwmmse
