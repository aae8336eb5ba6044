#pragma once

#include <cstddef>
#include <span>

#include "uwmmse/channel.hpp"

namespace uwmmse {

// Per-transmitter power vector with the box constraint 0 <= p_i <= p_max
// enforced at construction.
class PowerAllocation {
 public:
  PowerAllocation(Vector p, double p_max);

  const Vector& p() const noexcept { return p_; }
  double p_max() const noexcept { return p_max_; }
  std::size_t size() const noexcept { return p_.size(); }

 private:
  Vector p_;
  double p_max_;
};

// c_i = log2(1 + h_ii^2 p_i / (sigma^2 + sum_{j != i} h_ij^2 p_j)).
Vector link_rates(const ChannelMatrix& ch, std::span<const double> p);
double sum_rate(const ChannelMatrix& ch, std::span<const double> p);

inline Vector link_rates(const ChannelMatrix& ch, const PowerAllocation& p) {
  return link_rates(ch, p.p());
}
inline double sum_rate(const ChannelMatrix& ch, const PowerAllocation& p) {
  return sum_rate(ch, p.p());
}

// Sum over i of w_i e_i - ln w_i, where
// e_i = (1 - u_i h_ii v_i)^2 + sigma^2 u_i^2 + sum_{j != i} u_i^2 h_ij^2 v_j^2.
double wmmse_objective(const ChannelMatrix& ch, std::span<const double> u,
                       std::span<const double> v, std::span<const double> w);

struct GridOptimum {
  Vector p;
  double sum_rate = 0.0;
};

inline constexpr std::size_t kGridOracleMaxSize = 3;

// Exhaustive search over {0, p_max/n, ..., p_max}^M. First maximum in
// lexicographic grid order wins ties.
GridOptimum grid_oracle(const ChannelMatrix& ch, double p_max, std::size_t grid_n);

// Analytic gradient of the sum-rate with respect to p.
Vector sum_rate_gradient(const ChannelMatrix& ch, std::span<const double> p);

inline constexpr double kStationarityStep = 1e-3;

// |p - Proj(p + g * grad)|_inf / (g * max(1, |grad|_inf)) with g = 1e-3.
double stationarity_residual(const ChannelMatrix& ch, std::span<const double> p,
                             double p_max);

}  // namespace uwmmse
