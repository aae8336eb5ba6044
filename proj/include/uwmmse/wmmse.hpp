#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "uwmmse/rate.hpp"

namespace uwmmse {

inline constexpr double kEpsV = 1e-12;
inline constexpr double kEpsW = 1e-12;
inline constexpr std::size_t kDefaultMaxIter = 100;
inline constexpr double kDefaultTol = 1e-6;

struct Iterate {
  Vector u, v, w;
};

struct SolverTrace {
  std::vector<Iterate> iterates;
  std::vector<double> objective_values;
  std::vector<double> sum_rates;  // sum_rate(H, v^2) after each sweep
  std::size_t iterations_run = 0;
};

// u_i = h_ii v_i / (sigma^2 + sum_j h_ij^2 v_j^2), j = i included.
Vector update_u(const ChannelMatrix& ch, std::span<const double> v);

// w_i = 1 / (1 - u_i h_ii v_i); throws numerical_degeneracy when the
// denominator drops to kEpsW or below.
Vector update_w_classical(const ChannelMatrix& ch, std::span<const double> u,
                          std::span<const double> v);

// The same weights when u = update_u(v), evaluated without cancellation:
//   1 / (1 - u_i h_ii v_i) = (sigma^2 + sum_j h_ij^2 v_j^2) / (sigma^2 + sum_{j!=i} h_ij^2 v_j^2).
// The subtraction form loses every digit once an SINR nears 1e12, which a
// link with its interferers switched off reaches at sigma = 2.6e-5. The
// denominator here is at least sigma^2, so no guard is needed. The solvers
// and the unfolded model use this form.
Vector mse_weights(const ChannelMatrix& ch, std::span<const double> v);

// v_i = clamp(u_i h_ii w_i / (sum_j h_ji^2 u_j^2 w_j + eps), 0, sqrt(p_max)).
// The denominator runs down column i: channel states out of transmitter i.
Vector update_v(const ChannelMatrix& ch, std::span<const double> u, std::span<const double> w,
                double p_max);

// Block coordinate descent from v = sqrt(p_max) 1. Stops when the relative
// objective change drops below tol, or after max_iter sweeps.
std::pair<PowerAllocation, SolverTrace> wmmse(const ChannelMatrix& ch, double p_max,
                                              std::size_t max_iter = kDefaultMaxIter,
                                              double tol = kDefaultTol);

// Exactly k sweeps, no convergence test.
std::pair<PowerAllocation, SolverTrace> truncated_wmmse(const ChannelMatrix& ch, double p_max,
                                                        std::size_t k);

// Trace-free variants for timing and bulk evaluation; same arithmetic.
Vector wmmse_power(const ChannelMatrix& ch, double p_max, std::size_t max_iter = kDefaultMaxIter,
                   double tol = kDefaultTol);
Vector truncated_wmmse_power(const ChannelMatrix& ch, double p_max, std::size_t k);

}  // namespace uwmmse
