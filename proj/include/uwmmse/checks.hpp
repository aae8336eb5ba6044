#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "uwmmse/channel.hpp"

namespace uwmmse::checks {

// Outcome of one invariant suite. `worst` is the suite's own figure of merit
// (largest deviation, error or violation count) and `limit` its threshold.
struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;
  double limit = 0.0;
  std::size_t instances = 0;
  std::size_t skipped = 0;
  std::string detail;
};

// Channel on a fresh geometric topology; instance `index` of stream `seed`.
ChannelMatrix random_channel(std::size_t m, double sigma, std::uint64_t seed, std::uint64_t index);

// Objective along classical sweeps never rises by more than rel_tol.
CheckResult monotone_descent(std::size_t instances, std::uint64_t seed, double rel_tol = 1e-9);

// M = 2: WMMSE reaches 0.999 of the grid optimum or is stationary. Instances
// cycle through `sigmas`.
CheckResult local_optimality(std::size_t instances, std::uint64_t seed,
                             const std::vector<double>& sigmas, std::size_t grid_n = 400,
                             double residual_tol = 1e-4);

// Identity-initialized model against truncated WMMSE with as many sweeps.
CheckResult reduction_anchor(std::size_t instances, std::uint64_t seed, double tol = 1e-12);

// Relabelling the pairs permutes the allocation; both solvers.
CheckResult permutation_equivariance(std::size_t instances, std::uint64_t seed, double tol = 1e-9);

// Tape gradient against central differences of the plain forward pass.
CheckResult gradient_check(std::size_t instances, std::uint64_t seed, double tol = 1e-4);

// Random (H, theta) forward passes stay inside [0, p_max].
CheckResult feasibility_fuzz(std::size_t passes, std::uint64_t seed);

}  // namespace uwmmse::checks
