#include "uwmmse/checks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "uwmmse/model.hpp"
#include "uwmmse/rate.hpp"
#include "uwmmse/rng.hpp"
#include "uwmmse/trainer.hpp"
#include "uwmmse/wmmse.hpp"

namespace uwmmse::checks {

namespace {

constexpr double kLowNoise = 2.6e-5;

CheckResult finish(CheckResult r, const std::string& unit) {
  r.passed = r.worst <= r.limit;
  std::ostringstream os;
  os << r.instances << " instances";
  if (r.skipped) os << ", " << r.skipped << " skipped";
  os << ", worst " << unit << ' ' << r.worst << " (limit " << r.limit << ")";
  if (!r.detail.empty()) os << "; " << r.detail;
  r.detail = os.str();
  return r;
}

std::vector<std::size_t> random_permutation(std::size_t m, Rng& rng) {
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = m; i > 1; --i)
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  return perm;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double empirical_loss_plain(std::span<const ChannelMatrix> batch, const ModelParams& theta) {
  double total = 0.0;
  for (const auto& ch : batch) total += sum_rate(ch, uwmmse_power(ch, theta));
  return -total / static_cast<double>(batch.size());
}

}  // namespace

ChannelMatrix random_channel(std::size_t m, double sigma, std::uint64_t seed, std::uint64_t index) {
  const Topology top = gen_topology(m, derive_seed(seed, Stream::topology, index));
  return sample_channel(top, sigma, derive_seed(seed, Stream::fading, index));
}

CheckResult monotone_descent(std::size_t instances, std::uint64_t seed, double rel_tol) {
  CheckResult r{"monotone-descent", false, 0.0, rel_tol, instances, 0, {}};
  const std::size_t sizes[] = {5, 10, 20};
  const double sigmas[] = {kLowNoise, 1.0};
  for (std::size_t n = 0; n < instances; ++n) {
    const ChannelMatrix ch = random_channel(sizes[n % 3], sigmas[(n / 3) % 2], seed, n);
    const auto [p, trace] = wmmse(ch, 1.0, kDefaultMaxIter, 0.0);
    const auto& obj = trace.objective_values;
    for (std::size_t k = 1; k < obj.size(); ++k) {
      const double rise = (obj[k] - obj[k - 1]) / std::max(std::abs(obj[k - 1]), 1e-300);
      r.worst = std::max(r.worst, rise);
    }
  }
  return finish(r, "relative rise");
}

CheckResult local_optimality(std::size_t instances, std::uint64_t seed,
                             const std::vector<double>& sigmas, std::size_t grid_n,
                             double residual_tol) {
  // worst counts instances satisfying neither condition
  CheckResult r{"local-optimality", false, 0.0, 0.0, instances, 0, {}};
  require(!sigmas.empty(), "local_optimality: no noise levels");
  std::vector<std::size_t> failures(sigmas.size(), 0), tried(sigmas.size(), 0);
  std::size_t by_grid = 0, by_residual = 0;
  double worst_residual = 0.0;
  for (std::size_t n = 0; n < instances; ++n) {
    const std::size_t s = n % sigmas.size();
    ++tried[s];
    const ChannelMatrix ch = random_channel(2, sigmas[s], seed, n);
    const auto [p, trace] = wmmse(ch, 1.0, kDefaultMaxIter, 0.0);
    const double value = sum_rate(ch, p);
    const GridOptimum grid = grid_oracle(ch, 1.0, grid_n);
    if (value >= 0.999 * grid.sum_rate) {
      ++by_grid;
      continue;
    }
    const double residual = stationarity_residual(ch, p.p(), 1.0);
    if (residual <= residual_tol) {
      ++by_residual;
    } else {
      worst_residual = std::max(worst_residual, residual);
      ++failures[s];
      r.worst += 1.0;
    }
  }
  std::ostringstream os;
  os << by_grid << " within 0.1% of grid, " << by_residual << " stationary only";
  for (std::size_t s = 0; s < sigmas.size(); ++s)
    os << ", sigma " << sigmas[s] << ": " << failures[s] << "/" << tried[s] << " failing";
  if (r.worst > 0) os << ", largest residual " << worst_residual;
  r.detail = os.str();
  return finish(r, "failing instances");
}

CheckResult reduction_anchor(std::size_t instances, std::uint64_t seed, double tol) {
  CheckResult r{"reduction-anchor", false, 0.0, tol, instances, 0, {}};
  const std::size_t sizes[] = {3, 10, 20};
  const double sigmas[] = {kLowNoise, 1.0};
  for (std::size_t n = 0; n < instances; ++n) {
    const double sigma = sigmas[n % 2];
    const ChannelMatrix ch = random_channel(sizes[n % 3], sigma, seed, n);
    const ModelParams theta = init_model(kDefaultLayers, 1.0, sigma, derive_seed(seed, Stream::init, n));
    r.worst = std::max(r.worst, max_abs_diff(uwmmse_power(ch, theta),
                                             truncated_wmmse_power(ch, 1.0, kDefaultLayers)));
  }
  return finish(r, "abs deviation");
}

CheckResult permutation_equivariance(std::size_t instances, std::uint64_t seed, double tol) {
  CheckResult r{"permutation-equivariance", false, 0.0, tol, instances, 0, {}};
  const std::size_t sizes[] = {4, 10, 20};
  const double sigmas[] = {kLowNoise, 1.0};
  double worst_wmmse = 0.0, worst_uwmmse = 0.0;
  for (std::size_t n = 0; n < instances; ++n) {
    const double sigma = sigmas[n % 2];
    ChannelMatrix ch = random_channel(sizes[n % 3], sigma, seed, n);
    Rng rng(seed, Stream::evaluation, n);
    const auto perm = random_permutation(ch.size(), rng);
    ChannelMatrix permuted{permute_symmetric(ch.h, perm), sigma};
    const ModelParams theta = random_model(kDefaultLayers, 1.0, sigma, derive_seed(seed, Stream::init, n));

    worst_wmmse = std::max(worst_wmmse, max_abs_diff(wmmse_power(permuted, 1.0),
                                                     permute(wmmse_power(ch, 1.0), perm)));
    worst_uwmmse = std::max(worst_uwmmse, max_abs_diff(uwmmse_power(permuted, theta),
                                                       permute(uwmmse_power(ch, theta), perm)));
  }
  r.worst = std::max(worst_wmmse, worst_uwmmse);
  std::ostringstream os;
  os << "wmmse " << worst_wmmse << ", uwmmse " << worst_uwmmse;
  r.detail = os.str();
  return finish(r, "abs deviation");
}

CheckResult gradient_check(std::size_t instances, std::uint64_t seed, double tol) {
  // Relative error |ad - fd| / max(|ad|, |fd|, floor); the floor keeps exact
  // zeros (dead relu units) from dividing by zero.
  constexpr double kFloor = 1e-8;
  constexpr double kMinKinkMargin = 1e-3;
  CheckResult r{"gradient-check", false, 0.0, tol, 0, 0, {}};
  const double sigmas[] = {1.0, 0.1};
  std::uint64_t index = 0;
  std::size_t params = 0;
  while (r.instances < instances) {
    const std::uint64_t n = index++;
    const double sigma = sigmas[n % 2];
    const ChannelMatrix ch = random_channel(3, sigma, seed, n);
    const ModelParams theta = random_model(2, 1.0, sigma, derive_seed(seed, Stream::init, n));
    if (forward(ch, theta).second.kink_margin < kMinKinkMargin) {
      ++r.skipped;
      continue;
    }
    ++r.instances;
    const std::vector<ChannelMatrix> batch{ch};
    const LossGrad lg = loss_and_grad(batch, theta);
    const std::vector<double> flat = theta.flatten();
    params = flat.size();
    for (std::size_t j = 0; j < flat.size(); ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(flat[j]));
      ModelParams plus = theta, minus = theta;
      std::vector<double> fp = flat, fm = flat;
      fp[j] += h;
      fm[j] -= h;
      plus.assign(fp);
      minus.assign(fm);
      const double fd = (empirical_loss_plain(batch, plus) - empirical_loss_plain(batch, minus)) / (2 * h);
      const double ad = lg.grad[j];
      const double err = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), kFloor});
      r.worst = std::max(r.worst, err);
    }
  }
  r.detail = std::to_string(params) + " parameters each";
  return finish(r, "relative error");
}

CheckResult feasibility_fuzz(std::size_t passes, std::uint64_t seed) {
  // worst counts violations; degenerate-w aborts are reported separately
  CheckResult r{"feasibility", false, 0.0, 0.0, passes, 0, {}};
  const double p_maxes[] = {0.5, 1.0, 2.0};
  for (std::size_t n = 0; n < passes; ++n) {
    Rng rng(seed, Stream::evaluation, n);
    const auto m = static_cast<std::size_t>(rng.uniform_int(1, 20));
    const double sigma = std::pow(10.0, rng.uniform(-5.0, 0.0));
    const double p_max = p_maxes[n % 3];
    const auto k = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const double scale = std::pow(10.0, rng.uniform(-1.0, 1.0));
    const ChannelMatrix ch = random_channel(m, sigma, seed, n);
    ModelParams theta = random_model(k, p_max, sigma, derive_seed(seed, Stream::init, n));
    std::vector<double> flat = theta.flatten();
    for (double& x : flat) x *= scale;
    theta.assign(flat);
    try {
      for (double p : uwmmse_power(ch, theta))
        if (!(p >= 0.0 && p <= p_max)) r.worst += 1.0;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::numerical_degeneracy) throw;
      ++r.skipped;
    }
  }
  return finish(r, "violations");
}

}  // namespace uwmmse::checks
