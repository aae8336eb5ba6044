#include "uwmmse/wmmse.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace uwmmse {

Vector update_u(const ChannelMatrix& ch, std::span<const double> v) {
  const std::size_t m = v.size();
  require(ch.size() == m, "update_u: dimension mismatch");
  const double noise = ch.noise_power();
  Vector u(m);
  for (std::size_t i = 0; i < m; ++i) {
    double denom = noise;
    for (std::size_t j = 0; j < m; ++j) denom += ch.h(i, j) * ch.h(i, j) * v[j] * v[j];
    u[i] = ch.h(i, i) * v[i] / denom;
  }
  return u;
}

Vector update_w_classical(const ChannelMatrix& ch, std::span<const double> u,
                          std::span<const double> v) {
  const std::size_t m = u.size();
  require(ch.size() == m && v.size() == m, "update_w_classical: dimension mismatch");
  Vector w(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double denom = 1.0 - u[i] * ch.h(i, i) * v[i];
    if (!(denom > kEpsW)) {
      std::ostringstream msg;
      msg << "w-update denominator 1 - u h v = " << denom << " at node " << i;
      fail(ErrorCode::numerical_degeneracy, msg.str());
    }
    w[i] = 1.0 / denom;
  }
  return w;
}

Vector mse_weights(const ChannelMatrix& ch, std::span<const double> v) {
  const std::size_t m = v.size();
  require(ch.size() == m, "mse_weights: dimension mismatch");
  const double noise = ch.noise_power();
  Vector w(m);
  for (std::size_t i = 0; i < m; ++i) {
    double interference = noise;
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) interference += ch.h(i, j) * ch.h(i, j) * v[j] * v[j];
    const double signal = ch.h(i, i) * ch.h(i, i) * v[i] * v[i];
    w[i] = (interference + signal) / interference;
  }
  return w;
}

Vector update_v(const ChannelMatrix& ch, std::span<const double> u, std::span<const double> w,
                double p_max) {
  const std::size_t m = u.size();
  require(ch.size() == m && w.size() == m, "update_v: dimension mismatch");
  const double v_max = std::sqrt(p_max);
  Vector v(m);
  for (std::size_t i = 0; i < m; ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) denom += ch.h(j, i) * ch.h(j, i) * u[j] * u[j] * w[j];
    const double raw = u[i] * ch.h(i, i) * w[i] / (denom + kEpsV);
    v[i] = std::clamp(raw, 0.0, v_max);
  }
  return v;
}

namespace {

Vector squared(const Vector& v) {
  Vector p(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = v[i] * v[i];
  return p;
}

// Clamping guards against v_max^2 rounding a hair past p_max.
Vector powers_from(const Vector& v, double p_max) {
  Vector p = squared(v);
  for (double& x : p) x = std::min(x, p_max);
  return p;
}

template <class OnSweep>
Vector run_sweeps(const ChannelMatrix& ch, double p_max, std::size_t max_iter, double tol,
                  bool use_tol, OnSweep&& on_sweep) {
  require(p_max > 0.0, "p_max must be positive");
  require(max_iter >= 1, "iteration count must be at least 1");
  Vector v(ch.size(), std::sqrt(p_max));
  double previous = 0.0;
  for (std::size_t k = 0; k < max_iter; ++k) {
    Vector u = update_u(ch, v);
    Vector w = mse_weights(ch, v);
    v = update_v(ch, u, w, p_max);
    const double objective = wmmse_objective(ch, u, v, w);
    on_sweep(u, v, w, objective);
    if (use_tol && k > 0 && std::abs(objective - previous) < tol * std::abs(objective)) break;
    previous = objective;
  }
  return v;
}

}  // namespace

std::pair<PowerAllocation, SolverTrace> wmmse(const ChannelMatrix& ch, double p_max,
                                              std::size_t max_iter, double tol) {
  require(tol >= 0.0, "wmmse: tol must be nonnegative");
  SolverTrace trace;
  const Vector v = run_sweeps(
      ch, p_max, max_iter, tol, true,
      [&](const Vector& u, const Vector& vk, const Vector& w, double objective) {
        trace.iterates.push_back({u, vk, w});
        trace.objective_values.push_back(objective);
        trace.sum_rates.push_back(sum_rate(ch, squared(vk)));
        ++trace.iterations_run;
      });
  return {PowerAllocation(powers_from(v, p_max), p_max), std::move(trace)};
}

std::pair<PowerAllocation, SolverTrace> truncated_wmmse(const ChannelMatrix& ch, double p_max,
                                                        std::size_t k) {
  return wmmse(ch, p_max, k, 0.0);
}

Vector wmmse_power(const ChannelMatrix& ch, double p_max, std::size_t max_iter, double tol) {
  require(tol >= 0.0, "wmmse: tol must be nonnegative");
  const Vector v = run_sweeps(ch, p_max, max_iter, tol, true,
                              [](const Vector&, const Vector&, const Vector&, double) {});
  return powers_from(v, p_max);
}

Vector truncated_wmmse_power(const ChannelMatrix& ch, double p_max, std::size_t k) {
  const Vector v = run_sweeps(ch, p_max, k, 0.0, false,
                              [](const Vector&, const Vector&, const Vector&, double) {});
  return powers_from(v, p_max);
}

}  // namespace uwmmse
