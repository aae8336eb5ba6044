#include "uwmmse/rate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace uwmmse {

namespace {

void check_dims(const ChannelMatrix& ch, std::size_t n, const char* what) {
  if (!ch.h.square() || ch.h.rows() != n) {
    std::ostringstream msg;
    msg << what << ": expected length " << ch.h.rows() << ", got " << n;
    fail(ErrorCode::invalid_argument, msg.str());
  }
}

}  // namespace

PowerAllocation::PowerAllocation(Vector p, double p_max) : p_(std::move(p)), p_max_(p_max) {
  require(p_max_ > 0.0 && std::isfinite(p_max_), "p_max must be positive");
  for (std::size_t i = 0; i < p_.size(); ++i)
    if (!(p_[i] >= 0.0 && p_[i] <= p_max_)) {
      std::ostringstream msg;
      msg << "power " << i << " = " << p_[i] << " outside [0, " << p_max_ << "]";
      fail(ErrorCode::invalid_argument, msg.str());
    }
}

Vector link_rates(const ChannelMatrix& ch, std::span<const double> p) {
  const std::size_t m = p.size();
  check_dims(ch, m, "link_rates");
  const double noise = ch.noise_power();
  Vector c(m);
  for (std::size_t i = 0; i < m; ++i) {
    double interference = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) interference += ch.h(i, j) * ch.h(i, j) * p[j];
    const double signal = ch.h(i, i) * ch.h(i, i) * p[i];
    c[i] = std::log2(1.0 + signal / (noise + interference));
  }
  return c;
}

double sum_rate(const ChannelMatrix& ch, std::span<const double> p) {
  const Vector c = link_rates(ch, p);
  double total = 0.0;
  for (double x : c) total += x;
  return total;
}

double wmmse_objective(const ChannelMatrix& ch, std::span<const double> u,
                       std::span<const double> v, std::span<const double> w) {
  const std::size_t m = u.size();
  check_dims(ch, m, "wmmse_objective");
  require(v.size() == m && w.size() == m, "wmmse_objective: u, v, w lengths differ");
  const double noise = ch.noise_power();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (!(w[i] > 0.0)) {
      std::ostringstream msg;
      msg << "wmmse_objective: weight w_" << i << " = " << w[i] << " is not positive";
      fail(ErrorCode::invalid_argument, msg.str());
    }
    const double direct = 1.0 - u[i] * ch.h(i, i) * v[i];
    double e = direct * direct + noise * u[i] * u[i];
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) e += u[i] * u[i] * ch.h(i, j) * ch.h(i, j) * v[j] * v[j];
    total += w[i] * e - std::log(w[i]);
  }
  return total;
}

GridOptimum grid_oracle(const ChannelMatrix& ch, double p_max, std::size_t grid_n) {
  const std::size_t m = ch.size();
  if (m > kGridOracleMaxSize) {
    std::ostringstream msg;
    msg << "grid_oracle supports M <= " << kGridOracleMaxSize << ", got M = " << m;
    fail(ErrorCode::unsupported_size, msg.str());
  }
  require(grid_n >= 1, "grid_oracle: grid_n must be at least 1");
  require(p_max > 0.0, "grid_oracle: p_max must be positive");

  std::vector<std::size_t> idx(m, 0);
  Vector p(m, 0.0);
  GridOptimum best{p, -1.0};
  const double step = p_max / static_cast<double>(grid_n);
  while (true) {
    for (std::size_t i = 0; i < m; ++i)
      p[i] = idx[i] == grid_n ? p_max : step * static_cast<double>(idx[i]);
    const double value = sum_rate(ch, p);
    if (value > best.sum_rate) best = {p, value};
    std::size_t k = 0;
    while (k < m && ++idx[k] > grid_n) idx[k++] = 0;
    if (k == m) break;
  }
  return best;
}

Vector sum_rate_gradient(const ChannelMatrix& ch, std::span<const double> p) {
  const std::size_t m = p.size();
  check_dims(ch, m, "sum_rate_gradient");
  const double noise = ch.noise_power();
  // c_i = log2(T_i) - log2(N_i) with T_i the total received power and N_i
  // the noise-plus-interference.
  Vector total(m), interference(m);
  for (std::size_t i = 0; i < m; ++i) {
    double t = noise, n = noise;
    for (std::size_t j = 0; j < m; ++j) {
      const double g = ch.h(i, j) * ch.h(i, j) * p[j];
      t += g;
      if (j != i) n += g;
    }
    total[i] = t;
    interference[i] = n;
  }
  Vector grad(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double g = ch.h(i, k) * ch.h(i, k);
      acc += g / total[i];
      if (k != i) acc -= g / interference[i];
    }
    grad[k] = acc / std::numbers::ln2;
  }
  return grad;
}

double stationarity_residual(const ChannelMatrix& ch, std::span<const double> p,
                             double p_max) {
  const Vector grad = sum_rate_gradient(ch, p);
  double grad_norm = 0.0, step_norm = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    grad_norm = std::max(grad_norm, std::abs(grad[i]));
    const double projected = std::clamp(p[i] + kStationarityStep * grad[i], 0.0, p_max);
    step_norm = std::max(step_norm, std::abs(p[i] - projected));
  }
  return step_norm / (kStationarityStep * std::max(1.0, grad_norm));
}

}  // namespace uwmmse
