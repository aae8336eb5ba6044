#include "uwmmse/channel.hpp"

#include <cmath>
#include <sstream>

#include "uwmmse/rng.hpp"

namespace uwmmse {

double distance(Point a, Point b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

namespace {

Point draw_in_box(Rng& rng, Point center, double half_width) {
  return {rng.uniform(center.x - half_width, center.x + half_width),
          rng.uniform(center.y - half_width, center.y + half_width)};
}

bool too_close(const Topology& top, std::size_t rx_index) {
  for (const Point& t : top.tx)
    if (distance(t, top.rx[rx_index]) < kMinPairDistance) return true;
  return false;
}

// Redraws receiver i until it clears every transmitter by kMinPairDistance.
void place_receiver(Topology& top, std::size_t i, Rng& rng) {
  const double half = top.extent / 4.0;
  for (int attempt = 0; attempt <= kMaxReceiverRedraws; ++attempt) {
    top.rx[i] = draw_in_box(rng, top.tx[i], half);
    if (!too_close(top, i)) return;
  }
  std::ostringstream msg;
  msg << "receiver " << i << " could not be placed away from every transmitter after "
      << kMaxReceiverRedraws << " redraws";
  fail(ErrorCode::degenerate_geometry, msg.str());
}

// Receivers placed earlier may collide with transmitters placed later.
void recheck_all(Topology& top, Rng& rng) {
  for (std::size_t i = 0; i < top.size(); ++i)
    if (too_close(top, i)) place_receiver(top, i, rng);
}

}  // namespace

Topology gen_topology(std::size_t m, std::uint64_t seed) {
  require(m >= 1, "gen_topology: M must be at least 1");
  Rng rng(seed, Stream::topology);
  Topology top;
  top.extent = static_cast<double>(m);
  top.tx.resize(m);
  top.rx.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    top.tx[i] = draw_in_box(rng, {0.0, 0.0}, top.extent);
    top.rx[i] = draw_in_box(rng, top.tx[i], top.extent / 4.0);
  }
  recheck_all(top, rng);
  return top;
}

Topology apply_density(const Topology& top, double d, std::uint64_t seed) {
  require(d > 0.0 && std::isfinite(d), "apply_density: density factor must be positive");
  Rng rng(seed, Stream::density);
  Topology out;
  out.extent = top.extent;
  out.tx.reserve(top.size());
  for (Point t : top.tx) out.tx.push_back({t.x / d, t.y / d});
  out.rx.resize(top.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.rx[i] = draw_in_box(rng, out.tx[i], out.extent / 4.0);
  recheck_all(out, rng);
  return out;
}

Topology resize(const Topology& top, std::size_t n, std::uint64_t seed) {
  require(n >= 1, "resize: N must be at least 1");
  Topology out;
  out.extent = top.extent;
  if (n <= top.size()) {
    out.tx.assign(top.tx.begin(), top.tx.begin() + static_cast<std::ptrdiff_t>(n));
    out.rx.assign(top.rx.begin(), top.rx.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }
  Rng rng(seed, Stream::resize);
  out = top;
  for (std::size_t i = top.size(); i < n; ++i) {
    out.tx.push_back(draw_in_box(rng, {0.0, 0.0}, top.extent));
    out.rx.push_back(draw_in_box(rng, out.tx.back(), top.extent / 4.0));
  }
  // Only the appended receivers are redrawn; the original prefix stays intact.
  for (std::size_t i = top.size(); i < n; ++i)
    if (too_close(out, i)) place_receiver(out, i, rng);
  for (std::size_t i = 0; i < top.size(); ++i)
    if (too_close(out, i)) {
      std::ostringstream msg;
      msg << "resize: appended transmitter collides with original receiver " << i;
      fail(ErrorCode::degenerate_geometry, msg.str());
    }
  return out;
}

Matrix path_gain_matrix(const Topology& top) {
  require(top.tx.size() == top.rx.size() && !top.tx.empty(),
          "path_gain_matrix: tx and rx must be non-empty with equal length");
  const std::size_t m = top.size();
  Matrix g(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double dist = distance(top.tx[i], top.rx[j]);
      if (!(dist > 0.0)) {
        std::ostringstream msg;
        msg << "transmitter " << i << " and receiver " << j << " are co-located";
        fail(ErrorCode::degenerate_geometry, msg.str());
      }
      g(i, j) = std::pow(dist, -kPathLossExponent);
    }
  return g;
}

ChannelMatrix sample_channel(const Topology& top, double sigma, std::uint64_t seed,
                             Fading fading) {
  require(sigma > 0.0 && std::isfinite(sigma), "sample_channel: sigma must be positive");
  const Matrix gain = path_gain_matrix(top);
  const std::size_t m = top.size();
  Rng rng(seed, Stream::fading);
  ChannelMatrix ch{Matrix(m, m), sigma};
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double f = fading == Fading::rayleigh ? rng.rayleigh() : 1.0;
      ch.h(i, j) = gain(j, i) * f;
    }
  return ch;
}

void ChannelMatrix::validate() const {
  require(h.square() && h.rows() >= 1, "channel matrix must be square and non-empty");
  require(sigma > 0.0 && std::isfinite(sigma), "channel sigma must be positive");
  for (double x : h.data())
    require(x >= 0.0 && std::isfinite(x), "channel entries must be finite and nonnegative");
}

}  // namespace uwmmse
