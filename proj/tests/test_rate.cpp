#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "uwmmse/rate.hpp"

using namespace uwmmse;

TEST_CASE("link rates and sum-rate by hand") {
  const ChannelMatrix eye = test::channel(2, {1, 0, 0, 1});
  const ChannelMatrix ones = test::channel(2, {1, 1, 1, 1});
  const Vector p{1, 1};

  const Vector c = link_rates(eye, p);
  CHECK(c[0] == doctest::Approx(1.0));
  CHECK(c[1] == doctest::Approx(1.0));
  CHECK(sum_rate(eye, p) == doctest::Approx(2.0));

  const Vector c1 = link_rates(ones, p);
  CHECK(c1[0] == doctest::Approx(0.584963).epsilon(1e-6));
  CHECK(c1[1] == doctest::Approx(0.584963).epsilon(1e-6));
  CHECK(sum_rate(ones, p) == doctest::Approx(1.169925).epsilon(1e-6));

  const Vector zero{0, 0};
  CHECK(link_rates(ones, zero) == Vector{0, 0});

  CHECK(sum_rate(test::channel(1, {1}), Vector{3}) == doctest::Approx(2.0));
  CHECK(test::error_code_of([&] { link_rates(eye, Vector{1}); }) ==
        test::code(ErrorCode::invalid_argument));
}

TEST_CASE("power allocation enforces the box") {
  CHECK_NOTHROW(PowerAllocation({0.0, 1.0}, 1.0));
  CHECK(test::error_code_of([] { PowerAllocation({1.5}, 1.0); }) ==
        test::code(ErrorCode::invalid_argument));
  CHECK(test::error_code_of([] { PowerAllocation({-0.1}, 1.0); }) ==
        test::code(ErrorCode::invalid_argument));
}

TEST_CASE("wmmse objective by hand") {
  const ChannelMatrix ones = test::channel(3, Vector(9, 1.0));
  CHECK(wmmse_objective(ones, Vector{0, 0, 0}, Vector{0.3, 2, 5}, Vector{1, 1, 1}) ==
        doctest::Approx(3.0));

  const ChannelMatrix one = test::channel(1, {1});
  CHECK(wmmse_objective(one, Vector{0.5}, Vector{1}, Vector{2}) ==
        doctest::Approx(1.0 - std::log(2.0)).epsilon(1e-12));
  CHECK(wmmse_objective(one, Vector{0.5}, Vector{1}, Vector{2}) ==
        doctest::Approx(0.306853).epsilon(1e-6));

  CHECK(test::error_code_of([&] { wmmse_objective(one, Vector{0.5}, Vector{1}, Vector{0}); }) ==
        test::code(ErrorCode::invalid_argument));
}

TEST_CASE("grid oracle") {
  const GridOptimum single = grid_oracle(test::channel(1, {0.7}, 0.3), 2.0, 50);
  CHECK(single.p == Vector{2.0});

  const GridOptimum diag = grid_oracle(test::channel(2, {1, 0, 0, 2}, 0.1), 1.0, 40);
  CHECK(diag.p == Vector{1.0, 1.0});
  CHECK(diag.sum_rate == doctest::Approx(sum_rate(test::channel(2, {1, 0, 0, 2}, 0.1), diag.p)));

  // Strong mutual interference: one link on, the other off.
  const ChannelMatrix clash = test::channel(2, {1, 1, 1, 1}, 0.01);
  const GridOptimum best = grid_oracle(clash, 1.0, 100);
  CHECK(std::min(best.p[0], best.p[1]) == 0.0);
  CHECK(std::max(best.p[0], best.p[1]) == 1.0);

  CHECK(test::error_code_of([] { grid_oracle(test::channel(4, Vector(16, 1.0)), 1.0, 4); }) ==
        test::code(ErrorCode::unsupported_size));
}

TEST_CASE("stationarity residual") {
  const ChannelMatrix one = test::channel(1, {2}, 0.5);
  CHECK(stationarity_residual(one, Vector{1.0}, 1.0) == 0.0);
  CHECK(stationarity_residual(one, Vector{0.5}, 1.0) > 0.0);

  // Decoupled links are stationary only at the full-power corner.
  const ChannelMatrix diag = test::channel(2, {1, 0, 0, 1}, 1.0);
  CHECK(stationarity_residual(diag, Vector{1, 1}, 1.0) == 0.0);
  CHECK(stationarity_residual(diag, Vector{0.2, 0.7}, 1.0) > 0.0);
}

TEST_CASE("sum-rate gradient matches central differences") {
  const ChannelMatrix ch = test::channel(3, {1.0, 0.3, 0.2, 0.4, 0.8, 0.1, 0.25, 0.5, 1.2}, 0.3);
  const Vector p{0.4, 0.7, 0.2};
  const Vector g = sum_rate_gradient(ch, p);
  for (std::size_t i = 0; i < 3; ++i) {
    Vector hi = p, lo = p;
    hi[i] += 1e-6;
    lo[i] -= 1e-6;
    const double fd = (sum_rate(ch, hi) - sum_rate(ch, lo)) / 2e-6;
    CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}
