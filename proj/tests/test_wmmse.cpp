#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "uwmmse/checks.hpp"
#include "uwmmse/wmmse.hpp"

using namespace uwmmse;

TEST_CASE("update_u by hand") {
  const ChannelMatrix one = test::channel(1, {1});
  CHECK(update_u(one, Vector{1})[0] == doctest::Approx(0.5));

  const ChannelMatrix ones = test::channel(2, {1, 1, 1, 1});
  CHECK(update_u(ones, Vector{0, 0}) == Vector{0, 0});
  const Vector u = update_u(ones, Vector{1, 1});
  CHECK(u[0] == doctest::Approx(1.0 / 3.0));
  CHECK(u[1] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("update_w by hand") {
  const ChannelMatrix one = test::channel(1, {1});
  CHECK(update_w_classical(one, Vector{0}, Vector{1})[0] == 1.0);
  CHECK(update_w_classical(one, Vector{0.5}, Vector{1})[0] == doctest::Approx(2.0));

  const ChannelMatrix ones = test::channel(2, {1, 1, 1, 1});
  const Vector w = update_w_classical(ones, Vector{1.0 / 3, 1.0 / 3}, Vector{1, 1});
  CHECK(w[0] == doctest::Approx(1.5));
  CHECK(w[1] == doctest::Approx(1.5));

  // u h v = 1 exactly: the guard fires.
  CHECK(test::error_code_of([&] { update_w_classical(one, Vector{1}, Vector{1}); }) ==
        test::code(ErrorCode::numerical_degeneracy));
}

TEST_CASE("mse_weights equals the classical update at u = update_u(v)") {
  const ChannelMatrix ch = checks::random_channel(8, 0.1, 3, 0);
  Vector v(8);
  for (std::size_t i = 0; i < 8; ++i) v[i] = 0.1 * static_cast<double>(i + 1);
  const Vector classical = update_w_classical(ch, update_u(ch, v), v);
  const Vector stable = mse_weights(ch, v);
  for (std::size_t i = 0; i < 8; ++i)
    CHECK(stable[i] == doctest::Approx(classical[i]).epsilon(1e-10));

  const ChannelMatrix ones = test::channel(2, {1, 1, 1, 1});
  const Vector w = mse_weights(ones, Vector{1, 1});
  CHECK(w[0] == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("update_v by hand") {
  const ChannelMatrix one = test::channel(1, {1});
  CHECK(update_v(one, Vector{0}, Vector{1}, 1.0)[0] == 0.0);
  CHECK(update_v(one, Vector{0.5}, Vector{2}, 1.0)[0] == 1.0);
  CHECK(update_v(one, Vector{0.5}, Vector{2}, 9.0)[0] == doctest::Approx(2.0));
}

TEST_CASE("wmmse on decoupled links goes to full power") {
  const auto [single, trace] = wmmse(test::channel(1, {0.3}, 0.2), 2.0);
  CHECK(single.p()[0] == doctest::Approx(2.0).epsilon(1e-15));
  REQUIRE(!trace.iterates.empty());
  CHECK(trace.iterates.front().v[0] * trace.iterates.front().v[0] ==
        doctest::Approx(2.0).epsilon(1e-15));

  const auto [diag, t2] = wmmse(test::channel(3, {1, 0, 0, 0, 2, 0, 0, 0, 0.5}, 0.1), 1.0);
  for (double p : diag.p()) CHECK(p == doctest::Approx(1.0));
}

TEST_CASE("wmmse objective never rises and the trace is complete") {
  const ChannelMatrix ch = checks::random_channel(10, 2.6e-5, 1, 0);
  const auto [p, trace] = wmmse(ch, 1.0, 100, 0.0);
  CHECK(trace.iterations_run == 100);
  CHECK(trace.iterates.size() == 100);
  CHECK(trace.objective_values.size() == 100);
  CHECK(trace.sum_rates.size() == 100);
  for (std::size_t k = 1; k < trace.objective_values.size(); ++k) {
    const double prev = trace.objective_values[k - 1];
    CHECK(trace.objective_values[k] <= prev + 1e-9 * std::abs(prev));
  }
  for (double x : p.p()) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }
}

TEST_CASE("tolerance stops early and truncation is the same loop") {
  const ChannelMatrix ch = checks::random_channel(6, 0.5, 2, 4);
  const auto [early, t_early] = wmmse(ch, 1.0, 100, 1e-6);
  CHECK(t_early.iterations_run < 100);

  const auto [full, t_full] = wmmse(ch, 1.0, 37, 0.0);
  const auto [trunc, t_trunc] = truncated_wmmse(ch, 1.0, 37);
  CHECK(full.p() == trunc.p());
  CHECK(t_trunc.iterations_run == 37);
  CHECK(truncated_wmmse_power(ch, 1.0, 37) == trunc.p());
  CHECK(wmmse_power(ch, 1.0, 100, 1e-6) == early.p());

  const auto [k1a, _a] = truncated_wmmse(ch, 1.0, 1);
  const auto [k1b, _b] = truncated_wmmse(ch, 1.0, 1);
  CHECK(k1a.p() == k1b.p());
}

TEST_CASE("truncation trails the converged solver on average") {
  double full = 0.0, trunc = 0.0;
  for (std::uint64_t i = 0; i < 32; ++i) {
    const ChannelMatrix ch = checks::random_channel(10, 2.6e-5, 5, i);
    full += sum_rate(ch, wmmse_power(ch, 1.0));
    trunc += sum_rate(ch, truncated_wmmse_power(ch, 1.0, 4));
  }
  CHECK(trunc < full);
}

TEST_CASE("two-link wmmse reaches the grid optimum or a stationary point") {
  for (std::uint64_t i = 0; i < 10; ++i) {
    const ChannelMatrix ch = checks::random_channel(2, 1.0, 8, i);
    const Vector p = wmmse_power(ch, 1.0);
    const double rate = sum_rate(ch, p);
    const double oracle = grid_oracle(ch, 1.0, 400).sum_rate;
    CHECK((rate >= 0.999 * oracle || stationarity_residual(ch, p, 1.0) <= 1e-4));
  }
}
