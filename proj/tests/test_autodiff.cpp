#include <doctest.h>

#include <cmath>
#include <functional>

#include "helpers.hpp"
#include "uwmmse/autodiff.hpp"
#include "uwmmse/rng.hpp"

using namespace uwmmse;
using namespace uwmmse::ad;

namespace {

// Central differences of a scalar function of a flat vector.
std::vector<double> numeric_grad(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double up = f(x);
    x[i] = x0 - h;
    const double down = f(x);
    x[i] = x0;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("tensor shape invariants") {
  CHECK(test::error_code_of([] { Tensor({2, 3}, std::vector<double>(5)); }) ==
        test::code(ErrorCode::invalid_argument));
  const Tensor m = Tensor::zeros({2, 3});
  CHECK(m.size() == 6);
  CHECK(m.rank() == 2);
  CHECK(Tensor::scalar(4).item() == 4.0);
  CHECK(test::error_code_of([&] { (void)m.item(); }) == test::code(ErrorCode::invalid_argument));
}

TEST_CASE("scalar derivatives") {
  SUBCASE("square") {
    Tape t;
    Var x = t.leaf(Tensor::scalar(3, true));
    t.backward(square(x));
    CHECK(t.grad(x)[0] == 6.0);
  }
  SUBCASE("natural log") {
    Tape t;
    Var x = t.leaf(Tensor::scalar(2, true));
    t.backward(ln(x));
    CHECK(t.grad(x)[0] == 0.5);
  }
  SUBCASE("identity loss") {
    Tape t;
    Var x = t.leaf(Tensor::scalar(-1.5, true));
    t.backward(x);
    CHECK(t.grad(x)[0] == 1.0);
  }
  SUBCASE("product") {
    Tape t;
    Var x = t.leaf(Tensor::scalar(2, true));
    Var y = t.leaf(Tensor::scalar(3, true));
    t.backward(x * y);
    CHECK(t.grad(x)[0] == 3.0);
    CHECK(t.grad(y)[0] == 2.0);
  }
  SUBCASE("fan-out accumulates") {
    Tape t;
    Var x = t.leaf(Tensor::scalar(1.5, true));
    t.backward(x * x + x);
    CHECK(t.grad(x)[0] == 4.0);
  }
}

TEST_CASE("errors") {
  Tape t;
  Var a = t.leaf(Tensor::vector({1, 2, 3}, true));
  Var b = t.leaf(Tensor::vector({1, 2}, true));
  CHECK(test::error_code_of([&] { add(a, b); }) == test::code(ErrorCode::invalid_argument));
  CHECK(test::error_code_of([&] { ln(t.constant(Tensor::vector({1, 0}))); }) ==
        test::code(ErrorCode::domain_error));
  CHECK(test::error_code_of([&] { log2(t.constant(-1.0)); }) ==
        test::code(ErrorCode::domain_error));
  CHECK(test::error_code_of([&] { t.backward(a); }) == test::code(ErrorCode::invalid_argument));

  Tape other;
  Var c = other.leaf(Tensor::scalar(1, true));
  CHECK(test::error_code_of([&] { add(t.constant(1.0), c); }) != 0);
}

TEST_CASE("clamp and relu gradients") {
  Tape t;
  Var z = t.leaf(Tensor::vector({-0.5, 0.25, 0.75, 1.5, 0.0, 1.0}, true));
  t.backward(sum(clamp(z, 0.0, 1.0)));
  CHECK(t.grad(z) == std::vector<double>{0, 1, 1, 0, 0, 0});

  Tape r;
  Var y = r.leaf(Tensor::vector({-1, 0, 2}, true));
  r.backward(sum(relu(y)));
  CHECK(r.grad(y) == std::vector<double>{0, 0, 1});

  // Away from the boundaries the clamp agrees with finite differences.
  const auto f = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += std::clamp(v * v, 0.1, 0.9);
    return s;
  };
  const std::vector<double> x0{0.2, 0.5, 0.8, 1.2};
  Tape c;
  Var x = c.leaf(Tensor::vector(x0, true));
  c.backward(sum(clamp(square(x), 0.1, 0.9)));
  const auto num = numeric_grad(f, x0, 1e-6);
  const auto ana = c.grad(x);
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(rel_err(ana[i], num[i]) <= 1e-6);
}

TEST_CASE("sum(relu(A x)) against finite differences") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix a(5, 4);
    for (double& v : a.data()) v = rng.uniform(-1, 1);
    std::vector<double> x0(4);
    for (double& v : x0) v = rng.uniform(-1, 1);

    Tape t;
    Var x = t.leaf(Tensor::vector(x0, true));
    t.backward(sum(relu(matvec(t.constant(Tensor::matrix(a)), x))));
    const auto ana = t.grad(x);

    const auto f = [&](const std::vector<double>& xv) {
      double s = 0.0;
      for (std::size_t r = 0; r < 5; ++r) {
        double z = 0.0;
        for (std::size_t c = 0; c < 4; ++c) z += a(r, c) * xv[c];
        s += std::max(0.0, z);
      }
      return s;
    };
    const auto num = numeric_grad(f, x0, 1e-5);
    for (std::size_t i = 0; i < 4; ++i) CHECK(rel_err(ana[i], num[i]) <= 1e-6);
  }
}

TEST_CASE("composite expression with broadcasting and matmul") {
  Rng rng(4);
  Matrix w(3, 2), xin(4, 3);
  for (double& v : w.data()) v = rng.uniform(-1, 1);
  for (double& v : xin.data()) v = rng.uniform(0.5, 1.5);
  const std::vector<double> bias{0.3, -0.2};

  const auto loss_on_tape = [&](Tape& t, const Matrix& wv, Var& wleaf) {
    wleaf = t.leaf(Tensor::matrix(wv, true));
    Var b = t.constant(Tensor({1, 2}, bias));
    Var h = matmul(t.constant(Tensor::matrix(xin)), wleaf) + b;
    return mean(log2(square(h) + 1.0) / sqrt(square(h) + 2.0)) - 0.5 * sum(h);
  };

  Tape t;
  Var wl;
  t.backward(loss_on_tape(t, w, wl));
  const auto ana = t.grad(wl);

  const auto f = [&](const std::vector<double>& flat) {
    Tape s;
    Var dummy;
    return loss_on_tape(s, Matrix(3, 2, flat), dummy).item();
  };
  const auto num = numeric_grad(f, w.data(), 1e-6);
  for (std::size_t i = 0; i < num.size(); ++i) CHECK(rel_err(ana[i], num[i]) <= 1e-7);
}

TEST_CASE("broadcast gradients sum over stretched dimensions") {
  Tape t;
  Var m = t.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}, true));
  Var row = t.leaf(Tensor({1, 3}, {1, 1, 1}, true));
  Var s = t.leaf(Tensor::scalar(2, true));
  t.backward(sum((m + row) * s));
  CHECK(t.grad(row) == std::vector<double>{4, 4, 4});
  CHECK(t.grad(s)[0] == doctest::Approx(27.0));
  CHECK(t.grad(m) == std::vector<double>(6, 2.0));
}

TEST_CASE("a tape differentiates once and constants get no gradient") {
  Tape t;
  Var x = t.leaf(Tensor::scalar(2, true));
  Var c = t.constant(5.0);
  Var loss = x * c;
  t.backward(loss);
  CHECK(t.grad(c)[0] == 0.0);
  CHECK(t.differentiated());
  CHECK_THROWS(t.backward(loss));
}
