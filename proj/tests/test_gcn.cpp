#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "uwmmse/checks.hpp"
#include "uwmmse/gcn.hpp"
#include "uwmmse/rng.hpp"

using namespace uwmmse;

namespace {

GcnParams random_params(std::uint64_t seed) {
  GcnParams theta = init_params(seed, GcnInit::standard);
  Rng rng(seed + 1000);
  for (double& x : theta.b1) x = rng.uniform(-0.5, 0.5);
  theta.b2 = rng.uniform(-0.5, 0.5);
  return theta;
}

const std::vector<std::size_t> kPerm{3, 0, 4, 1, 2};

}  // namespace

TEST_CASE("adjacency normalization") {
  CHECK(normalize_adjacency(Matrix(3, 3)) == Matrix::identity(3));

  const ChannelMatrix ch = checks::random_channel(5, 0.1, 2, 0);
  const Matrix a = normalize_adjacency(ch.h);
  for (std::size_t i = 0; i < 5; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      const double off = a(i, j) - (i == j ? 1.0 : 0.0);
      CHECK(off >= 0.0);
      CHECK(off <= 1.0);
      row += off;
    }
    CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
  }
  const Matrix ap = normalize_adjacency(permute_symmetric(ch.h, kPerm));
  CHECK(test::max_abs_diff(ap.data(), permute_symmetric(a, kPerm).data()) <= 1e-15);
}

TEST_CASE("node features") {
  const Matrix eye = node_features(test::channel(2, {1, 0, 0, 1}));
  CHECK(eye == Matrix(2, 3, {0, 1, 0, 0, 1, 0}));

  const Matrix diag = node_features(test::channel(2, {2, 0, 0, 3}));
  CHECK(diag(0, 0) == doctest::Approx(std::log(4.0) / 4));
  CHECK(diag(1, 0) == doctest::Approx(std::log(9.0) / 4));
  CHECK(diag(0, 1) == 1.0);
  CHECK(diag(1, 2) == doctest::Approx(std::log(9.0) / 4));

  // Incoming interference for the first column, outgoing for the last.
  const Matrix asym = node_features(test::channel(2, {1, 2, 0, 1}));
  CHECK(asym(0, 0) == doctest::Approx(std::log(1.0 / 5.0) / 4));
  CHECK(asym(0, 2) == doctest::Approx(0.0));
  CHECK(asym(1, 2) == doctest::Approx(std::log(1.0 / 5.0) / 4));

  const ChannelMatrix ch = checks::random_channel(5, 0.1, 2, 1);
  const Matrix x = node_features(ch);
  const Matrix xp = node_features({permute_symmetric(ch.h, kPerm), ch.sigma});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t f = 0; f < kFeatureDim; ++f) CHECK(xp(i, f) == x(kPerm[i], f));

  CHECK(test::error_code_of([] { node_features(test::channel(2, {0, 1, 1, 1})); }) ==
        test::code(ErrorCode::domain_error));
}

TEST_CASE("initializations") {
  const ChannelMatrix ch = checks::random_channel(6, 2.6e-5, 3, 0);
  CHECK(gcn_forward(ch, init_params(1, GcnInit::identity_unfold_a)) == Vector(6, 1.0));
  CHECK(gcn_forward(ch, init_params(1, GcnInit::identity_unfold_b)) == Vector(6, 0.0));
  CHECK(init_params(9, GcnInit::standard) == init_params(9, GcnInit::standard));
  CHECK_FALSE(init_params(9, GcnInit::standard) == init_params(10, GcnInit::standard));
  CHECK(init_params(9, GcnInit::standard).parameter_count() == 3 * 5 + 2 * 5 + 1);
}

TEST_CASE("zero weights give the output bias everywhere") {
  GcnParams theta = init_params(0, GcnInit::identity_unfold_b);
  theta.w1 = Matrix(kFeatureDim, theta.hidden);
  theta.b2 = -0.75;
  CHECK(gcn_forward(checks::random_channel(4, 1.0, 1, 0), theta) == Vector(4, -0.75));
}

TEST_CASE("forward matches a straight-line evaluation") {
  const ChannelMatrix ch = checks::random_channel(3, 0.05, 6, 2);
  const GcnParams theta = random_params(3);

  // Independent evaluation from the channel up.
  const Matrix& h = ch.h;
  double a[3][3], x[3][3];
  for (int i = 0; i < 3; ++i) {
    const double row = h(i, 0) + h(i, 1) + h(i, 2) + kEpsAdjacency;
    for (int j = 0; j < 3; ++j) a[i][j] = h(i, j) / row + (i == j);
    double in = 0, out = 0;
    for (int j = 0; j < 3; ++j)
      if (j != i) {
        in += h(i, j) * h(i, j);
        out += h(j, i) * h(j, i);
      }
    const double s2 = ch.sigma * ch.sigma, g = h(i, i) * h(i, i);
    x[i][0] = std::log(g / (s2 + in)) / 4;
    x[i][1] = 1;
    x[i][2] = std::log(g / (s2 + out)) / 4;
  }
  double z[3];
  for (int i = 0; i < 3; ++i) {
    z[i] = 0;
    for (std::size_t c = 0; c < theta.hidden; ++c) {
      double pre = theta.b1[c];
      for (int k = 0; k < 3; ++k)
        for (int f = 0; f < 3; ++f) pre += a[i][k] * x[k][f] * theta.w1(f, c);
      z[i] += std::max(pre, 0.0) * theta.w2[c];
    }
  }
  const Vector out = gcn_forward(ch, theta);
  for (int i = 0; i < 3; ++i) {
    const double expected = a[i][0] * z[0] + a[i][1] * z[1] + a[i][2] * z[2] + theta.b2;
    CHECK(std::abs(out[i] - expected) <= 1e-12);
  }
}

TEST_CASE("forward is permutation equivariant") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const ChannelMatrix ch = checks::random_channel(5, 2.6e-5, 4, s);
    const GcnParams theta = random_params(s);
    const Vector out = gcn_forward(ch, theta);
    const Vector outp = gcn_forward({permute_symmetric(ch.h, kPerm), ch.sigma}, theta);
    CHECK(test::max_abs_diff(outp, permute(out, kPerm)) <= 1e-9);
  }
}

TEST_CASE("tape forward equals the plain forward") {
  const ChannelMatrix ch = checks::random_channel(7, 0.01, 5, 0);
  const GcnParams theta = random_params(8);
  const GraphInput graph = prepare_graph(ch);
  ad::Tape tape;
  const ad::Var out = gcn_forward(graph_constants(tape, graph), gcn_leaves(tape, theta, false));
  const Vector plain = gcn_forward(graph, theta);
  REQUIRE(out.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) CHECK(out.value()[i] == doctest::Approx(plain[i]).epsilon(1e-13));
  CHECK(gcn_relu_margin(graph, theta) > 0.0);
}

TEST_CASE("serialization round-trip and dimension errors") {
  const GcnParams theta = random_params(12);
  std::stringstream buf;
  write_gcn_params(buf, theta);
  std::size_t line = 0;
  CHECK(read_gcn_params(buf, line) == theta);

  std::string text = buf.str();
  text.replace(text.find("gcn 3"), 5, "gcn 2");
  std::istringstream bad(text);
  line = 0;
  CHECK(test::error_code_of([&] { read_gcn_params(bad, line); }) ==
        test::code(ErrorCode::parse_error));

  GcnParams wrong = theta;
  wrong.b1.pop_back();
  CHECK(test::error_code_of([&] { wrong.validate(); }) == test::code(ErrorCode::invalid_argument));
}
