#include "uwmmse/gcn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "text_io.hpp"
#include "uwmmse/rng.hpp"

namespace uwmmse {

void GcnParams::validate() const {
  require(in_dim >= 1 && hidden >= 1, "GcnParams: dimensions must be positive");
  require(w1.rows() == in_dim && w1.cols() == hidden, "GcnParams: w1 must be in_dim x hidden");
  require(b1.size() == hidden && w2.size() == hidden, "GcnParams: b1 and w2 must have length hidden");
}

GcnParams init_params(std::uint64_t seed, GcnInit mode, std::size_t hidden) {
  require(hidden >= 1, "init_params: hidden must be positive");
  Rng rng(seed);
  GcnParams theta;
  theta.hidden = hidden;
  theta.w1 = Matrix(kFeatureDim, hidden);
  theta.b1.assign(hidden, 0.0);
  theta.w2.assign(hidden, 0.0);

  const double lim1 = std::sqrt(6.0 / static_cast<double>(kFeatureDim + hidden));
  for (double& x : theta.w1.data()) x = rng.uniform(-lim1, lim1);
  const double lim2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
  switch (mode) {
    case GcnInit::standard:
      for (double& x : theta.w2) x = rng.uniform(-lim2, lim2);
      break;
    case GcnInit::identity_unfold_a:
      theta.b2 = 1.0;
      break;
    case GcnInit::identity_unfold_b:
      break;
  }
  return theta;
}

Matrix normalize_adjacency(const Matrix& h) {
  require(h.square(), "normalize_adjacency: H must be square");
  Matrix a(h.rows(), h.cols());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < h.cols(); ++j) row += h(i, j);
    const double scale = 1.0 / (row + kEpsAdjacency);
    for (std::size_t j = 0; j < h.cols(); ++j) a(i, j) = h(i, j) * scale + (i == j ? 1.0 : 0.0);
  }
  return a;
}

Matrix node_features(const ChannelMatrix& ch) {
  const Matrix& h = ch.h;
  require(h.square(), "node_features: H must be square");
  const double noise = ch.noise_power();
  const std::size_t m = h.rows();
  Matrix x(m, kFeatureDim);
  for (std::size_t i = 0; i < m; ++i) {
    double in = 0.0, out = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      in += h(i, j) * h(i, j);
      out += h(j, i) * h(j, i);
    }
    const double g = h(i, i) * h(i, i);
    if (!(g > 0.0) || !(noise + in > 0.0) || !(noise + out > 0.0))
      fail(ErrorCode::domain_error, "node_features: direct gain and noise must be positive");
    x(i, 0) = std::log(g / (noise + in)) / kFeatureScale;
    x(i, 1) = 1.0;
    x(i, 2) = std::log(g / (noise + out)) / kFeatureScale;
  }
  return x;
}

GraphInput prepare_graph(const ChannelMatrix& ch) {
  GraphInput g{normalize_adjacency(ch.h), Matrix()};
  const Matrix x = node_features(ch);
  const std::size_t m = ch.h.rows();
  g.aggregated = Matrix(m, kFeatureDim);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < m; ++k) {
      const double a = g.adjacency(i, k);
      for (std::size_t f = 0; f < kFeatureDim; ++f) g.aggregated(i, f) += a * x(k, f);
    }
  return g;
}

namespace {

// X1 w2, the per-node scalar fed into the second aggregation.
Vector hidden_projection(const GraphInput& graph, const GcnParams& theta, double* margin) {
  const std::size_t m = graph.adjacency.rows();
  Vector z(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < theta.hidden; ++c) {
      double pre = 0.0;
      for (std::size_t f = 0; f < kFeatureDim; ++f) pre += graph.aggregated(i, f) * theta.w1(f, c);
      pre += theta.b1[c];
      if (margin) *margin = std::min(*margin, std::abs(pre));
      const double act = pre > 0.0 ? pre : 0.0;
      acc += act * theta.w2[c];
    }
    z[i] = acc;
  }
  return z;
}

}  // namespace

Vector gcn_forward(const GraphInput& graph, const GcnParams& theta) {
  require(theta.in_dim == kFeatureDim, "gcn_forward: in_dim must match the node features");
  require(graph.adjacency.square() && graph.aggregated.rows() == graph.adjacency.rows(),
          "gcn_forward: graph shapes are inconsistent");
  const Vector z = hidden_projection(graph, theta, nullptr);
  const std::size_t m = z.size();
  Vector out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < m; ++k) acc += graph.adjacency(i, k) * z[k];
    out[i] = acc + theta.b2;
  }
  return out;
}

double gcn_relu_margin(const GraphInput& graph, const GcnParams& theta) {
  double margin = std::numeric_limits<double>::infinity();
  hidden_projection(graph, theta, &margin);
  return margin;
}

GcnVars gcn_leaves(ad::Tape& tape, const GcnParams& theta, bool requires_grad) {
  theta.validate();
  using ad::Tensor;
  return {
      tape.leaf(Tensor({theta.in_dim, theta.hidden}, theta.w1.data(), requires_grad)),
      tape.leaf(Tensor({1, theta.hidden}, theta.b1, requires_grad)),
      tape.leaf(Tensor({theta.hidden, 1}, theta.w2, requires_grad)),
      tape.leaf(Tensor({1, 1}, {theta.b2}, requires_grad)),
  };
}

GraphVars graph_constants(ad::Tape& tape, const GraphInput& graph) {
  return {tape.constant(ad::Tensor::matrix(graph.adjacency)),
          tape.constant(ad::Tensor::matrix(graph.aggregated))};
}

ad::Var gcn_forward(const GraphVars& graph, const GcnVars& theta) {
  using namespace ad;
  const Var hidden = relu(matmul(graph.aggregated, theta.w1) + theta.b1);
  const Var out = matmul(graph.adjacency, matmul(hidden, theta.w2)) + theta.b2;
  return reshape(out, {out.shape()[0]});
}

namespace {

void write_values(std::ostream& out, const char* name, std::initializer_list<std::size_t> dims,
                  const std::vector<double>& values) {
  out << name;
  for (std::size_t d : dims) out << ' ' << d;
  for (double x : values) out << ' ' << text_io::format_double(x);
  out << '\n';
}

std::vector<double> read_values(std::istream& in, std::size_t& line, const char* name,
                                std::initializer_list<std::size_t> dims) {
  const auto tokens = text_io::next_tokens(in, line, name);
  if (tokens[0] != name) text_io::parse_fail(line, std::string("expected '") + name + "'");
  std::size_t count = 1;
  std::size_t k = 1;
  for (std::size_t expected : dims) {
    if (k >= tokens.size()) text_io::parse_fail(line, std::string(name) + ": missing dimension");
    const std::size_t got = text_io::parse_size(tokens[k++], line);
    if (got != expected)
      text_io::parse_fail(line, std::string(name) + ": dimension " + std::to_string(got) +
                                    " does not match expected " + std::to_string(expected));
    count *= expected;
  }
  if (tokens.size() - k != count)
    text_io::parse_fail(line, std::string(name) + ": expected " + std::to_string(count) +
                                  " values, found " + std::to_string(tokens.size() - k));
  std::vector<double> values;
  values.reserve(count);
  for (; k < tokens.size(); ++k) values.push_back(text_io::parse_double(tokens[k], line));
  return values;
}

}  // namespace

void write_gcn_params(std::ostream& out, const GcnParams& theta) {
  theta.validate();
  out << "gcn " << theta.in_dim << ' ' << theta.hidden << '\n';
  write_values(out, "w1", {theta.in_dim, theta.hidden}, theta.w1.data());
  write_values(out, "b1", {theta.hidden}, theta.b1);
  write_values(out, "w2", {theta.hidden, 1}, theta.w2);
  write_values(out, "b2", {1}, {theta.b2});
}

GcnParams read_gcn_params(std::istream& in, std::size_t& line) {
  const auto head = text_io::next_tokens(in, line, "gcn header");
  if (head.size() != 3 || head[0] != "gcn")
    text_io::parse_fail(line, "expected 'gcn <in_dim> <hidden>'");
  GcnParams theta;
  theta.in_dim = text_io::parse_size(head[1], line);
  theta.hidden = text_io::parse_size(head[2], line);
  if (theta.in_dim != kFeatureDim)
    text_io::parse_fail(line, "in_dim " + std::to_string(theta.in_dim) + " is not supported");
  if (theta.hidden == 0) text_io::parse_fail(line, "hidden must be positive");
  theta.w1 = Matrix(theta.in_dim, theta.hidden,
                    read_values(in, line, "w1", {theta.in_dim, theta.hidden}));
  theta.b1 = read_values(in, line, "b1", {theta.hidden});
  theta.w2 = read_values(in, line, "w2", {theta.hidden, 1});
  theta.b2 = read_values(in, line, "b2", {1})[0];
  return theta;
}

}  // namespace uwmmse
