#include "uwmmse/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "text_io.hpp"
#include "uwmmse/rng.hpp"
#include "uwmmse/wmmse.hpp"

namespace uwmmse {

std::size_t ModelParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.a.parameter_count() + l.b.parameter_count();
  return n;
}

void ModelParams::validate() const {
  require(!layers.empty(), "model must have at least one layer");
  require(p_max > 0.0 && std::isfinite(p_max), "model p_max must be positive");
  require(sigma > 0.0 && std::isfinite(sigma), "model sigma must be positive");
  for (const auto& l : layers) {
    l.a.validate();
    l.b.validate();
  }
}

namespace {

template <class F>
void for_each_gcn(const std::vector<LayerParams>& layers, F&& f) {
  for (const auto& l : layers) {
    f(l.a);
    f(l.b);
  }
}

template <class F>
void for_each_gcn(std::vector<LayerParams>& layers, F&& f) {
  for (auto& l : layers) {
    f(l.a);
    f(l.b);
  }
}

}  // namespace

std::vector<double> ModelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for_each_gcn(layers, [&](const GcnParams& g) {
    flat.insert(flat.end(), g.w1.data().begin(), g.w1.data().end());
    flat.insert(flat.end(), g.b1.begin(), g.b1.end());
    flat.insert(flat.end(), g.w2.begin(), g.w2.end());
    flat.push_back(g.b2);
  });
  return flat;
}

void ModelParams::assign(std::span<const double> flat) {
  require(flat.size() == parameter_count(), "ModelParams::assign: length mismatch");
  std::size_t k = 0;
  for_each_gcn(layers, [&](GcnParams& g) {
    for (double& x : g.w1.data()) x = flat[k++];
    for (double& x : g.b1) x = flat[k++];
    for (double& x : g.w2) x = flat[k++];
    g.b2 = flat[k++];
  });
}

ModelParams init_model(std::size_t k, double p_max, double sigma, std::uint64_t seed,
                       std::size_t hidden) {
  require(k >= 1, "init_model: K must be at least 1");
  ModelParams theta;
  theta.p_max = p_max;
  theta.sigma = sigma;
  for (std::size_t l = 0; l < k; ++l)
    theta.layers.push_back(
        {init_params(derive_seed(seed, Stream::init, 2 * l), GcnInit::identity_unfold_a, hidden),
         init_params(derive_seed(seed, Stream::init, 2 * l + 1), GcnInit::identity_unfold_b,
                     hidden)});
  theta.validate();
  return theta;
}

ModelParams random_model(std::size_t k, double p_max, double sigma, std::uint64_t seed,
                         std::size_t hidden) {
  require(k >= 1, "random_model: K must be at least 1");
  ModelParams theta;
  theta.p_max = p_max;
  theta.sigma = sigma;
  for (std::size_t l = 0; l < k; ++l)
    theta.layers.push_back(
        {init_params(derive_seed(seed, Stream::init, 2 * l), GcnInit::standard, hidden),
         init_params(derive_seed(seed, Stream::init, 2 * l + 1), GcnInit::standard, hidden)});
  theta.validate();
  return theta;
}

namespace {

void check_direct_gains(const ChannelMatrix& ch) {
  for (std::size_t i = 0; i < ch.size(); ++i)
    require(ch.h(i, i) > 0.0, "UWMMSE forward needs h_ii > 0 for every node");
}

template <class OnLayer>
Vector run_layers(const ChannelMatrix& ch, const ModelParams& theta, OnLayer&& on_layer) {
  require(ch.h.square() && ch.size() >= 1, "channel matrix must be square and non-empty");
  check_direct_gains(ch);
  require(!theta.layers.empty(), "model has no layers");
  const std::size_t m = ch.size();
  const GraphInput graph = prepare_graph(ch);
  Vector v(m, std::sqrt(theta.p_max));
  for (const LayerParams& layer : theta.layers) {
    const Vector a = gcn_forward(graph, layer.a);
    const Vector b = gcn_forward(graph, layer.b);
    const Vector u = update_u(ch, v);
    const Vector classical = mse_weights(ch, v);
    Vector w(m);
    for (std::size_t i = 0; i < m; ++i) w[i] = a[i] * classical[i] + b[i];
    v = update_v(ch, u, w, theta.p_max);
    on_layer(graph, layer, a, b, u, w, v);
  }
  Vector p(m);
  for (std::size_t i = 0; i < m; ++i) p[i] = std::min(v[i] * v[i], theta.p_max);
  return p;
}

}  // namespace

Vector uwmmse_power(const ChannelMatrix& ch, const ModelParams& theta) {
  return run_layers(ch, theta, [](auto&&...) {});
}

std::pair<PowerAllocation, LayerTrace> forward(const ChannelMatrix& ch,
                                               const ModelParams& theta) {
  LayerTrace trace;
  trace.kink_margin = std::numeric_limits<double>::infinity();
  const double v_max = std::sqrt(theta.p_max);
  Vector p = run_layers(ch, theta, [&](const GraphInput& graph, const LayerParams& layer,
                                       const Vector& a, const Vector& b, const Vector& u,
                                       const Vector& w, const Vector& v) {
    trace.a.push_back(a);
    trace.b.push_back(b);
    trace.u.push_back(u);
    trace.w.push_back(w);
    trace.v.push_back(v);
    trace.kink_margin = std::min({trace.kink_margin, gcn_relu_margin(graph, layer.a),
                                  gcn_relu_margin(graph, layer.b)});
    // Recover the clamp argument from (u, w) to measure its distance to 0 and
    // sqrt(p_max).
    const std::size_t m = u.size();
    for (std::size_t i = 0; i < m; ++i) {
      double denom = 0.0;
      for (std::size_t j = 0; j < m; ++j) denom += ch.h(j, i) * ch.h(j, i) * u[j] * u[j] * w[j];
      const double raw = u[i] * ch.h(i, i) * w[i] / (denom + kEpsV);
      trace.kink_margin =
          std::min({trace.kink_margin, std::abs(raw), std::abs(raw - v_max)});
    }
  });
  trace.p = p;
  return {PowerAllocation(std::move(p), theta.p_max), std::move(trace)};
}

ModelVars model_leaves(ad::Tape& tape, const ModelParams& theta, bool requires_grad) {
  theta.validate();
  ModelVars vars;
  for (const auto& l : theta.layers) {
    vars.a.push_back(gcn_leaves(tape, l.a, requires_grad));
    vars.b.push_back(gcn_leaves(tape, l.b, requires_grad));
  }
  return vars;
}

namespace {

struct ChannelConstants {
  ad::Var gain_sq;     // h_ij^2
  ad::Var cross_sq;    // h_ij^2 off the diagonal
  ad::Var gain_sq_t;   // h_ji^2
  ad::Var direct;      // h_ii
};

ChannelConstants channel_constants(ad::Tape& tape, const ChannelMatrix& ch) {
  const std::size_t m = ch.size();
  Matrix sq(m, m), cross(m, m);
  Vector diag(m);
  for (std::size_t i = 0; i < m; ++i) {
    diag[i] = ch.h(i, i);
    for (std::size_t j = 0; j < m; ++j) {
      sq(i, j) = ch.h(i, j) * ch.h(i, j);
      if (j != i) cross(i, j) = sq(i, j);
    }
  }
  return {tape.constant(ad::Tensor::matrix(sq)), tape.constant(ad::Tensor::matrix(cross)),
          tape.constant(ad::Tensor::matrix(sq.transposed())),
          tape.constant(ad::Tensor::vector(diag))};
}

}  // namespace

ad::Var forward(ad::Tape& tape, const ChannelMatrix& ch, const ModelVars& theta, double p_max) {
  using namespace ad;
  require(ch.h.square() && ch.size() >= 1, "channel matrix must be square and non-empty");
  require(!theta.a.empty() && theta.a.size() == theta.b.size(), "model has no layers");
  check_direct_gains(ch);
  const std::size_t m = ch.size();
  const double noise = ch.noise_power();
  const ChannelConstants c = channel_constants(tape, ch);
  const GraphVars graph = graph_constants(tape, prepare_graph(ch));
  const double v_max = std::sqrt(p_max);

  Var v = tape.constant(Tensor::vector(Vector(m, v_max)));
  for (std::size_t k = 0; k < theta.a.size(); ++k) {
    const Var a = gcn_forward(graph, theta.a[k]);
    const Var b = gcn_forward(graph, theta.b[k]);
    const Var power = square(v);
    const Var total = matvec(c.gain_sq, power) + noise;
    const Var u = c.direct * v / total;
    // a / (1 - u h v) in the cancellation-free form, see mse_weights
    const Var w = a * (total / (matvec(c.cross_sq, power) + noise)) + b;
    const Var raw = u * c.direct * w / (matvec(c.gain_sq_t, square(u) * w) + kEpsV);
    v = clamp(raw, 0.0, v_max);
  }
  return square(v);
}

ad::Var sum_rate(ad::Tape& tape, const ChannelMatrix& ch, ad::Var p) {
  using namespace ad;
  const std::size_t m = ch.size();
  Matrix cross(m, m);
  Vector direct_sq(m);
  for (std::size_t i = 0; i < m; ++i) {
    direct_sq[i] = ch.h(i, i) * ch.h(i, i);
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) cross(i, j) = ch.h(i, j) * ch.h(i, j);
  }
  const Var signal = tape.constant(Tensor::vector(direct_sq)) * p;
  const Var interference = matvec(tape.constant(Tensor::matrix(cross)), p) + ch.noise_power();
  return sum(log2(1.0 + signal / interference));
}

std::vector<double> gather_grad(const ad::Tape& tape, const ModelVars& vars) {
  std::vector<double> flat;
  auto append = [&](const GcnVars& g) {
    for (const ad::Var* v : {&g.w1, &g.b1, &g.w2, &g.b2}) {
      const auto gv = tape.grad(*v);
      flat.insert(flat.end(), gv.begin(), gv.end());
    }
  };
  for (std::size_t k = 0; k < vars.a.size(); ++k) {
    append(vars.a[k]);
    append(vars.b[k]);
  }
  return flat;
}

void save_params(std::ostream& out, const ModelParams& theta) {
  theta.validate();
  out << "uwmmse-params " << kParamFormatVersion << '\n';
  out << "layers " << theta.depth() << '\n';
  out << "p_max " << text_io::format_double(theta.p_max) << '\n';
  out << "sigma " << text_io::format_double(theta.sigma) << '\n';
  out << "nodes " << theta.nodes << '\n';
  for (std::size_t k = 0; k < theta.depth(); ++k) {
    out << "layer " << k << " a\n";
    write_gcn_params(out, theta.layers[k].a);
    out << "layer " << k << " b\n";
    write_gcn_params(out, theta.layers[k].b);
  }
  out << "end\n";
}

namespace {

double read_scalar_field(std::istream& in, std::size_t& line, const char* key) {
  const auto t = text_io::next_tokens(in, line, key);
  if (t.size() != 2 || t[0] != key) text_io::parse_fail(line, std::string("expected '") + key + " <value>'");
  return text_io::parse_double(t[1], line);
}

}  // namespace

ModelParams load_params(std::istream& in) {
  std::size_t line = 0;
  const auto head = text_io::next_tokens(in, line, "header");
  if (head.size() != 2 || head[0] != "uwmmse-params")
    text_io::parse_fail(line, "not a uwmmse parameter file");
  const std::size_t version = text_io::parse_size(head[1], line);
  if (version != kParamFormatVersion)
    text_io::parse_fail(line, "format version " + std::to_string(version) +
                                  " is not supported (expected " +
                                  std::to_string(kParamFormatVersion) + ")");
  const auto lt = text_io::next_tokens(in, line, "layers");
  if (lt.size() != 2 || lt[0] != "layers") text_io::parse_fail(line, "expected 'layers <K>'");
  const std::size_t k = text_io::parse_size(lt[1], line);
  if (k == 0) text_io::parse_fail(line, "layer count must be positive");

  ModelParams theta;
  theta.p_max = read_scalar_field(in, line, "p_max");
  theta.sigma = read_scalar_field(in, line, "sigma");
  if (!(theta.p_max > 0.0)) text_io::parse_fail(line, "p_max must be positive");
  if (!(theta.sigma > 0.0)) text_io::parse_fail(line, "sigma must be positive");
  const auto nt = text_io::next_tokens(in, line, "nodes");
  if (nt.size() != 2 || nt[0] != "nodes") text_io::parse_fail(line, "expected 'nodes <M>'");
  theta.nodes = text_io::parse_size(nt[1], line);
  for (std::size_t l = 0; l < k; ++l) {
    LayerParams layer;
    for (const char* which : {"a", "b"}) {
      const auto t = text_io::next_tokens(in, line, "layer");
      if (t.size() != 3 || t[0] != "layer" || text_io::parse_size(t[1], line) != l || t[2] != which)
        text_io::parse_fail(line, "expected 'layer " + std::to_string(l) + " " + which + "'");
      (which[0] == 'a' ? layer.a : layer.b) = read_gcn_params(in, line);
    }
    theta.layers.push_back(std::move(layer));
  }
  const auto tail = text_io::next_tokens(in, line, "end");
  if (tail.size() != 1 || tail[0] != "end") text_io::parse_fail(line, "expected 'end'");
  return theta;
}

void save_params(const std::filesystem::path& path, const ModelParams& theta) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot open " + path.string() + " for writing");
  save_params(out, theta);
  if (!out) fail(ErrorCode::io_error, "failed writing " + path.string());
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  try {
    return load_params(in);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::parse_error) fail(ErrorCode::parse_error, path.string() + ": " + e.what());
    throw;
  }
}

}  // namespace uwmmse
