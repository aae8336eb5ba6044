#include "uwmmse/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace uwmmse::ad {

namespace {

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s[i];
  out << ']';
  return out.str();
}

struct Dims2 {
  std::size_t rows = 1, cols = 1;
};

Dims2 as2d(const Shape& s) {
  switch (s.size()) {
    case 0: return {1, 1};
    case 1: return {1, s[0]};
    case 2: return {s[0], s[1]};
    default: fail(ErrorCode::invalid_argument, "tensor rank above 2 is not supported");
  }
}

// Index map for a broadcast binary op: out(r, c) reads a at r*a_rs + c*a_cs.
struct Broadcast {
  Shape out;
  std::size_t rows = 1, cols = 1;
  std::size_t a_rs = 0, a_cs = 0, b_rs = 0, b_cs = 0;
  bool same = false;

  std::size_t ia(std::size_t r, std::size_t c) const { return r * a_rs + c * a_cs; }
  std::size_t ib(std::size_t r, std::size_t c) const { return r * b_rs + c * b_cs; }
};

std::size_t join_dim(std::size_t x, std::size_t y, const Shape& sa, const Shape& sb,
                     const char* op) {
  if (x == y || y == 1) return x;
  if (x == 1) return y;
  fail(ErrorCode::invalid_argument,
       std::string(op) + ": shapes " + shape_str(sa) + " and " + shape_str(sb) +
           " do not broadcast");
}

Broadcast broadcast(const Shape& sa, const Shape& sb, const char* op) {
  Broadcast bc;
  if (sa == sb) {
    bc.same = true;
    bc.out = sa;
    bc.rows = 1;
    bc.cols = numel(sa);
    bc.a_cs = bc.b_cs = 1;
    return bc;
  }
  const Dims2 a = as2d(sa), b = as2d(sb);
  bc.rows = join_dim(a.rows, b.rows, sa, sb, op);
  bc.cols = join_dim(a.cols, b.cols, sa, sb, op);
  bc.a_rs = a.rows == 1 ? 0 : a.cols;
  bc.a_cs = a.cols == 1 ? 0 : 1;
  bc.b_rs = b.rows == 1 ? 0 : b.cols;
  bc.b_cs = b.cols == 1 ? 0 : 1;
  const std::size_t rank = std::max(sa.size(), sb.size());
  if (rank == 2) bc.out = {bc.rows, bc.cols};
  else if (rank == 1) bc.out = {bc.cols};
  return bc;
}

void domain_check(bool ok, const char* op, double x) {
  if (!ok) {
    std::ostringstream msg;
    msg << op << ": argument " << x << " outside the domain";
    fail(ErrorCode::domain_error, msg.str());
  }
}

}  // namespace

std::size_t numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : shape_(std::move(shape)), data_(std::move(data)), requires_grad_(requires_grad) {
  require(shape_.size() <= 2, "Tensor: rank above 2 is not supported");
  if (data_.size() != numel(shape_))
    fail(ErrorCode::invalid_argument, "Tensor: data length " + std::to_string(data_.size()) +
                                          " does not match shape " + shape_str(shape_));
}

Tensor Tensor::scalar(double x, bool requires_grad) { return Tensor({}, {x}, requires_grad); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::vector(std::vector<double> data, bool requires_grad) {
  const std::size_t n = data.size();
  return Tensor({n}, std::move(data), requires_grad);
}

Tensor Tensor::matrix(const Matrix& m, bool requires_grad) {
  return Tensor({m.rows(), m.cols()}, m.data(), requires_grad);
}

double Tensor::item() const {
  require(data_.size() == 1, "item() needs a single-element tensor, shape is " + shape_str(shape_));
  return data_[0];
}

const Tensor& Var::value() const {
  require(tape_ != nullptr, "Var is not bound to a tape");
  return tape_->value(*this);
}

Var Tape::leaf(Tensor t) {
  Node n;
  n.op = Op::leaf;
  n.needs_grad = t.requires_grad();
  n.value = std::move(t);
  return push(std::move(n));
}

Var Tape::constant(Tensor t) {
  t.set_requires_grad(false);
  return leaf(std::move(t));
}

Var Tape::push(Node node) {
  node.value.grad_.reset();
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v) const {
  require(v.tape_ == this && v.id_ < nodes_.size(), "Var belongs to a different tape");
}

const Tensor& Tape::value(Var v) const {
  check_owner(v);
  return nodes_[v.id_].value;
}

std::vector<double> Tape::grad(Var v) const {
  check_owner(v);
  const auto& g = nodes_[v.id_].value.grad_;
  return g ? *g : std::vector<double>(nodes_[v.id_].value.size(), 0.0);
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
  auto& g = nodes_[id].value.grad_;
  if (!g) g.emplace(nodes_[id].value.size(), 0.0);
  return *g;
}

void Tape::backward(Var loss) {
  check_owner(loss);
  if (differentiated_)
    fail(ErrorCode::invalid_argument,
         "backward() already ran on this tape; rebuild the forward pass first");
  const Node& root = nodes_[loss.id_];
  if (root.value.size() != 1)
    fail(ErrorCode::invalid_argument,
         "backward() needs a scalar loss, got shape " + shape_str(root.value.shape()));
  differentiated_ = true;
  if (!root.needs_grad) return;
  grad_buffer(loss.id_)[0] = 1.0;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (n.op == Op::leaf || !n.needs_grad || !n.value.grad_) continue;
    backprop_node(id);
  }
}

void Tape::backprop_node(std::size_t id) {
  // Inputs always precede the node, so writing their buffers never touches g.
  const std::vector<double>& g = *nodes_[id].value.grad_;
  const Node& n = nodes_[id];
  const Tensor& out = n.value;
  const Tensor& a = nodes_[n.a].value;
  const bool ga_on = nodes_[n.a].needs_grad;

  switch (n.op) {
    case Op::add:
    case Op::sub:
    case Op::mul:
    case Op::div: {
      const Tensor& b = nodes_[n.b].value;
      const bool gb_on = nodes_[n.b].needs_grad;
      const Broadcast bc = broadcast(a.shape(), b.shape(), "backward");
      std::vector<double>* ga = ga_on ? &grad_buffer(n.a) : nullptr;
      std::vector<double>* gb = gb_on ? &grad_buffer(n.b) : nullptr;
      for (std::size_t r = 0; r < bc.rows; ++r)
        for (std::size_t c = 0; c < bc.cols; ++c) {
          const std::size_t o = r * bc.cols + c, i = bc.ia(r, c), j = bc.ib(r, c);
          const double go = g[o];
          double da = 0.0, db = 0.0;
          switch (n.op) {
            case Op::add: da = 1.0; db = 1.0; break;
            case Op::sub: da = 1.0; db = -1.0; break;
            case Op::mul: da = b[j]; db = a[i]; break;
            default: da = 1.0 / b[j]; db = -a[i] / (b[j] * b[j]); break;
          }
          if (ga) (*ga)[i] += go * da;
          if (gb) (*gb)[j] += go * db;
        }
      return;
    }
    case Op::matmul: {
      const Tensor& b = nodes_[n.b].value;
      const bool gb_on = nodes_[n.b].needs_grad;
      const std::size_t m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
      if (ga_on) {
        auto& ga = grad_buffer(n.a);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            double acc = 0.0;
            for (std::size_t j = 0; j < p; ++j) acc += g[i * p + j] * b[t * p + j];
            ga[i * k + t] += acc;
          }
      }
      if (gb_on) {
        auto& gb = grad_buffer(n.b);
        for (std::size_t t = 0; t < k; ++t)
          for (std::size_t j = 0; j < p; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += a[i * k + t] * g[i * p + j];
            gb[t * p + j] += acc;
          }
      }
      return;
    }
    case Op::matvec: {
      const Tensor& x = nodes_[n.b].value;
      const bool gx_on = nodes_[n.b].needs_grad;
      const std::size_t m = a.shape()[0], cols = a.shape()[1];
      if (ga_on) {
        auto& ga = grad_buffer(n.a);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < cols; ++j) ga[i * cols + j] += g[i] * x[j];
      }
      if (gx_on) {
        auto& gx = grad_buffer(n.b);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < cols; ++j) gx[j] += a[i * cols + j] * g[i];
      }
      return;
    }
    default: break;
  }

  if (!ga_on) return;
  auto& ga = grad_buffer(n.a);
  const std::size_t size = a.size();
  switch (n.op) {
    case Op::neg:
      for (std::size_t i = 0; i < size; ++i) ga[i] -= g[i];
      break;
    case Op::square:
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] * 2.0 * a[i];
      break;
    case Op::sqrt:
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] * 0.5 / out[i];
      break;
    case Op::log2:
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] / (a[i] * std::numbers::ln2);
      break;
    case Op::ln:
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] / a[i];
      break;
    case Op::relu:
      for (std::size_t i = 0; i < size; ++i)
        if (a[i] > 0.0) ga[i] += g[i];
      break;
    case Op::clamp:
      for (std::size_t i = 0; i < size; ++i)
        if (a[i] > n.lo && a[i] < n.hi) ga[i] += g[i];
      break;
    case Op::sum:
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[0];
      break;
    case Op::mean:
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[0] / static_cast<double>(size);
      break;
    case Op::reshape:
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i];
      break;
    default:
      fail(ErrorCode::invalid_argument, "backward: unexpected op");
  }
}

namespace {

Tape& common_tape(Var a, Var b) {
  require(a.tape() != nullptr && a.tape() == b.tape(), "operands live on different tapes");
  return *a.tape();
}

Tape& tape_of(Var a) {
  require(a.tape() != nullptr, "Var is not bound to a tape");
  return *a.tape();
}

Var binary(Var a, Var b, Op op, const char* name) {
  Tape& t = common_tape(a, b);
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  const Broadcast bc = broadcast(x.shape(), y.shape(), name);
  std::vector<double> out(bc.rows * bc.cols);
  for (std::size_t r = 0; r < bc.rows; ++r)
    for (std::size_t c = 0; c < bc.cols; ++c) {
      const double u = x[bc.ia(r, c)], v = y[bc.ib(r, c)];
      double z;
      switch (op) {
        case Op::add: z = u + v; break;
        case Op::sub: z = u - v; break;
        case Op::mul: z = u * v; break;
        default: z = u / v; break;
      }
      out[r * bc.cols + c] = z;
    }
  Tape::Node n;
  n.op = op;
  n.a = a.id();
  n.b = b.id();
  n.needs_grad = t.node(a.id()).needs_grad || t.node(b.id()).needs_grad;
  n.value = Tensor(bc.out, std::move(out));
  return t.push(std::move(n));
}

template <class F>
Var unary(Var a, Op op, F&& f, double lo = 0.0, double hi = 0.0) {
  Tape& t = tape_of(a);
  const Tensor& x = t.value(a);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  Tape::Node n;
  n.op = op;
  n.a = a.id();
  n.lo = lo;
  n.hi = hi;
  n.needs_grad = t.node(a.id()).needs_grad;
  n.value = Tensor(x.shape(), std::move(out));
  return t.push(std::move(n));
}

Var reduce(Var a, Op op) {
  Tape& t = tape_of(a);
  const Tensor& x = t.value(a);
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  if (op == Op::mean) {
    require(x.size() > 0, "mean of an empty tensor");
    acc /= static_cast<double>(x.size());
  }
  Tape::Node n;
  n.op = op;
  n.a = a.id();
  n.needs_grad = t.node(a.id()).needs_grad;
  n.value = Tensor::scalar(acc);
  return t.push(std::move(n));
}

}  // namespace

Var add(Var a, Var b) { return binary(a, b, Op::add, "add"); }
Var sub(Var a, Var b) { return binary(a, b, Op::sub, "sub"); }
Var mul(Var a, Var b) { return binary(a, b, Op::mul, "mul"); }
Var div(Var a, Var b) { return binary(a, b, Op::div, "div"); }

Var neg(Var a) {
  return unary(a, Op::neg, [](double x) { return -x; });
}

Var square(Var a) {
  return unary(a, Op::square, [](double x) { return x * x; });
}

Var sqrt(Var a) {
  return unary(a, Op::sqrt, [](double x) {
    domain_check(!(x < 0.0), "sqrt", x);
    return std::sqrt(x);
  });
}

Var log2(Var a) {
  return unary(a, Op::log2, [](double x) {
    domain_check(!(x <= 0.0), "log2", x);
    return std::log2(x);
  });
}

Var ln(Var a) {
  return unary(a, Op::ln, [](double x) {
    domain_check(!(x <= 0.0), "ln", x);
    return std::log(x);
  });
}

Var relu(Var a) {
  return unary(a, Op::relu, [](double x) { return x > 0.0 ? x : 0.0; });
}

Var clamp(Var a, double lo, double hi) {
  require(lo <= hi, "clamp: lo must not exceed hi");
  return unary(a, Op::clamp, [lo, hi](double x) { return std::clamp(x, lo, hi); }, lo, hi);
}

Var sum(Var a) { return reduce(a, Op::sum); }
Var mean(Var a) { return reduce(a, Op::mean); }

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  if (x.rank() != 2 || y.rank() != 2 || x.shape()[1] != y.shape()[0])
    fail(ErrorCode::invalid_argument,
         "matmul: incompatible shapes " + shape_str(x.shape()) + " and " + shape_str(y.shape()));
  const std::size_t m = x.shape()[0], k = x.shape()[1], p = y.shape()[1];
  std::vector<double> out(m * p, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t s = 0; s < k; ++s) {
      const double xs = x[i * k + s];
      for (std::size_t j = 0; j < p; ++j) out[i * p + j] += xs * y[s * p + j];
    }
  Tape::Node n;
  n.op = Op::matmul;
  n.a = a.id();
  n.b = b.id();
  n.needs_grad = t.node(a.id()).needs_grad || t.node(b.id()).needs_grad;
  n.value = Tensor({m, p}, std::move(out));
  return t.push(std::move(n));
}

Var matvec(Var a, Var v) {
  Tape& t = common_tape(a, v);
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(v);
  if (x.rank() != 2 || y.rank() != 1 || x.shape()[1] != y.shape()[0])
    fail(ErrorCode::invalid_argument,
         "matvec: incompatible shapes " + shape_str(x.shape()) + " and " + shape_str(y.shape()));
  const std::size_t m = x.shape()[0], cols = x.shape()[1];
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += x[i * cols + j] * y[j];
    out[i] = acc;
  }
  Tape::Node n;
  n.op = Op::matvec;
  n.a = a.id();
  n.b = v.id();
  n.needs_grad = t.node(a.id()).needs_grad || t.node(v.id()).needs_grad;
  n.value = Tensor({m}, std::move(out));
  return t.push(std::move(n));
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  const Tensor& x = t.value(a);
  if (numel(shape) != x.size())
    fail(ErrorCode::invalid_argument,
         "reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  Tape::Node n;
  n.op = Op::reshape;
  n.a = a.id();
  n.needs_grad = t.node(a.id()).needs_grad;
  n.value = Tensor(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  return t.push(std::move(n));
}

Var operator+(Var a, double b) { return add(a, tape_of(a).constant(b)); }
Var operator+(double a, Var b) { return add(tape_of(b).constant(a), b); }
Var operator-(Var a, double b) { return sub(a, tape_of(a).constant(b)); }
Var operator-(double a, Var b) { return sub(tape_of(b).constant(a), b); }
Var operator*(Var a, double b) { return mul(a, tape_of(a).constant(b)); }
Var operator*(double a, Var b) { return mul(tape_of(b).constant(a), b); }
Var operator/(Var a, double b) { return div(a, tape_of(a).constant(b)); }
Var operator/(double a, Var b) { return div(tape_of(b).constant(a), b); }

}  // namespace uwmmse::ad
