#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "uwmmse/matrix.hpp"

// Minimal reverse-mode automatic differentiation over dense row-major tensors
// of rank 0, 1 or 2.
//
// A Tape owns every value created during a forward pass. Operations append a
// node holding the forward value and the ids of their inputs; backward() walks
// the nodes in reverse and accumulates gradients into every node that depends
// on a leaf created with requires_grad. Forward values are never modified, and
// a tape can be differentiated once: run the forward pass again on a fresh
// tape for another gradient.
//
// Binary elementwise ops broadcast numpy-style: shapes are right-aligned and
// a dimension of size 1 (or a missing leading dimension) is stretched.
// Gradients of broadcast operands are summed over the stretched dimensions.
//
// The kinks of relu and clamp have derivative 0: relu'(0) = 0, and
// clamp'(z) = 1 only for lo < z < hi. NaN passes the domain checks of sqrt
// and the logs, so a poisoned forward pass surfaces as a non-finite loss.
namespace uwmmse::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape) noexcept;

class Tensor {
 public:
  Tensor() : shape_{}, data_(1, 0.0) {}
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor scalar(double x, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor vector(std::vector<double> data, bool requires_grad = false);
  static Tensor matrix(const Matrix& m, bool requires_grad = false);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // Value of a single-element tensor.
  double item() const;

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

  // Same-shape gradient buffer, present after backward() reached this tensor.
  const std::optional<std::vector<double>>& grad() const noexcept { return grad_; }

 private:
  friend class Tape;

  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
  std::optional<std::vector<double>> grad_;
};

class Tape;

// Handle to a value on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  div,
  neg,
  square,
  sqrt,
  log2,
  ln,
  relu,
  clamp,
  sum,
  mean,
  matmul,
  matvec,
  reshape,
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that keeps the tensor's requires_grad flag.
  Var leaf(Tensor t);
  // Leaf that never receives a gradient.
  Var constant(Tensor t);
  Var constant(double x) { return constant(Tensor::scalar(x)); }

  // Reverse sweep from a single-element loss. Gradients accumulate additively
  // over fan-out. Throws if called a second time on the same tape.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  // Gradient of the loss with respect to v; zeros if v does not depend on
  // any requires_grad leaf.
  std::vector<double> grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  bool differentiated() const noexcept { return differentiated_; }

  // Internal: used by the op functions.
  struct Node {
    Op op = Op::leaf;
    Tensor value;
    std::size_t a = 0, b = 0;
    double lo = 0.0, hi = 0.0;
    bool needs_grad = false;
  };
  Var push(Node node);
  const Node& node(std::size_t id) const { return nodes_[id]; }
  void check_owner(Var v) const;

 private:
  void backprop_node(std::size_t id);
  std::vector<double>& grad_buffer(std::size_t id);

  std::vector<Node> nodes_;
  bool differentiated_ = false;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var square(Var a);
Var sqrt(Var a);   // domain error for negative entries
Var log2(Var a);   // domain error for nonpositive entries
Var ln(Var a);     // domain error for nonpositive entries
Var relu(Var a);
Var clamp(Var a, double lo, double hi);
Var sum(Var a);
Var mean(Var a);
Var matmul(Var a, Var b);  // (m x k) * (k x n)
Var matvec(Var a, Var x);  // (m x n) * (n)
Var reshape(Var a, Shape shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }

Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);

}  // namespace uwmmse::ad
