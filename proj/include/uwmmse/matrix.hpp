#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "uwmmse/error.hpp"

namespace uwmmse {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Sizes here are tens of nodes, so no
// expression templates or blocking.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "Matrix: data length does not match shape");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Permutation helpers used by the equivariance checks: perm[i] is the source
// index placed at position i, so (P x)_i = x_{perm[i]} and
// (P H P^T)_{ij} = H_{perm[i], perm[j]}.
inline Matrix permute_symmetric(const Matrix& h, std::span<const std::size_t> perm) {
  require(h.square() && perm.size() == h.rows(), "permute_symmetric: size mismatch");
  Matrix out(h.rows(), h.cols());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < perm.size(); ++j) out(i, j) = h(perm[i], perm[j]);
  return out;
}

inline Vector permute(std::span<const double> x, std::span<const std::size_t> perm) {
  require(perm.size() == x.size(), "permute: size mismatch");
  Vector out(x.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = x[perm[i]];
  return out;
}

}  // namespace uwmmse
