#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace pebg {

/// Dense row-major matrix of doubles. Vectors are stored as 1 x n matrices so
/// that every trainable tensor has the same type.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// out = M * x (M is rows x cols, x has cols entries).
inline void matvec(const Matrix& m, std::span<const double> x, std::span<double> out) {
  assert(x.size() == m.cols() && out.size() == m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), x);
}

/// out += M^T * g
inline void matvec_transpose_add(const Matrix& m, std::span<const double> g, std::span<double> out) {
  assert(g.size() == m.rows() && out.size() == m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (g[r] != 0.0) axpy(g[r], m.row(r), out);
  }
}

/// M += g * x^T
inline void outer_add(std::span<const double> g, std::span<const double> x, Matrix& m) {
  assert(g.size() == m.rows() && x.size() == m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (g[r] != 0.0) axpy(g[r], x, m.row(r));
  }
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Binary cross-entropy of sigmoid(logit) against a 0/1 label, in the stable
/// softplus form: -[y log s + (1-y) log(1-s)] = softplus(x) - y x.
inline double bce_with_logit(double logit, double label) { return softplus(logit) - label * logit; }

}  // namespace pebg
