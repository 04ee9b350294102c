#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "promptlab/errors.hpp"

namespace promptlab {

// Dense row-major matrix of doubles. Row vectors are 1xN matrices; a scalar
// result is 1x1. Deliberately minimal: the ops below are the complete
// vocabulary the differentiation tape understands.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
      if (row.size() != m.cols_) throw DimMismatchError("from_rows: ragged rows");
      std::copy(row.begin(), row.end(), m.row(r++));
    }
    return m;
  }

  static Matrix row_vector(const std::vector<double>& v) {
    Matrix m(1, v.size());
    std::copy(v.begin(), v.end(), m.data());
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  // Bitwise equality; used by determinism and frozen-group tests.
  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::vector<double> row_as_vector(std::size_t r) const {
    return std::vector<double>(row(r), row(r) + cols_);
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// Norm floor below which a vector counts as zero for normalization purposes.
inline constexpr double kNormFloor = 1e-12;

inline double l2_norm(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return std::sqrt(s);
}

inline void l2_normalize_row_core(const double* x, double* out, std::size_t n) {
  double norm = l2_norm(x, n);
  if (norm <= kNormFloor) throw ZeroVectorError("l2_normalize: norm below 1e-12");
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] / norm;
}

// Max-subtracted softmax; finite for any finite input row.
inline void softmax_row_core(const double* z, double* out, std::size_t n) {
  double zmax = z[0];
  for (std::size_t i = 1; i < n; ++i) zmax = std::max(zmax, z[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(z[i] - zmax);
    sum += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
}

inline std::vector<double> l2_normalize(const std::vector<double>& v) {
  if (v.empty()) throw DimMismatchError("l2_normalize: empty vector");
  std::vector<double> out(v.size());
  l2_normalize_row_core(v.data(), out.data(), v.size());
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& z) {
  if (z.empty()) throw DimMismatchError("softmax: empty vector");
  std::vector<double> out(z.size());
  softmax_row_core(z.data(), out.data(), z.size());
  return out;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw DimMismatchError("matmul: " + shape_str(a) + " * " + shape_str(b));
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      double aik = a.at(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      double* orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw DimMismatchError("add: " + shape_str(a) + " + " + shape_str(b));
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

inline Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return out;
}

inline Matrix tanh_map(const Matrix& a) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return out;
}

inline Matrix softmax_rows(const Matrix& a) {
  if (a.cols() == 0) throw DimMismatchError("softmax_rows: zero columns");
  Matrix out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    softmax_row_core(a.row(r), out.row(r), a.cols());
  return out;
}

inline Matrix l2_normalize_rows(const Matrix& a) {
  if (a.cols() == 0) throw DimMismatchError("l2_normalize_rows: zero columns");
  Matrix out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    l2_normalize_row_core(a.row(r), out.row(r), a.cols());
  return out;
}

inline Matrix row_select(const Matrix& a, std::size_t r) {
  if (r >= a.rows())
    throw DimMismatchError("row_select: row " + std::to_string(r) + " of " + shape_str(a));
  Matrix out(1, a.cols());
  std::copy(a.row(r), a.row(r) + a.cols(), out.data());
  return out;
}

// Dot product of two row vectors, returned as 1x1.
inline Matrix dot(const Matrix& a, const Matrix& b) {
  if (a.rows() != 1 || b.rows() != 1 || a.cols() != b.cols())
    throw DimMismatchError("dot: " + shape_str(a) + " . " + shape_str(b));
  Matrix out(1, 1);
  double s = 0.0;
  for (std::size_t i = 0; i < a.cols(); ++i) s += a[i] * b[i];
  out[0] = s;
  return out;
}

// Ties resolve to the lowest index so classification is deterministic.
inline std::size_t argmax_row(const double* x, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

inline std::size_t argmax(const std::vector<double>& v) {
  if (v.empty()) throw DimMismatchError("argmax: empty vector");
  return argmax_row(v.data(), v.size());
}

}  // namespace promptlab
