/*
 * Copyright 2026 The Memformer Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Dense row-major matrix of doubles, sized for prompts of a few dozen
// tokens. Everything is 64-bit: the equivalence checks in verify.hpp ask
// for ~1e-10 agreement, which float32 cannot deliver.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace memformer {

class Matrix {
 public:
  Matrix() = default;

  // Zero-filled rows x cols matrix.
  Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
    check_dims(rows, cols);
    data_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  }

  Matrix(int rows, int cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    check_dims(rows, cols);
    if (data_.size() != static_cast<std::size_t>(rows) * cols) {
      throw std::invalid_argument("Matrix: data length " +
                                  std::to_string(data_.size()) +
                                  " does not match shape " + shape_str());
    }
  }

  // Entry point for values read from files or user input: rejects NaN/Inf.
  // Internal arithmetic skips this check.
  static Matrix from_external(int rows, int cols, std::vector<double> data) {
    Matrix m(rows, cols, std::move(data));
    for (double v : m.data_) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("Matrix: non-finite entry in external data");
      }
    }
    return m;
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix filled(int rows, int cols, double value) {
    Matrix m(rows, cols);
    m.data_.assign(m.data_.size(), value);
    return m;
  }

  static Matrix ones(int rows, int cols) { return filled(rows, cols, 1.0); }

  static Matrix scalar(double value) { return Matrix(1, 1, {value}); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

  double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  static void check_dims(int rows, int cols) {
    if (rows < 0 || cols < 0) {
      throw std::invalid_argument("Matrix: negative dimension");
    }
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

namespace detail {
inline void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
  }
}
}  // namespace detail

inline Matrix add(const Matrix& a, const Matrix& b) {
  detail::require_same_shape("add", a, b);
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
  detail::require_same_shape("sub", a, b);
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  detail::require_same_shape("hadamard", a, b);
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= b.data()[i];
  return c;
}

inline Matrix scale(double c, const Matrix& a) {
  Matrix r = a;
  for (double& v : r.data()) v *= c;
  return r;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + a.shape_str() +
                                " * " + b.shape_str());
  }
  Matrix c(a.rows(), b.cols());
  const int n = a.rows(), k = a.cols(), m = b.cols();
  const double* bd = b.data().data();
  double* cd = c.data().data();
  for (int i = 0; i < n; ++i) {
    double* ci = cd + static_cast<std::size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      const double* bp = bd + static_cast<std::size_t>(p) * m;
      for (int j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// a b^T without materializing the transpose (hot in backward rules).
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: shape mismatch " + a.shape_str() +
                                " * " + b.shape_str() + "^T");
  }
  Matrix c(a.rows(), b.rows());
  const int k = a.cols();
  for (int i = 0; i < a.rows(); ++i) {
    const double* ai = a.data().data() + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < b.rows(); ++j) {
      const double* bj = b.data().data() + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      c(i, j) = s;
    }
  }
  return c;
}

// a^T b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("matmul_tn: shape mismatch " + a.shape_str() +
                                "^T * " + b.shape_str());
  }
  Matrix c(a.cols(), b.cols());
  const int m = b.cols();
  double* cd = c.data().data();
  for (int k = 0; k < a.rows(); ++k) {
    const double* bk = b.data().data() + static_cast<std::size_t>(k) * m;
    for (int i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* ci = cd + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

// Scalar (1x1) times matrix; the scalar may be a trained parameter.
inline Matrix smul(const Matrix& s, const Matrix& a) {
  if (!s.is_scalar()) {
    throw std::invalid_argument("smul: left operand must be 1x1, got " + s.shape_str());
  }
  return scale(s(0, 0), a);
}

inline Matrix neg(const Matrix& a) { return scale(-1.0, a); }

inline Matrix operator+(const Matrix& a, const Matrix& b) { return add(a, b); }
inline Matrix operator-(const Matrix& a, const Matrix& b) { return sub(a, b); }
inline Matrix operator*(const Matrix& a, const Matrix& b) { return matmul(a, b); }
inline Matrix operator*(double c, const Matrix& a) { return scale(c, a); }

inline double dot(const Matrix& a, const Matrix& b) {
  detail::require_same_shape("dot", a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  detail::require_same_shape("max_abs_diff", a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace memformer
