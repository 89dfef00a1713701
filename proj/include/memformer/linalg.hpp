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

// Small dense decompositions: Householder QR and cyclic Jacobi for
// symmetric eigenproblems. Dimensions here are single digits, so robust
// and simple beats fast.

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "memformer/matrix.hpp"

namespace memformer {

struct QrResult {
  Matrix q;  // orthonormal columns
  Matrix r;  // upper triangular
};

// Householder QR of a square matrix.
inline QrResult householder_qr(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("householder_qr: square input required, got " + a.shape_str());
  }
  const int n = a.rows();
  Matrix r = a;
  Matrix q = Matrix::identity(n);
  std::vector<double> v(n);
  for (int k = 0; k < n - 1; ++k) {
    double norm = 0.0;
    for (int i = k; i < n; ++i) norm += r(i, k) * r(i, k);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double alpha = r(k, k) >= 0 ? -norm : norm;
    v[k] = r(k, k) - alpha;
    for (int i = k + 1; i < n; ++i) v[i] = r(i, k);
    double vnorm2 = 0.0;
    for (int i = k; i < n; ++i) vnorm2 += v[i] * v[i];
    if (vnorm2 == 0.0) continue;
    // r <- (I - 2 v v^T / v^T v) r, applied to the trailing block
    for (int j = k; j < n; ++j) {
      double s = 0.0;
      for (int i = k; i < n; ++i) s += v[i] * r(i, j);
      s = 2.0 * s / vnorm2;
      for (int i = k; i < n; ++i) r(i, j) -= s * v[i];
    }
    // q <- q (I - 2 v v^T / v^T v)
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = k; j < n; ++j) s += q(i, j) * v[j];
      s = 2.0 * s / vnorm2;
      for (int j = k; j < n; ++j) q(i, j) -= s * v[j];
    }
  }
  return {q, r};
}

struct SymEig {
  std::vector<double> values;  // ascending
  Matrix vectors;              // columns are eigenvectors, a = V diag(values) V^T
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
inline SymEig sym_eig(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("sym_eig: square input required, got " + a.shape_str());
  }
  const int n = a.rows();
  Matrix m = a;
  Matrix v = Matrix::identity(n);
  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += m(i, j) * m(i, j);
    if (off < 1e-30) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(m(p, q)) < 1e-300) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * m(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double mkp = m(k, p), mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (int k = 0; k < n; ++k) {
          const double mpk = m(p, k), mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  // Sort ascending, permuting eigenvector columns to match.
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return m(i, i) < m(j, j); });
  SymEig out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (int j = 0; j < n; ++j) {
    out.values[j] = m(order[j], order[j]);
    for (int i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

// V f(diag) V^T for a symmetric input.
template <class F>
inline Matrix sym_apply(const Matrix& a, F&& f) {
  SymEig e = sym_eig(a);
  const int n = a.rows();
  Matrix d(n, n);
  for (int i = 0; i < n; ++i) d(i, i) = f(e.values[i]);
  return matmul(matmul(e.vectors, d), transpose(e.vectors));
}

inline constexpr double kPdEigenvalueFloor = 1e-12;

inline Matrix sym_sqrt(const Matrix& a) {
  SymEig e = sym_eig(a);
  if (e.values.front() <= kPdEigenvalueFloor) {
    throw std::invalid_argument("sym_sqrt: matrix not positive definite");
  }
  return sym_apply(a, [](double x) { return std::sqrt(x); });
}

inline Matrix sym_inv_sqrt(const Matrix& a) {
  SymEig e = sym_eig(a);
  if (e.values.front() <= kPdEigenvalueFloor) {
    throw std::invalid_argument("sym_inv_sqrt: matrix not positive definite");
  }
  return sym_apply(a, [](double x) { return 1.0 / std::sqrt(x); });
}

}  // namespace memformer
