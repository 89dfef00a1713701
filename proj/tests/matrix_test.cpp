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

#include <catch2/catch_amalgamated.hpp>

#include "memformer/linalg.hpp"
#include "memformer/matrix.hpp"
#include "memformer/rng.hpp"

using namespace memformer;

TEST_CASE("matmul identity and shapes") {
  Matrix m(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(max_abs_diff(matmul(Matrix::identity(2), m), m) == 0.0);
  CHECK_THROWS_WITH(matmul(m, m), Catch::Matchers::ContainsSubstring("matmul") &&
                                      Catch::Matchers::ContainsSubstring("2x3"));
}

TEST_CASE("elementwise ops") {
  Matrix a(2, 2, {1, 2, 3, 4});
  Matrix b(2, 2, {5, 6, 7, 8});
  CHECK(add(a, b)(1, 1) == 12.0);
  CHECK(sub(b, a)(0, 0) == 4.0);
  CHECK(hadamard(Matrix(2, 2), a).max_abs() == 0.0);
  CHECK(scale(2.0, a)(1, 0) == 6.0);
  CHECK(transpose(a)(0, 1) == 3.0);
  CHECK_THROWS_WITH(add(a, Matrix(2, 3)), Catch::Matchers::ContainsSubstring("add"));
  CHECK_THROWS_WITH(hadamard(a, Matrix(3, 2)),
                    Catch::Matchers::ContainsSubstring("hadamard"));
}

TEST_CASE("from_external rejects non-finite input") {
  CHECK_THROWS(Matrix::from_external(1, 2, {1.0, std::nan("")}));
  CHECK_THROWS(Matrix::from_external(1, 1, {std::numeric_limits<double>::infinity()}));
  CHECK_NOTHROW(Matrix::from_external(1, 2, {1.0, -2.0}));
  CHECK_THROWS(Matrix(2, 2, {1.0, 2.0}));  // wrong length
}

TEST_CASE("householder qr reconstructs and is orthonormal") {
  Rng rng = Rng::root(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = rng.gaussian_matrix(5, 5);
    const QrResult qr = householder_qr(a);
    CHECK(max_abs_diff(matmul(qr.q, qr.r), a) < 1e-12);
    CHECK(max_abs_diff(matmul(transpose(qr.q), qr.q), Matrix::identity(5)) < 1e-12);
    for (int i = 1; i < 5; ++i)
      for (int j = 0; j < i; ++j) CHECK(std::abs(qr.r(i, j)) < 1e-12);
  }
}

TEST_CASE("jacobi eigendecomposition matches known spectrum") {
  // diag(3, 1) rotated by 45 degrees
  const double c = std::sqrt(0.5);
  Matrix v(2, 2, {c, -c, c, c});
  Matrix d(2, 2, {3, 0, 0, 1});
  const Matrix a = matmul(matmul(v, d), transpose(v));
  const SymEig e = sym_eig(a);
  CHECK(e.values[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(e.values[1] == Catch::Approx(3.0).margin(1e-12));
  Matrix rec(2, 2);
  for (int i = 0; i < 2; ++i) rec(i, i) = e.values[i];
  CHECK(max_abs_diff(matmul(matmul(e.vectors, rec), transpose(e.vectors)), a) < 1e-12);
}

TEST_CASE("sym_sqrt round trip and PD guard") {
  Rng rng = Rng::root(12);
  const Matrix g = rng.gaussian_matrix(4, 4);
  const Matrix spd = add(matmul(g, transpose(g)), scale(0.5, Matrix::identity(4)));
  const Matrix root = sym_sqrt(spd);
  CHECK(max_abs_diff(matmul(root, root), spd) < 1e-10);
  const Matrix inv_root = sym_inv_sqrt(spd);
  CHECK(max_abs_diff(matmul(matmul(inv_root, spd), inv_root), Matrix::identity(4)) < 1e-10);
  CHECK_THROWS(sym_sqrt(Matrix(3, 3)));  // singular
}
