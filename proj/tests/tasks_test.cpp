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

#include <algorithm>
#include <catch2/catch_amalgamated.hpp>

#include "memformer/linalg.hpp"
#include "memformer/tasks.hpp"

using namespace memformer;

TEST_CASE("isotropic covariance is the identity") {
  Rng rng = Rng::root(1);
  const CovarianceSpec spec = CovarianceSpec::identity(4);
  CHECK(max_abs_diff(sample_covariance(spec, rng), Matrix::identity(4)) == 0.0);
}

TEST_CASE("covariance eigenvalues match the configured spectrum") {
  const CovarianceSpec spec = CovarianceSpec::non_isotropic_default();
  std::vector<double> expected = spec.spectrum;  // {1, 1, 0.5, 0.25, 1}
  std::sort(expected.begin(), expected.end());
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng = Rng::root(1000 + seed);
    const Matrix sigma = sample_covariance(spec, rng);
    CHECK(max_abs_diff(sigma, transpose(sigma)) < 1e-12);
    const SymEig eig = sym_eig(sigma);
    for (int i = 0; i < spec.dim; ++i) {
      CHECK(eig.values[i] == Catch::Approx(expected[i]).margin(1e-8));
    }
  }
}

TEST_CASE("haar factor is orthogonal") {
  Rng rng = Rng::root(2);
  const Matrix u = haar_orthogonal(5, rng);
  CHECK(max_abs_diff(matmul(transpose(u), u), Matrix::identity(5)) < 1e-12);
}

TEST_CASE("monte carlo: covariate and target covariances", "[slow]") {
  const int samples = 100000;
  Rng rng = Rng::root(3);
  const CovarianceSpec spec = CovarianceSpec::non_isotropic_default();
  Rng sig_rng = rng.child(Stream::kSigma);
  const Matrix sigma = sample_covariance(spec, sig_rng);
  const Matrix sigma_inv = sym_apply(sigma, [](double x) { return 1.0 / x; });
  const int d = spec.dim;
  Matrix cov_x(d, d), cov_w(d, d);
  Rng draw = rng.child(Stream::kTask);
  const Matrix half = sym_sqrt(sigma);
  const Matrix inv_half = sym_inv_sqrt(sigma);
  for (int s = 0; s < samples; ++s) {
    const Matrix x = matmul(half, draw.gaussian_matrix(d, 1));
    const Matrix w = matmul(inv_half, draw.gaussian_matrix(d, 1));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        cov_x(i, j) += x(i, 0) * x(j, 0) / samples;
        cov_w(i, j) += w(i, 0) * w(j, 0) / samples;
      }
  }
  const double tol_x = 0.05 * std::max(1.0, sigma.max_abs());
  const double tol_w = 0.05 * std::max(1.0, sigma_inv.max_abs());
  CHECK(max_abs_diff(cov_x, sigma) < tol_x);
  CHECK(max_abs_diff(cov_w, sigma_inv) < tol_w);
}

TEST_CASE("labels are inner products with the target") {
  TaskInstance task;
  task.covariates = Matrix::identity(2);
  task.w_star = Matrix(2, 1, {3, -1});
  task.labels = matmul(transpose(task.w_star), task.covariates);
  CHECK(task.labels(0, 0) == 3.0);
  CHECK(task.labels(0, 1) == -1.0);
}

TEST_CASE("prompt layout and round trip") {
  TaskInstance task;
  task.covariates = Matrix(1, 1, {2});
  task.w_star = Matrix(1, 1, {3});
  task.labels = Matrix(1, 1, {6});
  task.query = Matrix(1, 1, {1});
  task.query_label = 3.0;
  task.sigma = Matrix::identity(1);
  const Matrix z = build_prompt(task);
  CHECK(z(0, 0) == 2.0);
  CHECK(z(0, 1) == 1.0);
  CHECK(z(1, 0) == 6.0);
  CHECK(z(1, 1) == 0.0);

  Rng rng = Rng::root(17);
  Rng task_rng = rng.child(Stream::kTask);
  const TaskInstance random_task = sample_task(Matrix::identity(3), 7, task_rng);
  const Matrix zr = build_prompt(random_task);
  CHECK(zr(3, 7) == 0.0);
  CHECK(max_abs_diff(prompt_covariates(zr), random_task.covariates) == 0.0);
  CHECK(max_abs_diff(prompt_labels(zr), random_task.labels) == 0.0);
  CHECK(max_abs_diff(prompt_query(zr), random_task.query) == 0.0);
}

TEST_CASE("empirical loss values and gradient") {
  TaskInstance task;
  task.covariates = Matrix(1, 1, {2});
  task.w_star = Matrix(1, 1, {0});
  task.labels = Matrix(1, 1, {0});
  task.query = Matrix(1, 1, {1});
  task.query_label = 0.0;
  // (1/2) * 4 * 1 = 2
  CHECK(empirical_loss(Matrix(1, 1, {1}), task) == Catch::Approx(2.0));
  CHECK(empirical_loss(task.w_star, task) == 0.0);

  Rng rng = Rng::root(23);
  Rng task_rng = rng.child(Stream::kTask);
  const TaskInstance t = sample_task(Matrix::identity(3), 6, task_rng);
  CHECK(empirical_loss(t.w_star, t) == 0.0);
  const Matrix w = rng.gaussian_matrix(3, 1);
  CHECK(empirical_loss(w, t) >= 0.0);
  const Matrix g = empirical_loss_grad(w, t);
  const double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    Matrix up = w, down = w;
    up(i, 0) += h;
    down(i, 0) -= h;
    const double fd = (empirical_loss(up, t) - empirical_loss(down, t)) / (2 * h);
    CHECK(g(i, 0) == Catch::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("identical seed gives bit-identical batches") {
  const Rng parent_a = Rng::root(77).child(3);
  const Rng parent_b = Rng::root(77).child(3);
  const TaskBatch a = sample_batch(Matrix::identity(4), 9, 17, parent_a);
  const TaskBatch b = sample_batch(Matrix::identity(4), 9, 17, parent_b);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(max_abs_diff(a[i].covariates, b[i].covariates) == 0.0);
    CHECK(max_abs_diff(a[i].w_star, b[i].w_star) == 0.0);
    CHECK(a[i].query_label == b[i].query_label);
  }
}

TEST_CASE("batch instances do not depend on sampling order") {
  const Rng parent = Rng::root(91).child(0);
  const TaskBatch big = sample_batch(Matrix::identity(3), 5, 8, parent);
  const TaskBatch small = sample_batch(Matrix::identity(3), 5, 3, parent);
  for (std::size_t i = 0; i < small.size(); ++i) {
    CHECK(max_abs_diff(big[i].covariates, small[i].covariates) == 0.0);
  }
}

TEST_CASE("non-PD covariance is rejected") {
  Rng rng = Rng::root(5);
  CHECK_THROWS(sample_task(Matrix(3, 3), 4, rng));
}
