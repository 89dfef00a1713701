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

#include "memformer/baselines.hpp"
#include "memformer/linalg.hpp"
#include "memformer/tasks.hpp"

using namespace memformer;

namespace {

TaskInstance sample(std::uint64_t seed, const Matrix& sigma, int n) {
  Rng rng = Rng::root(seed).child(Stream::kTask);
  return sample_task(sigma, n, rng);
}

Matrix paper_sigma(std::uint64_t seed) {
  Rng rng = Rng::root(seed).child(Stream::kSigma);
  return sample_covariance(CovarianceSpec::non_isotropic_default(), rng);
}

}  // namespace

TEST_CASE("precond gd hand evaluation and fixed point") {
  TaskInstance task;
  task.covariates = Matrix(1, 1, {2});
  task.w_star = Matrix(1, 1, {1});
  task.labels = Matrix(1, 1, {2});
  task.query = Matrix(1, 1, {1});
  task.query_label = 1.0;
  task.sigma = Matrix::identity(1);
  // grad at w=0: (1/1) * 4 * (0 - 1) = -4, so w' = 0 - 1*(-4) = 4
  const Matrix w1 = precond_gd_step(Matrix(1, 1, {0}), Matrix::identity(1), task);
  CHECK(w1(0, 0) == Catch::Approx(4.0));
  const Matrix fixed = precond_gd_step(task.w_star, Matrix::identity(1), task);
  CHECK(max_abs_diff(fixed, task.w_star) == 0.0);
}

TEST_CASE("cgd reaches the minimizer in one step when H = I") {
  // covariates scaled so (1/n) X X^T = I: X = sqrt(n) * orthonormal columns
  const int d = 3, n = 3;
  TaskInstance task;
  task.covariates = scale(std::sqrt(static_cast<double>(n)), Matrix::identity(d));
  task.w_star = Matrix(d, 1, {1.0, -2.0, 0.5});
  task.labels = matmul(transpose(task.w_star), task.covariates);
  task.query = Matrix(d, 1, {1, 1, 1});
  task.query_label = dot(task.query, task.w_star);
  task.sigma = Matrix::identity(d);
  const CgdTrajectory t = cgd_run(task, 2);
  CHECK(max_abs_diff(t.iterates[1], task.w_star) < 1e-12);
  CHECK(empirical_loss(t.iterates[1], task) < 1e-24);
}

TEST_CASE("cgd terminates in two steps on a d=2 quadratic") {
  const TaskInstance task = sample(2, Matrix(2, 2, {2.0, 0.3, 0.3, 0.5}), 6);
  const CgdTrajectory t = cgd_run(task, 2);
  CHECK(max_abs_diff(t.iterates[2], task.w_star) < 1e-10);
}

TEST_CASE("cgd finite termination and conjugacy on full-rank tasks") {
  for (int seed = 0; seed < 25; ++seed) {
    const TaskInstance task = sample(100 + seed, paper_sigma(seed), 20);
    const CgdTrajectory t = cgd_run(task, 5);
    const double r0 = empirical_loss(t.iterates.front(), task);
    CHECK(empirical_loss(t.iterates.back(), task) / r0 < 1e-12);

    const int n = task.covariates.cols();
    auto h_apply = [&](const Matrix& s) {
      return scale(1.0 / n, matmul(task.covariates, matmul(transpose(task.covariates), s)));
    };
    for (std::size_t i = 0; i < t.directions.size(); ++i) {
      for (std::size_t j = i + 1; j < t.directions.size(); ++j) {
        const double hij = dot(t.directions[i], h_apply(t.directions[j]));
        const double ni = std::sqrt(dot(t.directions[i], h_apply(t.directions[i])));
        const double nj = std::sqrt(dot(t.directions[j], h_apply(t.directions[j])));
        CHECK(std::abs(hij) / (ni * nj) < 1e-6);
      }
    }
  }
}

TEST_CASE("cgd freezes instead of dividing by a vanishing gradient") {
  const TaskInstance task = sample(3, Matrix::identity(2), 5);
  const CgdTrajectory t = cgd_run(task, 6);  // exact after <= 2 steps
  CHECK(max_abs_diff(t.iterates[5], t.iterates.back()) == 0.0);
  CHECK(t.step_sizes.back() == 0.0);
  CHECK(std::isfinite(t.iterates.back().max_abs()));
}

TEST_CASE("first cgd iterate equals exact-line-search steepest descent") {
  const TaskInstance task = sample(4, paper_sigma(4), 20);
  const CgdTrajectory t = cgd_run(task, 1);
  const Matrix g = empirical_loss_grad(Matrix(5, 1), task);
  const int n = task.covariates.cols();
  const Matrix hg = scale(1.0 / n, matmul(task.covariates,
                                          matmul(transpose(task.covariates), g)));
  const double alpha = dot(g, g) / dot(g, hg);
  CHECK(max_abs_diff(t.iterates[1], scale(-alpha, g)) < 1e-12);
}

TEST_CASE("momentum with beta=0 is plain gd; stationary at the optimum") {
  const TaskInstance task = sample(5, paper_sigma(5), 20);
  const std::vector<Matrix> mgd = momentum_gd_run(task, 5, 0.01, 0.0);
  const std::vector<Matrix> gd = gd_run(task, 5, 0.01);
  for (std::size_t k = 0; k < mgd.size(); ++k) CHECK(max_abs_diff(mgd[k], gd[k]) < 1e-15);

  // with w* = 0 the start iterate sits at the optimum: zero gradient, no motion
  TaskInstance at_opt = task;
  at_opt.w_star = Matrix(5, 1);
  at_opt.labels = Matrix(1, 20);
  for (const Matrix& w : momentum_gd_run(at_opt, 3)) CHECK(w.max_abs() == 0.0);
  for (const Matrix& w : nag_run(at_opt, 3)) CHECK(w.max_abs() == 0.0);
}

TEST_CASE("nag with beta=0 is plain gd and its first step matches gd") {
  const TaskInstance task = sample(6, paper_sigma(6), 20);
  const std::vector<Matrix> nag0 = nag_run(task, 5, 0.03, 0.0);
  const std::vector<Matrix> gd = gd_run(task, 5, 0.03);
  for (std::size_t k = 0; k < nag0.size(); ++k) CHECK(max_abs_diff(nag0[k], gd[k]) < 1e-15);

  const std::vector<Matrix> nag = nag_run(task, 1);  // w_0 = w_{-1} makes step 1 plain gd
  CHECK(max_abs_diff(nag[1], gd_run(task, 1, 0.03)[1]) < 1e-15);
}

TEST_CASE("momentum loss decreases for the first 10 steps on most seeds") {
  int monotone = 0;
  const int seeds = 100;
  for (int seed = 0; seed < seeds; ++seed) {
    const TaskInstance task = sample(300 + seed, paper_sigma(700 + seed), 20);
    const std::vector<Matrix> iterates = momentum_gd_run(task, 10);
    bool ok = true;
    for (std::size_t k = 1; k < iterates.size(); ++k) {
      if (empirical_loss(iterates[k], task) > empirical_loss(iterates[k - 1], task)) {
        ok = false;
        break;
      }
    }
    monotone += ok ? 1 : 0;
  }
  CHECK(monotone >= 95);
}

TEST_CASE("nag beats plain gd after three steps on non-isotropic tasks, on average") {
  double nag_total = 0.0, gd_total = 0.0;
  const int seeds = 100;
  for (int seed = 0; seed < seeds; ++seed) {
    const TaskInstance task = sample(400 + seed, paper_sigma(900 + seed), 20);
    nag_total += empirical_loss(nag_run(task, 3)[3], task);
    gd_total += empirical_loss(gd_run(task, 3, 0.03)[3], task);
  }
  CHECK(nag_total / seeds < gd_total / seeds);
}

TEST_CASE("gdpp with zero contraction matches preconditioned gd predictions") {
  const TaskInstance task = sample(7, paper_sigma(7), 20);
  const double a = 0.35;
  const Matrix precond = scale(a, Matrix::identity(5));
  const GdppTrajectory t = gdpp_run(task, 4, {0.0}, precond);
  Matrix w(5, 1);
  for (int k = 0; k <= 4; ++k) {
    CHECK(t.predictions[k] == Catch::Approx(dot(task.query, w)).margin(1e-10));
    w = precond_gd_step(w, precond, task);
  }
}

TEST_CASE("gdpp degenerates when the contraction zeroes the covariates") {
  // (1/n) X X^T = I and gamma = 1 send X to exactly zero after one step.
  const int d = 2, n = 2;
  TaskInstance task;
  task.covariates = scale(std::sqrt(static_cast<double>(n)), Matrix::identity(d));
  task.w_star = Matrix(d, 1, {1.0, 2.0});
  task.labels = matmul(transpose(task.w_star), task.covariates);
  task.query = Matrix(d, 1, {1.0, -1.0});
  task.query_label = dot(task.query, task.w_star);
  task.sigma = Matrix::identity(d);
  const GdppTrajectory t = gdpp_run(task, 3, {1.0}, Matrix::identity(d));
  CHECK(t.predictions[2] == t.predictions[1]);
  CHECK(t.predictions[3] == t.predictions[1]);
}

TEST_CASE("one contraction with gamma = 1/lambda_max tightens the nonzero spectrum") {
  // Exact spectrum {1, 1, 0.5, 0.25, 1}: the transformed Hessian
  // H' = (I - H/lmax) H (I - H/lmax) has nonzero eigenvalues closer together.
  Rng rng = Rng::root(8);
  const Matrix sigma = sample_covariance(CovarianceSpec::non_isotropic_default(), rng);
  const SymEig eig = sym_eig(sigma);
  const double lmax = eig.values.back();
  const Matrix contract = sub(Matrix::identity(5), scale(1.0 / lmax, sigma));
  const Matrix transformed = matmul(matmul(contract, sigma), contract);
  const SymEig eig2 = sym_eig(transformed);
  std::vector<double> nonzero;
  for (double v : eig2.values) {
    if (v > 1e-9 * eig2.values.back()) nonzero.push_back(v);
  }
  REQUIRE(nonzero.size() >= 2);
  const double before = eig.values.back() / eig.values.front();
  const double after = nonzero.back() / nonzero.front();
  CHECK(after < before);
  CHECK(after < 1.5);  // close to flat
}
