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

// Classical optimizers run per task instance on the in-context quadratic.
// They draw the comparison curves in every figure and serve as the
// equivalence oracles in verify.hpp.

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "memformer/matrix.hpp"
#include "memformer/tasks.hpp"

namespace memformer {

// One preconditioned gradient-descent step w - A grad(R)(w).
inline Matrix precond_gd_step(const Matrix& w, const Matrix& precond,
                              const TaskInstance& task) {
  return sub(w, matmul(precond, empirical_loss_grad(w, task)));
}

inline std::vector<Matrix> gd_run(const TaskInstance& task, int steps, double lr) {
  std::vector<Matrix> iterates{Matrix(task.covariates.rows(), 1)};
  for (int k = 0; k < steps; ++k) {
    iterates.push_back(
        sub(iterates.back(), scale(lr, empirical_loss_grad(iterates.back(), task))));
  }
  return iterates;
}

struct CgdTrajectory {
  std::vector<Matrix> iterates;     // w_0 .. w_steps
  std::vector<Matrix> directions;   // search directions actually taken
  std::vector<double> step_sizes;   // alpha_k, zero once frozen
  std::vector<double> deflections;  // gamma_k with gamma_0 = 0, zero once frozen
};

// Fletcher-Reeves conjugate gradient with the closed-form exact line search
// for quadratics. Freezes (and repeats the iterate) once the gradient norm
// drops below 1e-14 or a direction has nonpositive curvature, so requested
// step counts are always filled.
inline CgdTrajectory cgd_run(const TaskInstance& task, int steps) {
  const int d = task.covariates.rows();
  const int n = task.covariates.cols();
  CgdTrajectory out;
  Matrix w(d, 1);
  out.iterates.push_back(w);
  Matrix grad = empirical_loss_grad(w, task);
  Matrix dir = neg(grad);
  double grad_sq = dot(grad, grad);
  double dir_gamma = 0.0;  // coefficient that linked dir to its predecessor
  bool frozen = false;
  for (int k = 0; k < steps; ++k) {
    if (!frozen && std::sqrt(grad_sq) < 1e-14) frozen = true;
    if (!frozen) {
      // H s with H = (1/n) X X^T
      const Matrix hs = scale(1.0 / n, matmul(task.covariates,
                                              matmul(transpose(task.covariates), dir)));
      const double shs = dot(dir, hs);
      if (shs <= 0.0) frozen = true;  // direction exhausted, rank deficiency
      if (!frozen) {
        const double alpha = -dot(grad, dir) / shs;
        out.directions.push_back(dir);
        out.step_sizes.push_back(alpha);
        out.deflections.push_back(dir_gamma);
        w = add(w, scale(alpha, dir));
        out.iterates.push_back(w);

        const Matrix next_grad = empirical_loss_grad(w, task);
        const double next_grad_sq = dot(next_grad, next_grad);
        dir_gamma = next_grad_sq / grad_sq;  // conjugacy coefficient
        dir = add(neg(next_grad), scale(dir_gamma, dir));
        grad = next_grad;
        grad_sq = next_grad_sq;
        continue;
      }
    }
    out.iterates.push_back(w);
    out.step_sizes.push_back(0.0);
    out.deflections.push_back(0.0);
  }
  return out;
}

// Momentum gradient descent, velocity form.
inline std::vector<Matrix> momentum_gd_run(const TaskInstance& task, int steps,
                                           double lr = 0.005, double beta = 0.9) {
  const int d = task.covariates.rows();
  std::vector<Matrix> iterates{Matrix(d, 1)};
  Matrix velocity(d, 1);
  for (int k = 0; k < steps; ++k) {
    velocity = sub(scale(beta, velocity),
                   scale(lr, empirical_loss_grad(iterates.back(), task)));
    iterates.push_back(add(iterates.back(), velocity));
  }
  return iterates;
}

// Nesterov accelerated gradient with the lookahead point; w_{-1} = w_0 = 0.
inline std::vector<Matrix> nag_run(const TaskInstance& task, int steps,
                                   double lr = 0.03, double beta = 0.9) {
  const int d = task.covariates.rows();
  std::vector<Matrix> iterates{Matrix(d, 1)};
  Matrix prev(d, 1);
  for (int k = 0; k < steps; ++k) {
    const Matrix& w = iterates.back();
    const Matrix lookahead = add(w, scale(beta, sub(w, prev)));
    prev = w;
    iterates.push_back(sub(lookahead, scale(lr, empirical_loss_grad(lookahead, task))));
  }
  return iterates;
}

struct GdppTrajectory {
  std::vector<double> predictions;  // query readout per step, step 0 = 0
  std::vector<double> losses;       // squared query error per step
};

// Quasi-Newton comparison curve: each step applies the label update with
// preconditioner A on the current covariates and simultaneously contracts
// the covariates by (I - gamma_k (1/n) X X^T). gammas shorter than `steps`
// repeat their last entry.
inline GdppTrajectory gdpp_run(const TaskInstance& task, int steps,
                               const std::vector<double>& gammas,
                               const Matrix& precond) {
  if (gammas.empty()) throw std::invalid_argument("gdpp_run: gammas must be non-empty");
  const int n = task.covariates.cols();
  Matrix xs = task.covariates;  // d x n
  Matrix xq = task.query;       // d x 1
  Matrix ys = task.labels;      // 1 x n
  double corner = 0.0;
  GdppTrajectory out;
  out.predictions.push_back(-corner);
  out.losses.push_back(query_sq_error(-corner, task));
  for (int k = 0; k < steps; ++k) {
    const double gamma = gammas[std::min<std::size_t>(k, gammas.size() - 1)];
    const Matrix common = matmul(matmul(ys, transpose(xs)), precond);  // 1 x d
    const Matrix h = scale(1.0 / n, matmul(xs, transpose(xs)));
    const Matrix contract = sub(Matrix::identity(xs.rows()), scale(gamma, h));
    // label and covariate updates both read the pre-step state
    const Matrix new_ys = sub(ys, scale(1.0 / n, matmul(common, xs)));
    corner -= dot(transpose(common), xq) / n;
    ys = new_ys;
    xs = matmul(contract, xs);
    xq = matmul(contract, xq);
    out.predictions.push_back(-corner);
    out.losses.push_back(query_sq_error(-corner, task));
  }
  return out;
}

}  // namespace memformer
