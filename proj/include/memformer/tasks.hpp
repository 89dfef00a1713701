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

// Random linear-regression tasks and their prompt matrices.
//
// A task draws covariates x_i ~ N(0, Sigma) and a target w* ~ N(0, Sigma^-1),
// with Sigma = U^T D U for a Haar-random orthogonal U and a fixed spectrum D.
// The prompt stacks covariates over labels, with the query in the last
// column and a zero where its unknown label would sit.
//
// Indexing note: the prompt is (d+1) x (n+1); code uses 0-based indices, so
// the label row is row `d` and the query column is column `n`.

#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "memformer/linalg.hpp"
#include "memformer/matrix.hpp"
#include "memformer/rng.hpp"

namespace memformer {

struct CovarianceSpec {
  int dim = 5;
  std::vector<double> spectrum = {1.0, 1.0, 0.5, 0.25, 1.0};
  bool isotropic = false;

  static CovarianceSpec non_isotropic_default() { return CovarianceSpec{}; }

  static CovarianceSpec identity(int d) {
    CovarianceSpec s;
    s.dim = d;
    s.spectrum.assign(d, 1.0);
    s.isotropic = true;
    return s;
  }

  void validate() const {
    if (dim < 1) throw std::invalid_argument("CovarianceSpec: dim must be >= 1");
    if (static_cast<int>(spectrum.size()) != dim) {
      throw std::invalid_argument("CovarianceSpec: spectrum size != dim");
    }
    for (double v : spectrum) {
      if (!(v > 0.0)) throw std::invalid_argument("CovarianceSpec: spectrum entries must be > 0");
    }
  }
};

struct TaskInstance {
  Matrix covariates;   // d x n, columns are examples
  Matrix labels;       // 1 x n, labels[i] = <x_i, w*>
  Matrix w_star;       // d x 1
  Matrix query;        // d x 1
  double query_label;  // <query, w*>; held out, evaluation only
  Matrix sigma;        // d x d
};

using TaskBatch = std::vector<TaskInstance>;

// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
// R-diagonal signs folded into Q.
inline Matrix haar_orthogonal(int d, Rng& rng) {
  QrResult qr = householder_qr(rng.gaussian_matrix(d, d));
  Matrix u = qr.q;
  for (int j = 0; j < d; ++j) {
    if (qr.r(j, j) < 0.0) {
      for (int i = 0; i < d; ++i) u(i, j) = -u(i, j);
    }
  }
  return u;
}

inline Matrix sample_covariance(const CovarianceSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.isotropic) return Matrix::identity(spec.dim);
  const Matrix u = haar_orthogonal(spec.dim, rng);
  Matrix d(spec.dim, spec.dim);
  for (int i = 0; i < spec.dim; ++i) d(i, i) = spec.spectrum[i];
  return matmul(matmul(transpose(u), d), u);
}

// Draws n prompt covariates plus a query, all i.i.d. N(0, Sigma), and
// w* ~ N(0, Sigma^-1) through the symmetric square roots of Sigma.
inline TaskInstance sample_task(const Matrix& sigma, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_task: n must be >= 1");
  const int d = sigma.rows();
  const Matrix half = sym_sqrt(sigma);          // throws unless PD
  const Matrix inv_half = sym_inv_sqrt(sigma);

  TaskInstance task;
  task.sigma = sigma;
  task.covariates = matmul(half, rng.gaussian_matrix(d, n));
  task.query = matmul(half, rng.gaussian_matrix(d, 1));
  task.w_star = matmul(inv_half, rng.gaussian_matrix(d, 1));
  task.labels = matmul(transpose(task.w_star), task.covariates);
  task.query_label = dot(task.query, task.w_star);
  return task;
}

inline TaskBatch sample_batch(const Matrix& sigma, int n, int count, const Rng& parent) {
  TaskBatch batch;
  batch.reserve(count);
  for (int i = 0; i < count; ++i) {
    Rng stream = parent.child(Stream::kTask).child(static_cast<std::uint64_t>(i));
    batch.push_back(sample_task(sigma, n, stream));
  }
  return batch;
}

// Prompt layout: top-left d x n block = covariates, row d = labels,
// column n = query with a zero in the label slot.
inline Matrix build_prompt(const TaskInstance& task) {
  const int d = task.covariates.rows();
  const int n = task.covariates.cols();
  Matrix z(d + 1, n + 1);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < n; ++j) z(i, j) = task.covariates(i, j);
    z(i, n) = task.query(i, 0);
  }
  for (int j = 0; j < n; ++j) z(d, j) = task.labels(0, j);
  z(d, n) = 0.0;
  return z;
}

inline Matrix prompt_covariates(const Matrix& z) {
  const int d = z.rows() - 1, n = z.cols() - 1;
  Matrix x(d, n);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < n; ++j) x(i, j) = z(i, j);
  return x;
}

inline Matrix prompt_labels(const Matrix& z) {
  const int d = z.rows() - 1, n = z.cols() - 1;
  Matrix y(1, n);
  for (int j = 0; j < n; ++j) y(0, j) = z(d, j);
  return y;
}

inline Matrix prompt_query(const Matrix& z) {
  const int d = z.rows() - 1, n = z.cols() - 1;
  Matrix q(d, 1);
  for (int i = 0; i < d; ++i) q(i, 0) = z(i, n);
  return q;
}

// In-context least-squares loss (1/2n) (w - w*)^T X X^T (w - w*).
inline double empirical_loss(const Matrix& w, const TaskInstance& task) {
  const int n = task.covariates.cols();
  const Matrix diff = sub(w, task.w_star);
  const Matrix xt_diff = matmul(transpose(task.covariates), diff);  // n x 1
  return dot(xt_diff, xt_diff) / (2.0 * n);
}

// Its gradient (1/n) X X^T (w - w*).
inline Matrix empirical_loss_grad(const Matrix& w, const TaskInstance& task) {
  const int n = task.covariates.cols();
  const Matrix diff = sub(w, task.w_star);
  return scale(1.0 / n, matmul(task.covariates, matmul(transpose(task.covariates), diff)));
}

// Squared error of a query prediction; the per-layer quantity behind every
// loss-versus-layer curve.
inline double query_sq_error(double prediction, const TaskInstance& task) {
  const double e = prediction - task.query_label;
  return e * e;
}

// Debug dump, long format: instance,field,row,col,value. The shared sigma
// is written once with instance -1.
inline void dump_batch_csv(const std::string& path, const TaskBatch& batch) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dump_batch_csv: cannot open " + path);
  out << "instance,field,row,col,value\n";
  auto emit = [&out](int inst, const char* field, const Matrix& m) {
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j)
        out << inst << ',' << field << ',' << i << ',' << j << ',' << m(i, j) << '\n';
  };
  if (!batch.empty()) emit(-1, "sigma", batch.front().sigma);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const TaskInstance& t = batch[k];
    const int inst = static_cast<int>(k);
    emit(inst, "covariates", t.covariates);
    emit(inst, "labels", t.labels);
    emit(inst, "w_star", t.w_star);
    emit(inst, "query", t.query);
    out << inst << ",query_label,0,0," << t.query_label << '\n';
  }
}

}  // namespace memformer
