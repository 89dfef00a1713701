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

#include "memformer/verify.hpp"

using namespace memformer;

namespace {

TaskInstance sample(std::uint64_t seed, int d, int n) {
  Rng rng = Rng::root(seed);
  Rng sig = rng.child(Stream::kSigma);
  const Matrix sigma =
      d == 5 ? sample_covariance(CovarianceSpec::non_isotropic_default(), sig)
             : Matrix::identity(d);
  Rng task_rng = rng.child(Stream::kTask);
  return sample_task(sigma, n, task_rng);
}

}  // namespace

TEST_CASE("weight-space oracle: zero preconditioners predict zero") {
  const TaskInstance task = sample(1, 5, 20);
  const std::vector<Matrix> zeros(3, Matrix(5, 5));
  for (double p : lemma1_oracle(task, zeros)) CHECK(p == 0.0);
}

TEST_CASE("weight-space oracle: one-layer closed form") {
  const TaskInstance task = sample(2, 5, 20);
  const double a = 0.37;
  const std::vector<Matrix> precond{scale(a, Matrix::identity(5))};
  const std::vector<double> preds = lemma1_oracle(task, precond);
  const Matrix xxt_w =
      matmul(task.covariates, matmul(transpose(task.covariates), task.w_star));
  CHECK(preds[1] == Catch::Approx(dot(task.query, scale(a / 20.0, xxt_w))).epsilon(1e-12));
}

TEST_CASE("lemma1 equivalence battery (reduced)") {
  const EquivalenceReport r = lemma1_equivalence(5, 20, 3, 100, 1e-10, 123);
  INFO(r.max_abs_deviation);
  CHECK(r.pass);
  CHECK(r.per_layer.size() == 4);
  CHECK(r.per_layer[0] == 0.0);  // layer 0 predictions are both zero
}

TEST_CASE("lemma1 equivalence holds at four layers and smaller prompts") {
  const EquivalenceReport deep = lemma1_equivalence(5, 20, 4, 50, 1e-10, 124);
  INFO(deep.max_abs_deviation);
  CHECK(deep.pass);
  const EquivalenceReport tiny = lemma1_equivalence(3, 8, 4, 50, 1e-10, 125);
  INFO(tiny.max_abs_deviation);
  CHECK(tiny.pass);
}

TEST_CASE("prop1: one layer equals exact-line-search steepest descent") {
  const TaskInstance task = sample(3, 5, 20);
  const EquivalenceReport r = prop1_check(task, 1, 1e-10);
  CHECK(r.pass);
}

TEST_CASE("prop1: d=2 instance matches at every layer to 1e-10") {
  const TaskInstance task = sample(4, 2, 10);
  const EquivalenceReport r = prop1_check(task, 2, 1e-10);
  INFO(r.max_abs_deviation);
  CHECK(r.pass);
}

TEST_CASE("prop1 equivalence battery (reduced)") {
  const EquivalenceReport r = prop1_equivalence(5, 20, 3, 25, 1e-8, 321);
  INFO(r.max_abs_deviation);
  CHECK(r.pass);
}

TEST_CASE("prop2: all-zero gates predict zero on both sides") {
  const TaskInstance task = sample(5, 5, 20);
  const EquivalenceReport r = prop2_check(task, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}, 1e-12);
  CHECK(r.pass);
  CHECK(r.max_abs_deviation == 0.0);
}

TEST_CASE("prop2: a single unit gate is one plain gd step on both sides") {
  // gate +1 with unit preconditioner reproduces the descent step; the
  // weight-space simulation and the attention model agree exactly.
  const TaskInstance task = sample(6, 5, 20);
  const EquivalenceReport r = prop2_check(task, {1.0}, {1.0}, 1e-12);
  CHECK(r.pass);

  ModelConfig cfg;
  cfg.variant = Variant::kMemformerLfom;
  cfg.dim = 5;
  cfg.prompt_len = 20;
  cfg.layers = 1;
  cfg.scalar_gates = true;
  ModelParams params = ModelParams::init(cfg, Rng::root(0), 0.0);
  params.layers[0].gate_scale = Matrix::scalar(1.0);
  params.layers[0].heads[0].precond = Matrix::identity(5);
  const Matrix w1 = precond_gd_step(Matrix(5, 1), Matrix::identity(5), task);
  CHECK(predict(params, task) == Catch::Approx(dot(task.query, w1)).epsilon(1e-12));
}

TEST_CASE("prop2 equivalence battery (reduced)") {
  const EquivalenceReport r = prop2_equivalence(5, 20, 3, 25, 1e-10, 555);
  INFO(r.max_abs_deviation);
  CHECK(r.pass);
}

TEST_CASE("cgd invariants battery (reduced)") {
  const EquivalenceReport r = cgd_invariants(5, 20, 25, 1e-12, 1e-6, 777);
  INFO(r.per_layer[0]);
  INFO(r.per_layer[1]);
  CHECK(r.pass);
}

TEST_CASE("gradient checks pass for every variant") {
  ModelConfig base;
  base.dim = 2;
  base.prompt_len = 3;
  base.layers = 2;

  SECTION("linear transformer") {
    base.variant = Variant::kLinearTf;
    const EquivalenceReport r = grad_check_full(base, 1e-5, 1);
    INFO(r.max_abs_deviation);
    CHECK(r.pass);
  }
  SECTION("memformer with dynamic memory") {
    base.variant = Variant::kMemformerCgd;
    const EquivalenceReport r = grad_check_full(base, 1e-5, 2);
    INFO(r.max_abs_deviation);
    CHECK(r.pass);
  }
  SECTION("memformer with tied gates accumulates across layer sums") {
    base.variant = Variant::kMemformerLfom;
    const EquivalenceReport r = grad_check_full(base, 1e-5, 3);
    INFO(r.max_abs_deviation);
    CHECK(r.pass);
  }
  SECTION("memformer with untied gates") {
    base.variant = Variant::kMemformerLfom;
    base.tie_gates = false;
    const EquivalenceReport r = grad_check_full(base, 1e-5, 4);
    INFO(r.max_abs_deviation);
    CHECK(r.pass);
  }
  SECTION("scalar gates") {
    base.variant = Variant::kMemformerLfom;
    base.scalar_gates = true;
    const EquivalenceReport r = grad_check_full(base, 1e-5, 5);
    INFO(r.max_abs_deviation);
    CHECK(r.pass);
  }
  SECTION("covariate-mixing blocks") {
    base.variant = Variant::kMemformerLfomGdpp;
    const EquivalenceReport r = grad_check_full(base, 1e-5, 6);
    INFO(r.max_abs_deviation);
    CHECK(r.pass);
  }
  SECTION("multi-head") {
    base.variant = Variant::kMemformerCgd;
    base.heads = 2;
    const EquivalenceReport r = grad_check_full(base, 1e-5, 7);
    INFO(r.max_abs_deviation);
    CHECK(r.pass);
  }
}

TEST_CASE("report serialization carries the pass flag and deviations") {
  const TaskInstance task = sample(7, 5, 20);
  const EquivalenceReport r = prop1_check(task, 3, 1e-8);
  const nlohmann::json j = r.to_json();
  CHECK(j.at("pass").get<bool>() == r.pass);
  CHECK(j.at("per_layer").size() == r.per_layer.size());
  CHECK(j.at("tolerance").get<double>() == 1e-8);
}
