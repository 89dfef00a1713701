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

// Meta-training loop: ADAM on the in-context objective with per-matrix
// gradient clipping and periodic batch resampling.
//
// Batch elements are evaluated on independent tapes, possibly in parallel;
// every instance writes its loss and gradients into its own slot and the
// reduction always sums slot 0..B-1 in order, so results do not depend on
// the thread count.

#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "memformer/model.hpp"
#include "memformer/rng.hpp"
#include "memformer/tape.hpp"
#include "memformer/tasks.hpp"

namespace memformer {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  int batch_size = 1000;
  int resample_every = 100;
  double clip_norm = 0.01;
  AdamConfig adam;
  int total_steps = 10000;
  int n_runs = 5;
  std::uint64_t seed = 1;
  double init_std = 0.1;
  int eval_batch_size = 1000;
  bool eval_on_final_train_batch = false;  // small-batch figures read train loss
  int threads = 0;  // 0 = hardware concurrency
  double divergence_limit = 1e12;
  CovarianceSpec cov;
  ModelConfig model;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (total_steps < 0) throw std::invalid_argument("TrainConfig: total_steps must be >= 0");
    if (resample_every < 1) throw std::invalid_argument("TrainConfig: resample_every must be >= 1");
    if (!(clip_norm > 0)) throw std::invalid_argument("TrainConfig: clip_norm must be > 0");
    if (n_runs < 1) throw std::invalid_argument("TrainConfig: n_runs must be >= 1");
    if (eval_batch_size < 1) throw std::invalid_argument("TrainConfig: eval_batch_size must be >= 1");
    cov.validate();
    model.validate();
  }
};

// Frobenius-norm clip, applied independently to each parameter tensor.
inline void clip_matrix(Matrix& g, double max_norm = 0.01) {
  const double norm = g.frobenius_norm();
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (double& v : g.data()) v *= f;
  }
}

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;

  static AdamState init(const std::vector<Matrix*>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Matrix* p : params) {
      s.m.emplace_back(p->rows(), p->cols());
      s.v.emplace_back(p->rows(), p->cols());
    }
    return s;
  }
};

// Standard ADAM with bias correction. Gradients are expected pre-clipped.
inline void adam_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads,
                      AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& theta = *params[p];
    const Matrix& g = grads[p];
    detail::require_same_shape("adam_step", theta, g);
    Matrix& m = state.m[p];
    Matrix& v = state.v[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g.data()[i];
      m.data()[i] = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
      v.data()[i] = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = m.data()[i] / bc1;
      const double v_hat = v.data()[i] / bc2;
      theta.data()[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

struct BatchGradient {
  double loss = 0.0;
  std::vector<Matrix> grads;  // mean over the batch, per parameter
};

// Loss and gradient of the objective over a batch; parallel over instances
// with an order-fixed reduction.
inline BatchGradient batch_gradient(const ModelParams& params, const ParamLayout& layout,
                                    const TaskBatch& batch, int threads) {
  const int b = static_cast<int>(batch.size());
  if (b == 0) throw std::invalid_argument("batch_gradient: empty batch");
  std::vector<double> losses(b, 0.0);
  std::vector<std::vector<Matrix>> grads(b);

  auto work = [&](int i) {
    Tape tape;
    const TapeBinder binder{&tape};
    const BoundModel<Value> bound = bind_model(binder, params, layout);
    const Value z0 = tape.constant(build_prompt(batch[i]));
    const ForwardResult<Value> fwd = forward_model(z0, bound);
    const Value err = tape.sub(fwd.predictions.back(),
                               tape.constant(Matrix::scalar(batch[i].query_label)));
    const Value loss = tape.square(err);
    losses[i] = tape.val(loss)(0, 0);
    grads[i] = tape.backward(loss, layout.count());
  };

  int n_threads = threads > 0 ? threads
                              : static_cast<int>(std::thread::hardware_concurrency());
  if (n_threads < 1) n_threads = 1;
  if (n_threads == 1 || b == 1) {
    for (int i = 0; i < b; ++i) work(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) {
      pool.emplace_back([&]() {
        for (int i = next.fetch_add(1); i < b; i = next.fetch_add(1)) work(i);
      });
    }
    for (std::thread& t : pool) t.join();
  }

  BatchGradient out;
  out.grads.resize(layout.count());
  for (int p = 0; p < layout.count(); ++p) {
    out.grads[p] = grads[0][p];
    for (int i = 1; i < b; ++i) out.grads[p] = add(out.grads[p], grads[i][p]);
    out.grads[p] = scale(1.0 / b, out.grads[p]);
  }
  for (int i = 0; i < b; ++i) out.loss += losses[i];
  out.loss /= b;
  return out;
}

struct RunRecord {
  int run_index = 0;
  std::uint64_t seed = 0;
  std::vector<double> train_loss;      // objective estimate per step
  std::vector<double> layer_loss;      // final eval, per layer 0..L
  std::vector<double> layer_log_loss;  // natural log of the above
  bool aborted = false;
  std::string abort_reason;
  double wall_seconds = 0.0;
  ModelParams final_params;
};

inline Rng run_rng(const TrainConfig& cfg, int run) {
  return Rng::root(cfg.seed).child(static_cast<std::uint64_t>(run));
}

inline Matrix run_sigma(const TrainConfig& cfg, int run) {
  Rng rng = run_rng(cfg, run).child(Stream::kSigma);
  return sample_covariance(cfg.cov, rng);
}

inline TaskBatch train_batch_for_run(const TrainConfig& cfg, int run, int epoch,
                                     const Matrix& sigma) {
  return sample_batch(sigma, cfg.model.prompt_len, cfg.batch_size,
                      run_rng(cfg, run).child(Stream::kBatch).child(epoch));
}

inline TaskBatch eval_batch_for_run(const TrainConfig& cfg, int run, const Matrix& sigma) {
  if (cfg.eval_on_final_train_batch) {
    const int last_epoch = cfg.total_steps == 0
                               ? 0
                               : (cfg.total_steps - 1) / cfg.resample_every;
    return train_batch_for_run(cfg, run, last_epoch, sigma);
  }
  return sample_batch(sigma, cfg.model.prompt_len, cfg.eval_batch_size,
                      run_rng(cfg, run).child(Stream::kEval));
}

// One training run: fixed covariance, batches resampled on schedule, final
// per-layer evaluation on a held-out batch (or the last training batch).
inline RunRecord train_run(const TrainConfig& cfg, int run) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord record;
  record.run_index = run;
  record.seed = cfg.seed;

  const Matrix sigma = run_sigma(cfg, run);
  ModelParams params =
      ModelParams::init(cfg.model, run_rng(cfg, run).child(Stream::kInit), cfg.init_std);
  const ParamLayout layout = ParamLayout::build(cfg.model);
  std::vector<Matrix*> slots = collect_params(params, layout);
  AdamState adam = AdamState::init(slots);

  TaskBatch batch;
  for (int step = 0; step < cfg.total_steps; ++step) {
    if (step % cfg.resample_every == 0) {
      batch = train_batch_for_run(cfg, run, step / cfg.resample_every, sigma);
    }
    BatchGradient bg = batch_gradient(params, layout, batch, cfg.threads);
    record.train_loss.push_back(bg.loss);
    if (!std::isfinite(bg.loss) || bg.loss > cfg.divergence_limit) {
      record.aborted = true;
      record.abort_reason = "divergence at step " + std::to_string(step) +
                            ": loss = " + std::to_string(bg.loss);
      break;
    }
    for (Matrix& g : bg.grads) {
      if (!g.all_finite()) {
        record.aborted = true;
        record.abort_reason = "non-finite gradient at step " + std::to_string(step);
        break;
      }
      clip_matrix(g, cfg.clip_norm);
    }
    if (record.aborted) break;
    adam_step(slots, bg.grads, adam, cfg.adam);
  }

  const TaskBatch eval = eval_batch_for_run(cfg, run, sigma);
  record.layer_loss = per_layer_objective(params, eval);
  record.layer_log_loss.reserve(record.layer_loss.size());
  for (double v : record.layer_loss) record.layer_log_loss.push_back(std::log(v));
  record.final_params = params;
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return record;
}

inline std::vector<RunRecord> train(const TrainConfig& cfg) {
  std::vector<RunRecord> records;
  records.reserve(cfg.n_runs);
  for (int run = 0; run < cfg.n_runs; ++run) records.push_back(train_run(cfg, run));
  return records;
}

struct AveragedCurve {
  std::vector<double> mean;
  std::vector<double> stderr_;  // sample standard error of the mean
};

inline AveragedCurve average_curves(const std::vector<std::vector<double>>& curves) {
  if (curves.empty()) throw std::invalid_argument("average_curves: no curves");
  const std::size_t len = curves.front().size();
  for (const auto& c : curves) {
    if (c.size() != len) throw std::invalid_argument("average_curves: length mismatch");
  }
  AveragedCurve out;
  out.mean.assign(len, 0.0);
  out.stderr_.assign(len, 0.0);
  const double r = static_cast<double>(curves.size());
  for (const auto& c : curves)
    for (std::size_t i = 0; i < len; ++i) out.mean[i] += c[i] / r;
  if (curves.size() > 1) {
    for (const auto& c : curves)
      for (std::size_t i = 0; i < len; ++i) {
        const double d = c[i] - out.mean[i];
        out.stderr_[i] += d * d;
      }
    for (std::size_t i = 0; i < len; ++i) {
      out.stderr_[i] = std::sqrt(out.stderr_[i] / (r - 1.0)) / std::sqrt(r);
    }
  }
  return out;
}

// Pointwise mean of the per-layer log-loss curves across runs.
inline AveragedCurve average_runs(const std::vector<RunRecord>& records) {
  std::vector<std::vector<double>> curves;
  curves.reserve(records.size());
  for (const RunRecord& r : records) curves.push_back(r.layer_log_loss);
  return average_curves(curves);
}

// ---------------------------------------------------------------------------
// key=value config files.
// ---------------------------------------------------------------------------

inline void apply_config_entry(TrainConfig& cfg, const std::string& key,
                               const std::string& value) {
  auto as_int = [&] { return std::stoi(value); };
  auto as_double = [&] { return std::stod(value); };
  auto as_bool = [&] {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw std::invalid_argument("config: bad bool for " + key + ": " + value);
  };
  if (key == "batch_size") cfg.batch_size = as_int();
  else if (key == "resample_every") cfg.resample_every = as_int();
  else if (key == "clip_norm") cfg.clip_norm = as_double();
  else if (key == "lr") cfg.adam.lr = as_double();
  else if (key == "beta1") cfg.adam.beta1 = as_double();
  else if (key == "beta2") cfg.adam.beta2 = as_double();
  else if (key == "eps") cfg.adam.eps = as_double();
  else if (key == "total_steps") cfg.total_steps = as_int();
  else if (key == "n_runs") cfg.n_runs = as_int();
  else if (key == "seed") cfg.seed = std::stoull(value);
  else if (key == "init_std") cfg.init_std = as_double();
  else if (key == "eval_batch_size") cfg.eval_batch_size = as_int();
  else if (key == "eval_on_final_train_batch") cfg.eval_on_final_train_batch = as_bool();
  else if (key == "threads") cfg.threads = as_int();
  else if (key == "isotropic") {
    if (as_bool()) cfg.cov = CovarianceSpec::identity(cfg.model.dim);
  }
  else if (key == "variant") cfg.model.variant = variant_from_name(value);
  else if (key == "layers") cfg.model.layers = as_int();
  else if (key == "heads") cfg.model.heads = as_int();
  else if (key == "dim") cfg.model.dim = as_int();
  else if (key == "prompt_len") cfg.model.prompt_len = as_int();
  else if (key == "tie_gates") cfg.model.tie_gates = as_bool();
  else if (key == "scalar_gates") cfg.model.scalar_gates = as_bool();
  else if (key == "train_precond") cfg.model.train_precond = as_bool();
  else if (key == "identity_precond") cfg.model.identity_precond = as_bool();
  else throw std::invalid_argument("config: unknown key " + key);
}

inline TrainConfig parse_train_config(std::istream& in, TrainConfig cfg = {}) {
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) continue;
    apply_config_entry(cfg, key, value);
  }
  return cfg;
}

inline TrainConfig load_train_config(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return parse_train_config(in, std::move(base));
}

inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return nlohmann::json{{"batch_size", cfg.batch_size},
                        {"resample_every", cfg.resample_every},
                        {"clip_norm", cfg.clip_norm},
                        {"lr", cfg.adam.lr},
                        {"beta1", cfg.adam.beta1},
                        {"beta2", cfg.adam.beta2},
                        {"eps", cfg.adam.eps},
                        {"total_steps", cfg.total_steps},
                        {"n_runs", cfg.n_runs},
                        {"seed", cfg.seed},
                        {"init_std", cfg.init_std},
                        {"eval_batch_size", cfg.eval_batch_size},
                        {"eval_on_final_train_batch", cfg.eval_on_final_train_batch},
                        {"isotropic", cfg.cov.isotropic},
                        {"cov_spectrum", cfg.cov.spectrum},
                        {"model", config_to_json(cfg.model)}};
}

}  // namespace memformer
