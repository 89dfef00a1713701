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

// Figure registry: each preset bundles the data regime, the models to
// train, the per-instance baselines to run on the same evaluation batch,
// and the training protocol (d=5, n=20, L=3, batch 1000, clip 0.01,
// resample every 100 steps, five runs with fresh covariance rotations).
//
// Outputs per figure: <id>.csv with columns layer,curve_name,mean_log_loss,
// stderr (natural log, layer 0 = before any update), an SVG rendering, and
// a JSON metadata file with every resolved configuration value.

#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "memformer/baselines.hpp"
#include "memformer/io.hpp"
#include "memformer/model.hpp"
#include "memformer/svg.hpp"
#include "memformer/trainer.hpp"

namespace memformer {

struct ModelEntry {
  std::string curve_name;
  ModelConfig model;
  // per-curve protocol tweaks; slow-converging entries train longer at a
  // smaller rate without inflating the whole figure
  std::optional<int> steps;
  std::optional<double> lr;
};

struct ExperimentSpec {
  std::string id;
  std::string description;
  std::vector<ModelEntry> models;
  std::vector<std::string> baselines;  // of: cgd, nag, mgd, gd, gdpp
  TrainConfig base;                    // model field is filled per entry
  double gdpp_gamma = 0.25;
};

namespace detail {
inline TrainConfig paper_protocol() {
  TrainConfig cfg;
  cfg.batch_size = 1000;
  cfg.resample_every = 100;
  cfg.clip_norm = 0.01;
  cfg.adam = AdamConfig{};
  cfg.n_runs = 5;
  cfg.seed = 1;
  cfg.init_std = 0.1;
  cfg.eval_batch_size = 1000;
  cfg.cov = CovarianceSpec::non_isotropic_default();
  return cfg;
}

inline ModelConfig base_model(Variant v) {
  ModelConfig m;
  m.variant = v;
  m.layers = 3;
  m.heads = 1;
  m.dim = 5;
  m.prompt_len = 20;
  return m;
}
}  // namespace detail

inline std::vector<ExperimentSpec> figure_presets() {
  using detail::base_model;
  std::vector<ExperimentSpec> out;

  ModelConfig linear_tf = base_model(Variant::kLinearTf);

  ModelConfig cgd_plain = base_model(Variant::kMemformerCgd);
  cgd_plain.train_precond = false;
  cgd_plain.identity_precond = true;

  ModelConfig cgd_pre = base_model(Variant::kMemformerCgd);

  ModelConfig lfom_plain = base_model(Variant::kMemformerLfom);
  lfom_plain.train_precond = false;
  lfom_plain.identity_precond = true;

  ModelConfig lfom_pre = base_model(Variant::kMemformerLfom);

  ModelConfig gdpp = base_model(Variant::kMemformerLfomGdpp);

  ModelConfig lfom_scalar = base_model(Variant::kMemformerLfom);
  lfom_scalar.scalar_gates = true;

  {
    ExperimentSpec s;
    s.id = "fig1a";
    s.description = "memformer with learned step/deflection scalars (no preconditioning) "
                    "vs per-instance CGD, non-isotropic data";
    s.base = detail::paper_protocol();
    s.base.total_steps = 1500;
    s.models = {{"linear_tf", linear_tf}, {"memformer_cgd", cgd_plain}};
    s.baselines = {"cgd"};
    out.push_back(s);
  }
  {
    ExperimentSpec s;
    s.id = "fig1b";
    s.description = "memformer with trained matrix preconditioners plus memory scalars "
                    "vs per-instance CGD, non-isotropic data";
    s.base = detail::paper_protocol();
    s.base.total_steps = 3000;
    s.models = {{"linear_tf", linear_tf}, {"memformer_cgd_pre", cgd_pre}};
    s.baselines = {"cgd"};
    out.push_back(s);
  }
  {
    ExperimentSpec s;
    s.id = "fig2a";
    s.description = "cumulative-memory LFOM memformer (tied gates) on non-isotropic data";
    s.base = detail::paper_protocol();
    s.base.total_steps = 3000;
    s.models = {{"linear_tf", linear_tf},
                {"memformer_lfom", lfom_plain},
                {"memformer_lfom_pre", lfom_pre}};
    s.baselines = {"cgd"};
    out.push_back(s);
  }
  {
    ExperimentSpec s;
    s.id = "fig2b";
    s.description = "cumulative-memory LFOM memformer on isotropic data";
    s.base = detail::paper_protocol();
    s.base.total_steps = 3000;
    s.base.cov = CovarianceSpec::identity(5);
    s.models = {{"linear_tf", linear_tf}, {"memformer_lfom_pre", lfom_pre}};
    s.baselines = {"cgd"};
    out.push_back(s);
  }
  {
    ExperimentSpec s;
    s.id = "fig3a";
    s.description = "LFOM memformer with covariate-mixing blocks (quasi-Newton style) "
                    "on non-isotropic data";
    s.base = detail::paper_protocol();
    s.base.total_steps = 3000;
    s.models = {{"linear_tf", linear_tf},
                {"memformer_lfom_pre", lfom_pre},
                {"memformer_gdpp", gdpp}};
    s.baselines = {"cgd", "gdpp"};
    out.push_back(s);
  }
  {
    ExperimentSpec s;
    s.id = "fig3b";
    s.description = "LFOM memformer with covariate-mixing blocks on isotropic data";
    s.base = detail::paper_protocol();
    s.base.total_steps = 3000;
    s.base.cov = CovarianceSpec::identity(5);
    s.models = {{"linear_tf", linear_tf},
                {"memformer_lfom_pre", lfom_pre},
                {"memformer_gdpp", gdpp}};
    s.baselines = {"cgd", "gdpp"};
    out.push_back(s);
  }
  {
    ExperimentSpec s;
    s.id = "fig4a";
    s.description = "scalar-gate memformer vs CGD on the training batch, batch size 1";
    s.base = detail::paper_protocol();
    s.base.total_steps = 2000;
    s.base.batch_size = 1;
    s.base.eval_on_final_train_batch = true;
    s.models = {{"memformer_lfom_scalar", lfom_scalar}};
    s.baselines = {"cgd"};
    out.push_back(s);
  }
  {
    ExperimentSpec s;
    s.id = "fig4b";
    s.description = "scalar-gate memformer vs CGD on the training batch, batch size 10";
    s.base = detail::paper_protocol();
    s.base.total_steps = 2000;
    s.base.batch_size = 10;
    s.base.eval_on_final_train_batch = true;
    s.models = {{"memformer_lfom_scalar", lfom_scalar}};
    s.baselines = {"cgd"};
    out.push_back(s);
  }
  {
    ExperimentSpec s;
    s.id = "fig5a";
    s.description = "scalar-gate memformer with 1-head attention vs CGD, test data";
    s.base = detail::paper_protocol();
    s.base.total_steps = 3000;
    ModelConfig one_head = lfom_scalar;
    one_head.heads = 1;
    s.models = {{"memformer_scalar_1head", one_head}};
    s.baselines = {"cgd"};
    out.push_back(s);
  }
  {
    ExperimentSpec s;
    s.id = "fig5b";
    s.description = "scalar-gate memformer with 5-head attention vs CGD, test data";
    s.base = detail::paper_protocol();
    s.base.total_steps = 3000;
    ModelConfig five_heads = lfom_scalar;
    five_heads.heads = 5;
    s.models = {{"memformer_scalar_5head", five_heads}};
    s.baselines = {"cgd"};
    out.push_back(s);
  }
  {
    ExperimentSpec s;
    s.id = "fig6a";
    s.description = "LFOM memformer vs Nesterov accelerated gradient, non-isotropic data";
    s.base = detail::paper_protocol();
    s.base.total_steps = 3000;
    s.models = {{"memformer_lfom_pre", lfom_pre}};
    s.baselines = {"nag"};
    out.push_back(s);
  }
  {
    ExperimentSpec s;
    s.id = "fig6b";
    s.description = "LFOM memformer vs momentum gradient descent, non-isotropic data";
    s.base = detail::paper_protocol();
    s.base.total_steps = 3000;
    s.models = {{"memformer_lfom_pre", lfom_pre}};
    s.baselines = {"mgd"};
    out.push_back(s);
  }
  return out;
}

inline ExperimentSpec preset(const std::string& figure_id) {
  for (const ExperimentSpec& s : figure_presets()) {
    if (s.id == figure_id) return s;
  }
  throw std::invalid_argument("unknown figure id: " + figure_id);
}

struct CurveData {
  std::string name;
  std::vector<double> mean_log_loss;
  std::vector<double> stderr_;
};

struct ExperimentResult {
  std::string id;
  std::vector<CurveData> curves;
  nlohmann::json metadata;
};

namespace detail {
inline std::vector<double> log_curve(const std::vector<double>& losses) {
  std::vector<double> out;
  out.reserve(losses.size());
  for (double v : losses) out.push_back(std::log(std::max(v, 1e-300)));
  return out;
}

// Per-layer mean query losses of a baseline run per-instance over a batch.
inline std::vector<double> baseline_curve(const std::string& name, const TaskBatch& batch,
                                          int steps, double gdpp_gamma) {
  std::vector<double> losses(steps + 1, 0.0);
  for (const TaskInstance& task : batch) {
    if (name == "gdpp") {
      const GdppTrajectory t = gdpp_run(task, steps, {gdpp_gamma}, Matrix::identity(task.covariates.rows()));
      for (int k = 0; k <= steps; ++k) losses[k] += t.losses[k];
      continue;
    }
    std::vector<Matrix> iterates;
    if (name == "cgd") iterates = cgd_run(task, steps).iterates;
    else if (name == "nag") iterates = nag_run(task, steps);
    else if (name == "mgd") iterates = momentum_gd_run(task, steps);
    else if (name == "gd") iterates = gd_run(task, steps, 0.03);
    else throw std::invalid_argument("unknown baseline: " + name);
    for (int k = 0; k <= steps; ++k) {
      losses[k] += query_sq_error(dot(task.query, iterates[k]), task);
    }
  }
  for (double& v : losses) v /= static_cast<double>(batch.size());
  return losses;
}
}  // namespace detail

using ProgressFn = std::function<void(const std::string&)>;

// Trains every model entry and runs every baseline, per run, on matched
// evaluation batches; averages the log-loss curves across runs.
inline ExperimentResult run_experiment(const ExperimentSpec& spec,
                                       const ProgressFn& progress = {}) {
  ExperimentResult result;
  result.id = spec.id;

  std::vector<std::vector<std::vector<double>>> model_curves(spec.models.size());
  std::vector<std::vector<std::vector<double>>> baseline_curves(spec.baselines.size());
  nlohmann::json run_meta = nlohmann::json::array();

  for (int run = 0; run < spec.base.n_runs; ++run) {
    nlohmann::json meta_entry{{"run", run}};
    for (std::size_t m = 0; m < spec.models.size(); ++m) {
      TrainConfig cfg = spec.base;
      cfg.model = spec.models[m].model;
      if (spec.models[m].steps) cfg.total_steps = *spec.models[m].steps;
      if (spec.models[m].lr) cfg.adam.lr = *spec.models[m].lr;
      if (progress) {
        progress(spec.id + ": run " + std::to_string(run) + ", training " +
                 spec.models[m].curve_name);
      }
      RunRecord record = train_run(cfg, run);
      if (record.aborted) {
        throw std::runtime_error(spec.id + ": run " + std::to_string(run) + " " +
                                 spec.models[m].curve_name + " aborted: " +
                                 record.abort_reason);
      }
      model_curves[m].push_back(record.layer_log_loss);
      meta_entry[spec.models[m].curve_name] = {
          {"final_train_loss", record.train_loss.empty() ? -1.0 : record.train_loss.back()},
          {"wall_seconds", record.wall_seconds}};
    }
    const Matrix sigma = run_sigma(spec.base, run);
    TrainConfig eval_cfg = spec.base;
    eval_cfg.model = spec.models.front().model;
    const TaskBatch eval = eval_batch_for_run(eval_cfg, run, sigma);
    const int steps = spec.models.front().model.layers;
    for (std::size_t b = 0; b < spec.baselines.size(); ++b) {
      baseline_curves[b].push_back(detail::log_curve(
          detail::baseline_curve(spec.baselines[b], eval, steps, spec.gdpp_gamma)));
    }
    run_meta.push_back(meta_entry);
  }

  for (std::size_t m = 0; m < spec.models.size(); ++m) {
    const AveragedCurve avg = average_curves(model_curves[m]);
    result.curves.push_back({spec.models[m].curve_name, avg.mean, avg.stderr_});
  }
  for (std::size_t b = 0; b < spec.baselines.size(); ++b) {
    const AveragedCurve avg = average_curves(baseline_curves[b]);
    std::string name = spec.baselines[b];
    if (name == "gdpp") name += "_gamma" + fmt_double(spec.gdpp_gamma);
    result.curves.push_back({name, avg.mean, avg.stderr_});
  }

  nlohmann::json models_meta = nlohmann::json::array();
  for (const ModelEntry& entry : spec.models) {
    nlohmann::json m{{"curve", entry.curve_name}, {"model", config_to_json(entry.model)}};
    m["total_steps"] = entry.steps ? *entry.steps : spec.base.total_steps;
    m["lr"] = entry.lr ? *entry.lr : spec.base.adam.lr;
    models_meta.push_back(m);
  }
  result.metadata = nlohmann::json{{"figure", spec.id},
                                   {"description", spec.description},
                                   {"train", train_config_to_json(spec.base)},
                                   {"models", models_meta},
                                   {"baselines", spec.baselines},
                                   {"gdpp_gamma", spec.gdpp_gamma},
                                   {"log_base", "natural"},
                                   {"runs", run_meta}};
  return result;
}

inline std::string curves_to_csv(const std::vector<CurveData>& curves) {
  std::ostringstream out;
  out << "layer,curve_name,mean_log_loss,stderr\n";
  for (const CurveData& c : curves) {
    for (std::size_t l = 0; l < c.mean_log_loss.size(); ++l) {
      out << l << ',' << c.name << ',' << fmt_double(c.mean_log_loss[l]) << ','
          << fmt_double(c.stderr_[l]) << '\n';
    }
  }
  return out.str();
}

// Writes <id>.csv, <id>.svg and <id>.json under out_dir.
inline void write_experiment_files(const ExperimentResult& result, const std::string& out_dir) {
  const std::string stem = out_dir + "/" + result.id;
  atomic_write_file(stem + ".csv", curves_to_csv(result.curves));
  std::vector<SvgCurve> svg_curves;
  for (const CurveData& c : result.curves) svg_curves.push_back({c.name, c.mean_log_loss});
  atomic_write_file(stem + ".svg",
                    render_line_chart(svg_curves, result.id, "layer / step",
                                      "mean log loss (natural)"));
  atomic_write_file(stem + ".json", result.metadata.dump(2) + "\n");
}

}  // namespace memformer
