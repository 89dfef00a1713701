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

// Command-line front end: train models, evaluate checkpoints, run
// per-instance baselines, execute the equivalence oracles, and reproduce
// the figure presets as CSV + SVG + JSON.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "memformer/baselines.hpp"
#include "memformer/experiments.hpp"
#include "memformer/io.hpp"
#include "memformer/model.hpp"
#include "memformer/tasks.hpp"
#include "memformer/trainer.hpp"
#include "memformer/verify.hpp"

namespace {

using namespace memformer;

struct CommonOpts {
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int threads = 0;
};

void add_train_flags(CLI::App* cmd, TrainConfig& cfg, std::string& variant,
                     bool& isotropic, std::string& config_path) {
  cmd->add_option("--config", config_path, "key=value config file, applied first");
  cmd->add_option("--variant", variant,
                  "linear_tf | memformer_cgd | memformer_lfom | memformer_lfom_gdpp");
  cmd->add_option("--steps", cfg.total_steps, "ADAM steps");
  cmd->add_option("--lr", cfg.adam.lr, "ADAM learning rate");
  cmd->add_option("--batch", cfg.batch_size, "training batch size");
  cmd->add_option("--runs", cfg.n_runs, "independent runs to average");
  cmd->add_option("--layers", cfg.model.layers, "attention layers");
  cmd->add_option("--heads", cfg.model.heads, "attention heads");
  cmd->add_option("--dim", cfg.model.dim, "covariate dimension d");
  cmd->add_option("--prompt-len", cfg.model.prompt_len, "in-context examples n");
  cmd->add_option("--init-std", cfg.init_std, "Gaussian init stddev");
  cmd->add_option("--clip-norm", cfg.clip_norm, "per-matrix gradient clip");
  cmd->add_option("--resample-every", cfg.resample_every, "steps between fresh batches");
  cmd->add_option("--eval-batch", cfg.eval_batch_size, "held-out evaluation batch size");
  cmd->add_flag("--isotropic", isotropic, "identity covariance instead of the rotated spectrum");
  cmd->add_flag("--scalar-gates", cfg.model.scalar_gates, "gates restricted to c * all-ones");
  cmd->add_flag("--identity-precond", cfg.model.identity_precond, "freeze preconditioners at I");
  cmd->add_flag("!--no-train-precond", cfg.model.train_precond, "freeze preconditioner matrices");
}

int do_train(TrainConfig cfg, const CommonOpts& common) {
  cfg.seed = common.seed;
  cfg.threads = common.threads;
  cfg.validate();
  const std::string tag = variant_name(cfg.model.variant);
  std::vector<RunRecord> records;
  for (int run = 0; run < cfg.n_runs; ++run) {
    std::cerr << "training " << tag << " run " << run << "/" << cfg.n_runs << "...\n";
    RunRecord record = train_run(cfg, run);
    if (record.aborted) {
      std::cerr << "run aborted: " << record.abort_reason << "\n";
      return 1;
    }
    std::ostringstream steps_csv;
    steps_csv << "step,train_loss\n";
    for (std::size_t s = 0; s < record.train_loss.size(); ++s) {
      steps_csv << s << ',' << fmt_double(record.train_loss[s]) << '\n';
    }
    const std::string stem = common.out_dir + "/train_" + tag + "_run" + std::to_string(run);
    atomic_write_file(stem + "_steps.csv", steps_csv.str());
    atomic_write_file(stem + ".checkpoint.json",
                      params_to_json(record.final_params).dump(2) + "\n");
    records.push_back(std::move(record));
  }
  const AveragedCurve curve = average_runs(records);
  std::vector<CurveData> curves{{tag, curve.mean, curve.stderr_}};
  atomic_write_file(common.out_dir + "/train_" + tag + "_curve.csv", curves_to_csv(curves));
  nlohmann::json meta{{"config", train_config_to_json(cfg)},
                      {"runs", nlohmann::json::array()}};
  for (const RunRecord& r : records) {
    meta["runs"].push_back({{"run", r.run_index},
                            {"wall_seconds", r.wall_seconds},
                            {"final_train_loss", r.train_loss.empty() ? -1.0 : r.train_loss.back()},
                            {"layer_log_loss", r.layer_log_loss}});
  }
  atomic_write_file(common.out_dir + "/train_" + tag + ".json", meta.dump(2) + "\n");
  std::cout << "final mean log-loss per layer:";
  for (double v : curve.mean) std::cout << ' ' << fmt_double(v);
  std::cout << "\n";
  return 0;
}

int do_eval(const std::string& checkpoint_path, int batch, bool isotropic,
            const CommonOpts& common) {
  const nlohmann::json j = nlohmann::json::parse(read_file(checkpoint_path));
  const ModelParams params = params_from_json(j);
  TrainConfig cfg;
  cfg.model = params.config;
  cfg.seed = common.seed;
  cfg.eval_batch_size = batch;
  cfg.cov = isotropic ? CovarianceSpec::identity(params.config.dim)
                      : CovarianceSpec::non_isotropic_default();
  if (params.config.dim != cfg.cov.dim) cfg.cov = CovarianceSpec::identity(params.config.dim);
  const Matrix sigma = run_sigma(cfg, 0);
  const TaskBatch eval = eval_batch_for_run(cfg, 0, sigma);
  const std::vector<double> losses = per_layer_objective(params, eval);
  std::cout << "layer,loss,log_loss\n";
  for (std::size_t l = 0; l < losses.size(); ++l) {
    std::cout << l << ',' << fmt_double(losses[l]) << ','
              << fmt_double(std::log(std::max(losses[l], 1e-300))) << "\n";
  }
  return 0;
}

int do_baseline(const std::string& method, int steps, int batch, bool isotropic,
                double gdpp_gamma, const std::string& dump_tasks,
                const CommonOpts& common) {
  TrainConfig cfg;
  cfg.seed = common.seed;
  cfg.eval_batch_size = batch;
  cfg.cov = isotropic ? CovarianceSpec::identity(5) : CovarianceSpec::non_isotropic_default();
  const Matrix sigma = run_sigma(cfg, 0);
  const TaskBatch tasks = eval_batch_for_run(cfg, 0, sigma);
  if (!dump_tasks.empty()) dump_batch_csv(dump_tasks, tasks);

  std::vector<double> losses(steps + 1, 0.0);
  for (const TaskInstance& task : tasks) {
    std::vector<Matrix> iterates;
    if (method == "cgd") iterates = cgd_run(task, steps).iterates;
    else if (method == "nag") iterates = nag_run(task, steps);
    else if (method == "mgd") iterates = momentum_gd_run(task, steps);
    else if (method == "gd") iterates = gd_run(task, steps, 0.03);
    else if (method == "gdpp") {
      const GdppTrajectory t = gdpp_run(task, steps, {gdpp_gamma}, Matrix::identity(5));
      for (int k = 0; k <= steps; ++k) losses[k] += t.losses[k];
      continue;
    } else {
      std::cerr << "unknown method: " << method << "\n";
      return 2;
    }
    for (int k = 0; k <= steps; ++k) {
      losses[k] += query_sq_error(dot(task.query, iterates[k]), task);
    }
  }
  std::ostringstream csv;
  csv << "step,loss,log_loss\n";
  for (int k = 0; k <= steps; ++k) {
    const double mean = losses[k] / static_cast<double>(tasks.size());
    csv << k << ',' << fmt_double(mean) << ','
        << fmt_double(std::log(std::max(mean, 1e-300))) << '\n';
  }
  const std::string path = common.out_dir + "/baseline_" + method + ".csv";
  atomic_write_file(path, csv.str());
  std::cout << csv.str();
  return 0;
}

int do_verify(const CommonOpts& common) {
  const std::vector<EquivalenceReport> reports = verify_all(common.seed);
  bool all_pass = true;
  nlohmann::json out = nlohmann::json::array();
  for (const EquivalenceReport& r : reports) {
    all_pass = all_pass && r.pass;
    std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name
              << "  max_dev=" << fmt_double(r.max_abs_deviation)
              << "  tol=" << fmt_double(r.tolerance) << "  (" << r.instance_desc << ")\n";
    out.push_back(r.to_json());
  }
  atomic_write_file(common.out_dir + "/verify_report.json", out.dump(2) + "\n");
  std::cout << (all_pass ? "all checks passed" : "some checks FAILED") << "\n";
  return all_pass ? 0 : 1;
}

struct ReproduceOverrides {
  std::optional<int> steps;
  std::optional<double> lr;
  std::optional<int> runs;
  std::optional<int> batch;
  std::optional<int> heads;
  bool isotropic = false;
};

ExperimentSpec apply_overrides(ExperimentSpec spec, const ReproduceOverrides& ov,
                               const CommonOpts& common) {
  spec.base.seed = common.seed;
  spec.base.threads = common.threads;
  if (ov.steps) {
    spec.base.total_steps = *ov.steps;
    for (ModelEntry& entry : spec.models) entry.steps.reset();
  }
  if (ov.lr) {
    spec.base.adam.lr = *ov.lr;
    for (ModelEntry& entry : spec.models) entry.lr.reset();
  }
  if (ov.runs) spec.base.n_runs = *ov.runs;
  if (ov.batch) spec.base.batch_size = *ov.batch;
  if (ov.isotropic) spec.base.cov = CovarianceSpec::identity(spec.base.cov.dim);
  if (ov.heads) {
    for (ModelEntry& entry : spec.models) entry.model.heads = *ov.heads;
  }
  return spec;
}

int do_reproduce(const std::string& figure, const ReproduceOverrides& ov,
                 const CommonOpts& common) {
  std::vector<ExperimentSpec> specs;
  if (figure == "all") {
    specs = figure_presets();
  } else {
    try {
      specs.push_back(preset(figure));
    } catch (const std::invalid_argument&) {
      std::cerr << "unknown figure id: " << figure << " (see `memformer list`)\n";
      return 2;
    }
  }
  for (ExperimentSpec spec : specs) {
    spec = apply_overrides(spec, ov, common);
    const ExperimentResult result =
        run_experiment(spec, [](const std::string& msg) { std::cerr << msg << "\n"; });
    write_experiment_files(result, common.out_dir);
    std::cout << spec.id << " written to " << common.out_dir << "/" << spec.id
              << ".{csv,svg,json}\n";
    for (const CurveData& c : result.curves) {
      std::cout << "  " << c.name << " final log-loss " << fmt_double(c.mean_log_loss.back())
                << "\n";
    }
  }
  return 0;
}

int do_list() {
  for (const ExperimentSpec& s : figure_presets()) {
    std::cout << s.id << "  " << s.description << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memformer: linear-attention models that run first-order optimizers in-context"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags like --seed may follow the subcommand

  CommonOpts common;
  app.add_option("--out-dir", common.out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", common.seed, "experiment seed")->capture_default_str();
  app.add_option("--threads", common.threads, "worker threads (0 = hardware)");

  // train
  TrainConfig train_cfg;
  std::string train_variant = "linear_tf";
  bool train_isotropic = false;
  std::string train_config_path;
  CLI::App* train_cmd = app.add_subcommand("train", "meta-train a model variant");
  add_train_flags(train_cmd, train_cfg, train_variant, train_isotropic, train_config_path);

  // eval
  std::string eval_checkpoint;
  int eval_batch = 1000;
  bool eval_isotropic = false;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a fresh batch");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint JSON")->required();
  eval_cmd->add_option("--batch", eval_batch, "evaluation batch size");
  eval_cmd->add_flag("--isotropic", eval_isotropic, "identity covariance");

  // baseline
  std::string baseline_method = "cgd";
  int baseline_steps = 3;
  int baseline_batch = 1000;
  bool baseline_isotropic = false;
  double baseline_gdpp_gamma = 0.25;
  std::string baseline_dump;
  CLI::App* baseline_cmd =
      app.add_subcommand("baseline", "run a classical optimizer per instance");
  baseline_cmd->add_option("--method", baseline_method, "cgd | nag | mgd | gd | gdpp");
  baseline_cmd->add_option("--steps", baseline_steps, "optimizer steps");
  baseline_cmd->add_option("--batch", baseline_batch, "instances");
  baseline_cmd->add_flag("--isotropic", baseline_isotropic, "identity covariance");
  baseline_cmd->add_option("--gdpp-gamma", baseline_gdpp_gamma, "contraction factor");
  baseline_cmd->add_option("--dump-tasks", baseline_dump, "write the task batch as CSV");

  // verify
  CLI::App* verify_cmd = app.add_subcommand("verify", "run the equivalence oracles");

  // reproduce
  std::string figure;
  ReproduceOverrides overrides;
  int ov_steps = -1, ov_runs = -1, ov_batch = -1, ov_heads = -1;
  double ov_lr = -1.0;
  CLI::App* repro_cmd = app.add_subcommand("reproduce", "reproduce a figure preset");
  repro_cmd->add_option("figure", figure, "figure id or 'all'")->required();
  repro_cmd->add_option("--steps", ov_steps, "override training steps");
  repro_cmd->add_option("--lr", ov_lr, "override learning rate");
  repro_cmd->add_option("--runs", ov_runs, "override run count");
  repro_cmd->add_option("--batch", ov_batch, "override batch size");
  repro_cmd->add_option("--heads", ov_heads, "override attention heads");
  repro_cmd->add_flag("--isotropic", overrides.isotropic, "identity covariance");

  // list
  CLI::App* list_cmd = app.add_subcommand("list", "list figure presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train_cmd) {
      TrainConfig cfg = train_cfg;
      if (!train_config_path.empty()) cfg = load_train_config(train_config_path, cfg);
      cfg.model.variant = variant_from_name(train_variant);
      if (train_isotropic) cfg.cov = CovarianceSpec::identity(cfg.model.dim);
      else if (cfg.model.dim != cfg.cov.dim) cfg.cov = CovarianceSpec::identity(cfg.model.dim);
      return do_train(cfg, common);
    }
    if (*eval_cmd) return do_eval(eval_checkpoint, eval_batch, eval_isotropic, common);
    if (*baseline_cmd) {
      return do_baseline(baseline_method, baseline_steps, baseline_batch, baseline_isotropic,
                         baseline_gdpp_gamma, baseline_dump, common);
    }
    if (*verify_cmd) return do_verify(common);
    if (*repro_cmd) {
      if (ov_steps >= 0) overrides.steps = ov_steps;
      if (ov_lr > 0) overrides.lr = ov_lr;
      if (ov_runs > 0) overrides.runs = ov_runs;
      if (ov_batch > 0) overrides.batch = ov_batch;
      if (ov_heads > 0) overrides.heads = ov_heads;
      return do_reproduce(figure, overrides, common);
    }
    if (*list_cmd) return do_list();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
