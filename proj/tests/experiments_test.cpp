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
#include <filesystem>
#include <set>
#include <sstream>

#include "memformer/experiments.hpp"

using namespace memformer;

namespace {

ExperimentSpec tiny_spec() {
  ExperimentSpec spec = preset("fig1a");
  spec.base.total_steps = 4;
  spec.base.batch_size = 6;
  spec.base.n_runs = 2;
  spec.base.eval_batch_size = 8;
  spec.base.seed = 99;
  return spec;
}

}  // namespace

TEST_CASE("figure presets are unique and complete") {
  const std::vector<ExperimentSpec> presets = figure_presets();
  std::set<std::string> ids;
  for (const ExperimentSpec& s : presets) {
    CHECK(ids.insert(s.id).second);
    CHECK_FALSE(s.description.empty());
    CHECK_FALSE(s.models.empty());
  }
  for (const char* id : {"fig1a", "fig1b", "fig2a", "fig2b", "fig3a", "fig3b",
                         "fig4a", "fig4b", "fig5a", "fig5b", "fig6a", "fig6b"}) {
    CHECK(ids.count(id) == 1);
  }
  CHECK(preset("fig4a").base.batch_size == 1);
  CHECK(preset("fig4b").base.batch_size == 10);
  CHECK(preset("fig4a").base.eval_on_final_train_batch);
  CHECK(preset("fig5a").models[0].model.heads == 1);
  CHECK(preset("fig5b").models[0].model.heads == 5);
  CHECK(preset("fig2b").base.cov.isotropic);
  CHECK_FALSE(preset("fig2a").base.cov.isotropic);
  CHECK_THROWS(preset("fig9z"));
}

TEST_CASE("tiny experiment produces well-formed curves and csv") {
  const ExperimentSpec spec = tiny_spec();
  const ExperimentResult result = run_experiment(spec);
  REQUIRE(result.curves.size() == spec.models.size() + spec.baselines.size());
  const int layers = spec.models[0].model.layers;
  for (const CurveData& c : result.curves) {
    CHECK(c.mean_log_loss.size() == static_cast<std::size_t>(layers) + 1);
    CHECK(c.stderr_.size() == c.mean_log_loss.size());
  }

  const std::string csv = curves_to_csv(result.curves);
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "layer,curve_name,mean_log_loss,stderr");
  int rows = 0;
  while (std::getline(lines, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == static_cast<int>(result.curves.size()) * (layers + 1));

  CHECK(result.metadata.at("figure") == "fig1a");
  CHECK(result.metadata.at("train").at("batch_size") == 6);
  CHECK(result.metadata.at("log_base") == "natural");
}

TEST_CASE("identical seeds reproduce the csv byte for byte") {
  const ExperimentSpec spec = tiny_spec();
  const ExperimentResult a = run_experiment(spec);
  const ExperimentResult b = run_experiment(spec);
  CHECK(curves_to_csv(a.curves) == curves_to_csv(b.curves));
}

TEST_CASE("experiment files are written atomically with svg and json") {
  const ExperimentSpec spec = tiny_spec();
  const ExperimentResult result = run_experiment(spec);
  const std::string dir = (std::filesystem::temp_directory_path() / "memformer_exp_test").string();
  std::filesystem::remove_all(dir);
  write_experiment_files(result, dir);
  CHECK(std::filesystem::exists(dir + "/fig1a.csv"));
  CHECK(std::filesystem::exists(dir + "/fig1a.svg"));
  CHECK(std::filesystem::exists(dir + "/fig1a.json"));
  CHECK_FALSE(std::filesystem::exists(dir + "/fig1a.csv.tmp"));
  const std::string svg = read_file(dir + "/fig1a.svg");
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("memformer_cgd") != std::string::npos);
  const nlohmann::json meta = nlohmann::json::parse(read_file(dir + "/fig1a.json"));
  CHECK(meta.at("figure") == "fig1a");
  std::filesystem::remove_all(dir);
}

TEST_CASE("fmt_double round trips exactly") {
  for (double v : {0.1, -3.25e-17, 1.0 / 3.0, 12345.678901234567}) {
    CHECK(std::stod(fmt_double(v)) == v);
  }
}
