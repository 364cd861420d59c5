/*
 * Copyright 2026 The koopvar Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *
 */

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "koopvar/experiments.hpp"

namespace fs = std::filesystem;
using namespace koopvar;

int main(int argc, char** argv) {
  CLI::App app{"koopvar: kernel Koopman estimation experiments for the Ornstein-Uhlenbeck process"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> preset;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "base seed (overrides config)");
    sub->add_option("--preset", preset, "quick or full")->check(CLI::IsMember({"quick", "full"}));
  };

  auto* est = app.add_subcommand("estimation", "estimation-error bounds vs simulated percentiles");
  auto* pred = app.add_subcommand("prediction", "prediction-error bound vs measured error");
  auto* val = app.add_subcommand("validate", "run the validation checks, write validation.json");
  common(est);
  common(pred);
  common(val);
  auto* plot = app.add_subcommand("plot", "render SVG plots from result CSVs");
  std::vector<std::string> csvs;
  plot->add_option("csv", csvs, "result CSV files")->required();
  plot->add_option("--out", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (plot->parsed()) {
      for (const auto& p : emit_plots({csvs.begin(), csvs.end()}, out_dir))
        std::cout << "wrote " << p.path.string() << " (" << p.series << " series)\n";
      return 0;
    }
    ExperimentConfig cfg = config_path.empty() ? preset_config(preset.value_or("full")) : load_config(config_path, preset);
    if (seed) cfg.base_seed = *seed;
    cfg.validate();
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    if (val->parsed()) {
      const auto checks = run_validation_suite(cfg);
      const auto report = validation_report(checks, cfg);
      std::ofstream(dir / "validation.json") << report.dump(2) << '\n';
      for (const auto& c : checks) std::cout << c.status << "  " << c.name << "  " << c.value << '\n';
      std::cout << "wrote " << (dir / "validation.json").string() << '\n';
      return report["all_passed"].get<bool>() ? 0 : 1;
    }
    const bool estimation = est->parsed();
    const auto result = estimation ? run_estimation_experiment(cfg, &std::cerr) : run_prediction_experiment(cfg, &std::cerr);
    const std::string name = estimation ? "estimation" : "prediction";
    write_experiment(result, dir, name);
    std::cout << "wrote " << (dir / (name + ".csv")).string() << " and " << (dir / (name + "_summary.json")).string()
              << '\n';
    if (!result.summary["errors"].empty())
      std::cerr << result.summary["errors"].size() << " cell(s) failed; see the summary JSON\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
