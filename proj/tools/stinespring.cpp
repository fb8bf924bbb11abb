// Copyright 2026 The Stinespring Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "stinespring/experiment.hpp"

namespace {

using stinespring::ConfigError;
using stinespring::ExperimentConfig;

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kNumericalError = 2;

ExperimentConfig resolve(const std::string& config_path, const std::string& preset) {
  if (!config_path.empty() && !preset.empty()) throw ConfigError("give either --config or --preset, not both");
  if (!preset.empty()) return stinespring::preset_config(preset);
  if (config_path.empty()) throw ConfigError("--config or --preset is required");
  return stinespring::load_config(config_path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn Stinespring dilations of open-system channels and extrapolate them"};
  app.require_subcommand(1);

  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out_dir;

  auto* run = app.add_subcommand("run", "train, evaluate and export one experiment");
  run->add_option("--config", config_path, "JSON experiment config");
  run->add_option("--preset", preset, "run a shipped preset instead of a config file");
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out_dir, "output directory (default: the config's output_dir)");

  auto* presets = app.add_subcommand("presets", "inspect shipped presets");
  presets->require_subcommand(1);
  auto* list = presets->add_subcommand("list", "list preset names");
  std::string show_name;
  auto* show = presets->add_subcommand("show", "print a preset as a config file");
  show->add_option("name", show_name)->required();

  auto* validate = app.add_subcommand("validate", "check a config against the schema");
  validate->add_option("--config", config_path, "JSON experiment config");
  validate->add_option("--preset", preset, "validate a shipped preset");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (list->parsed()) {
      for (const auto& [name, description] : stinespring::preset_catalog()) {
        std::cout << name << "  " << description << '\n';
      }
      return kOk;
    }
    if (show->parsed()) {
      std::cout << stinespring::to_json(stinespring::preset_config(show_name)).dump(2) << '\n';
      return kOk;
    }
    ExperimentConfig cfg = resolve(config_path, preset);
    if (validate->parsed()) {
      for (const auto& w : stinespring::validate_config(cfg)) std::cerr << "warning: " << w << '\n';
      std::cout << "ok " << cfg.name << ' ' << stinespring::config_hash(cfg) << '\n';
      return kOk;
    }
    if (seed) {
      cfg.seed = *seed;
      cfg.optimizer.seed = *seed;
    }
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    for (const auto& w : stinespring::validate_config(cfg)) std::cerr << "warning: " << w << '\n';
    const auto records = stinespring::run_experiment(cfg);
    stinespring::export_records(records, cfg.output_dir);
    for (const auto& r : records) {
      std::cout << r.method << ": " << stinespring::to_string(r.training.reason);
      if (!r.training.trace.empty()) std::cout << "  J=" << stinespring::format_double(r.training.trace.back().loss);
      std::cout << "  bures[1]=" << stinespring::format_double(r.curve.mean_bures.front())
                << "  bures[" << r.curve.steps.back() << "]=" << stinespring::format_double(r.curve.mean_bures.back())
                << '\n';
    }
    std::cout << "wrote " << cfg.output_dir << '\n';
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const stinespring::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericalError;
  }
}
