// Copyright 2026 The demai-sim Authors
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

// demai: command-line driver for the simulator.
//
//   demai gen-data   --config C --out DIR
//   demai run        --config C --out DIR [--baseline] [--seed S] [--workers N]
//   demai export-dot --snapshot FILE --out FILE
//   demai compare    --run-dir-a A --run-dir-b B [--file-b NAME] [--out DIR]
//
// Exit codes: 0 success, 1 runtime failure, 2 config or usage error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "demai/demai.hpp"

namespace fs = std::filesystem;
using namespace demai;

namespace {

Population load_or_generate(const RunConfig& cfg) {
  if (!cfg.data_dir.empty()) return read_population(cfg.data_dir);
  return generate_population(cfg.population);
}

int cmd_gen_data(const std::string& config, const std::string& out) {
  const RunConfig cfg = load_run_config(config);
  const Population pop = generate_population(cfg.population);
  write_population(out, cfg.population, pop);
  std::cout << "wrote " << pop.agents.size() << " agents to " << out << '\n';
  return 0;
}

int cmd_run(const std::string& config, const std::string& out, bool baseline,
            std::optional<std::uint64_t> seed, std::optional<std::uint32_t> workers) {
  RunConfig cfg = load_run_config(config);
  if (seed) cfg.master_seed = *seed;
  if (workers) cfg.workers = *workers;
  if (baseline) cfg.baseline = true;
  cfg.validate();
  const Population pop = load_or_generate(cfg);

  Simulation sim(cfg, pop);
  sim.run_to_end();

  const fs::path dir(out);
  fs::create_directories(dir / "snapshots");
  const std::uint32_t levels = cfg.meta_law.max_levels + 1;
  write_text_file(dir / "metrics.csv", metrics_csv(sim.metrics(), levels, false));
  for (const auto& [round, h] : sim.snapshots()) {
    write_text_file(dir / "snapshots" / snapshot_file_name(round), snapshot_json(h, round).dump(2) + "\n");
  }
  const std::uint32_t last = sim.round() == 0 ? 0 : sim.round() - 1;
  write_text_file(dir / "final_state.json", final_state_json(sim.hierarchy(), sim.params(), last).dump(2) + "\n");

  if (cfg.baseline) {
    const auto b = run_fedavg_baseline(cfg, pop);
    write_text_file(dir / "metrics_fedavg.csv", metrics_csv(b.metrics, levels, true));
  }

  // worker count is left out so that outputs do not depend on it
  auto conf = config_to_json(cfg);
  conf["run"].erase("workers");
  nlohmann::ordered_json manifest;
  manifest["version"] = std::string(kVersion);
  manifest["rounds"] = sim.metrics().size();
  manifest["agents"] = sim.params().size();
  manifest["config"] = std::move(conf);
  write_text_file(dir / "run_manifest.json", manifest.dump(2) + "\n");

  const auto& m = sim.metrics().back();
  std::cout << "round " << m.round << ": mean personalized accuracy " << format_double(m.mean_personal_acc)
            << ", global accuracy " << format_double(m.global_acc) << '\n';
  return 0;
}

int cmd_export_dot(const std::string& snapshot, const std::string& out) {
  const auto doc = read_json_file(snapshot);
  write_text_file(out, snapshot_to_dot(doc));
  return 0;
}

int cmd_compare(const std::string& a, const std::string& b, const std::string& file_b, const std::string& out) {
  const auto ta = read_csv_table(fs::path(a) / "metrics.csv");
  const auto tb = read_csv_table(fs::path(b) / file_b);
  const auto cmp = compare_metrics(ta, tb);
  const auto text = comparison_text(cmp);
  std::cout << text;
  if (!out.empty()) {
    fs::create_directories(out);
    write_text_file(fs::path(out) / "comparison.csv", comparison_csv(cmp));
    write_text_file(fs::path(out) / "comparison.txt", text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical personalized-learning simulator"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config, out, snapshot, dir_a, dir_b, file_b = "metrics.csv";
  bool baseline = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> workers;

  auto* gen = app.add_subcommand("gen-data", "generate a planted-cluster population");
  gen->add_option("--config", config, "config file")->required();
  gen->add_option("--out", out, "output data directory")->required();

  auto* run_cmd = app.add_subcommand("run", "run a simulation");
  run_cmd->add_option("--config", config, "config file")->required();
  run_cmd->add_option("--out", out, "output run directory")->required();
  run_cmd->add_flag("--baseline", baseline, "also run flat FedAvg and write metrics_fedavg.csv");
  run_cmd->add_option("--seed", seed, "override run.master_seed");
  run_cmd->add_option("--workers", workers, "override run.workers")->check(CLI::PositiveNumber);

  auto* dot = app.add_subcommand("export-dot", "render a hierarchy snapshot as DOT");
  dot->add_option("--snapshot", snapshot, "snapshot JSON")->required();
  dot->add_option("--out", out, "output DOT file")->required();

  auto* cmp = app.add_subcommand("compare", "compare metrics of two runs");
  cmp->add_option("--run-dir-a", dir_a, "first run directory")->required();
  cmp->add_option("--run-dir-b", dir_b, "second run directory")->required();
  cmp->add_option("--file-b", file_b, "metrics file name inside run-dir-b");
  cmp->add_option("--out", out, "directory for comparison.csv and comparison.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config, out);
    if (run_cmd->parsed()) return cmd_run(config, out, baseline, seed, workers);
    if (dot->parsed()) return cmd_export_dot(snapshot, out);
    if (cmp->parsed()) return cmd_compare(dir_a, dir_b, file_b, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
