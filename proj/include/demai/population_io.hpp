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

#pragma once

// Data directory layout:
//   <dir>/manifest.json
//   <dir>/agent_NNNN_train.csv, <dir>/agent_NNNN_test.csv

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "demai/csv.hpp"
#include "demai/data.hpp"

namespace demai {

inline nlohmann::ordered_json to_json(const PopulationConfig& c) {
  return {{"num_agents", c.num_agents},
          {"task_clusters", c.task_clusters},
          {"features", c.features},
          {"classes", c.classes},
          {"samples_min", c.samples_min},
          {"samples_max", c.samples_max},
          {"separation", c.separation},
          {"dirichlet_concentration", c.dirichlet_concentration},
          {"test_fraction", c.test_fraction},
          {"seed", c.seed}};
}

inline std::string agent_file_stem(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "agent_%04zu", id);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot write file");
  out << text;
  if (!out) throw DataError(path.string() + ": write failed");
}

inline void write_population(const std::filesystem::path& dir, const PopulationConfig& cfg,
                             const Population& pop) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = "demai-population/1";
  manifest["config"] = to_json(cfg);
  manifest["seed"] = cfg.seed;
  manifest["features"] = pop.features;
  manifest["classes"] = pop.classes;
  manifest["assignment"] = pop.assignment;
  auto agents = nlohmann::ordered_json::array();
  for (std::size_t a = 0; a < pop.agents.size(); ++a) {
    const std::string stem = agent_file_stem(a);
    write_shard_csv(dir / (stem + "_train.csv"), pop.agents[a].train);
    write_shard_csv(dir / (stem + "_test.csv"), pop.agents[a].test);
    agents.push_back({{"id", a},
                      {"cluster", pop.assignment[a]},
                      {"train", stem + "_train.csv"},
                      {"test", stem + "_test.csv"}});
  }
  manifest["agents"] = agents;
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline Population read_population(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DataError(manifest_path.string() + ": cannot open file");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  Population pop;
  try {
    pop.features = manifest.at("features").get<std::size_t>();
    pop.classes = manifest.at("classes").get<std::size_t>();
    for (const auto& a : manifest.at("agents")) {
      const auto id = a.at("id").get<AgentId>();
      if (id != pop.agents.size()) throw DataError(manifest_path.string() + ": agent ids must be 0..n-1 in order");
      AgentData data;
      data.train = load_csv(dir / a.at("train").get<std::string>(), {}, id);
      data.test = load_csv(dir / a.at("test").get<std::string>(), {}, id);
      pop.agents.push_back(std::move(data));
      pop.assignment.push_back(a.value("cluster", std::size_t{0}));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  if (pop.agents.empty()) throw DataError(manifest_path.string() + ": no agents");
  return pop;
}

}  // namespace demai
