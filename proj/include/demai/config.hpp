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

// Run configuration files (YAML). Five sections mirror the component
// configs: population, model, meta_law, solver, run. Unknown sections and
// keys are rejected; every loaded config is validated.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "demai/engine.hpp"
#include "demai/error.hpp"
#include "demai/population_io.hpp"

namespace demai {

namespace detail {

struct FieldBinding {
  std::string key;
  std::function<void(const YAML::Node&)> read;
  std::function<void(YAML::Emitter&)> write;
  std::function<nlohmann::ordered_json()> to_json;
};

struct SectionBinding {
  std::string name;
  std::vector<FieldBinding> fields;
};

template <class T>
FieldBinding field(std::string key, T& ref) {
  return {key, [&ref](const YAML::Node& n) { ref = n.as<T>(); },
          [&ref](YAML::Emitter& e) { e << ref; }, [&ref] { return nlohmann::ordered_json(ref); }};
}

template <class E>
FieldBinding bind_enum(std::string key, E& ref, std::vector<std::pair<std::string, E>> names) {
  auto name_of = [&ref, names] {
    for (const auto& [s, v] : names) {
      if (v == ref) return s;
    }
    return std::string("?");
  };
  return {key,
          [&ref, names, key](const YAML::Node& n) {
            const auto s = n.as<std::string>();
            for (const auto& [name, v] : names) {
              if (name == s) {
                ref = v;
                return;
              }
            }
            throw ConfigError(key + ": unknown value '" + s + "'");
          },
          [name_of](YAML::Emitter& e) { e << name_of(); }, [name_of] { return nlohmann::ordered_json(name_of()); }};
}

inline FieldBinding bind_model_kind(std::string key, ModelKind& ref) {
  return bind_enum<ModelKind>(std::move(key), ref,
                              {{"softmax-linear", ModelKind::kSoftmaxLinear},
                               {"one-hidden-layer", ModelKind::kOneHiddenLayer}});
}

inline std::vector<SectionBinding> bindings(RunConfig& c) {
  auto& p = c.population;
  auto& m = c.meta_law;
  auto& s = c.solver;
  return {
      {"population",
       {field("num_agents", p.num_agents), field("task_clusters", p.task_clusters),
        field("features", p.features), field("classes", p.classes), field("samples_min", p.samples_min),
        field("samples_max", p.samples_max), field("separation", p.separation),
        field("dirichlet_concentration", p.dirichlet_concentration),
        field("test_fraction", p.test_fraction), field("seed", p.seed)}},
      {"model",
       {bind_model_kind("kind", c.model.kind), field("hidden", c.model.hidden),
        field("features", c.model.features), field("classes", c.model.classes)}},
      {"meta_law",
       {field("alpha0", m.alpha0), field("alpha1", m.alpha1), field("beta0", m.beta0),
        field("beta_decay", m.beta_decay), field("gamma0", m.gamma0), field("gamma_decay", m.gamma_decay),
        field("warmup_rounds", m.warmup_rounds), field("restructure_period", m.restructure_period),
        field("t_adapt", m.t_adapt), field("t_special", m.t_special), field("max_levels", m.max_levels),
        field("thresholds", m.thresholds), field("rho0", m.rho0), field("rho_growth", m.rho_growth),
        field("elimination_factor", m.elimination_factor)}},
      {"solver",
       {field("epochs", s.epochs), field("batch_size", s.batch_size),
        field("learning_rate", s.learning_rate)}},
      {"run",
       {field("rounds", c.rounds), field("participation", c.participation),
        field("master_seed", c.master_seed), field("workers", c.workers),
        field("snapshot_every", c.snapshot_every), field("data_dir", c.data_dir),
        field("baseline", c.baseline),
        bind_enum<LocalStart>("local_start", c.local_start,
                              {{"group", LocalStart::kGroup}, {"personal", LocalStart::kPersonal}}),
        field("restructure_before_averaging", c.restructure_before_averaging),
        field("full_recluster", c.full_recluster),
        bind_enum<ConstructionBasis>("construction_basis", c.construction_basis,
                                     {{"params", ConstructionBasis::kParams},
                                      {"updates", ConstructionBasis::kUpdates}}),
        bind_enum<FedAvgWeighting>("fedavg_weighting", c.fedavg_weighting,
                                   {{"uniform", FedAvgWeighting::kUniform},
                                    {"shard_size", FedAvgWeighting::kShardSize}}),
        field("group_learning_agents", c.group_learning_agents),
        field("onboard_warmup_epochs", c.onboard_warmup_epochs),
        field("check_invariants", c.check_invariants)}},
  };
}

}  // namespace detail

/// Parses YAML text into a validated RunConfig. Missing keys keep defaults.
inline RunConfig parse_run_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  if (root.IsNull()) {
    cfg.validate();
    return cfg;
  }
  if (!root.IsMap()) throw ConfigError("config: top level must be a mapping of sections");
  auto sections = detail::bindings(cfg);
  for (const auto& entry : root) {
    const auto name = entry.first.as<std::string>();
    auto sit = std::find_if(sections.begin(), sections.end(), [&](const auto& s) { return s.name == name; });
    if (sit == sections.end()) throw ConfigError("config: unknown section '" + name + "'");
    if (entry.second.IsNull()) continue;
    if (!entry.second.IsMap()) throw ConfigError("config: section '" + name + "' must be a mapping");
    for (const auto& kv : entry.second) {
      const auto key = kv.first.as<std::string>();
      auto fit = std::find_if(sit->fields.begin(), sit->fields.end(), [&](const auto& f) { return f.key == key; });
      if (fit == sit->fields.end()) throw ConfigError("config: unknown key '" + name + "." + key + "'");
      try {
        fit->read(kv.second);
      } catch (const YAML::Exception& e) {
        throw ConfigError(name + "." + key + ": " + e.what());
      } catch (const ConfigError& e) {
        throw ConfigError(name + "." + e.what());
      }
    }
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

/// Emits every field, so the output reloads to an identical config.
inline std::string serialize_run_config(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  for (const auto& section : detail::bindings(cfg)) {
    out << YAML::Key << section.name << YAML::Value << YAML::BeginMap;
    for (const auto& f : section.fields) {
      out << YAML::Key << f.key << YAML::Value;
      f.write(out);
    }
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

inline nlohmann::ordered_json config_to_json(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  nlohmann::ordered_json doc;
  for (const auto& section : detail::bindings(cfg)) {
    nlohmann::ordered_json s;
    for (const auto& f : section.fields) s[f.key] = f.to_json();
    doc[section.name] = std::move(s);
  }
  return doc;
}

}  // namespace demai
