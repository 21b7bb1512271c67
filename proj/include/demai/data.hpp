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

// Planted-cluster, label-skewed agent populations.
//
// Each task cluster t owns C class-conditional isotropic Gaussians (sd 1)
// with centers on simplex vertices at pairwise distance s. Clusters share
// the same C axes in blocks of C clusters, rotating which class sits on which
// axis: center(t, c) = (s / sqrt(2)) * e_{b*C + (c + t) mod C}, b = t / C.
// So clusters in one block disagree on labels for the same inputs; this needs
// F >= ceil(T / C) * C. Agents are assigned to clusters in balanced
// round-robin order, then shuffled; each agent draws its label proportions
// from Dirichlet(delta).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "demai/error.hpp"
#include "demai/model.hpp"
#include "demai/rng.hpp"

namespace demai {

struct PopulationConfig {
  std::size_t num_agents = 20;
  std::size_t task_clusters = 2;
  std::size_t features = 8;
  std::size_t classes = 3;
  std::size_t samples_min = 100;
  std::size_t samples_max = 200;
  double separation = 8.0;
  double dirichlet_concentration = 0.3;
  double test_fraction = 0.25;
  std::uint64_t seed = 1;

  [[nodiscard]] std::size_t required_features() const {
    return classes == 0 ? 0 : (task_clusters + classes - 1) / classes * classes;
  }

  void validate() const {
    if (num_agents == 0) throw ConfigError("population.num_agents must be >= 1");
    if (task_clusters == 0) throw ConfigError("population.task_clusters must be >= 1");
    if (classes < 2) throw ConfigError("population.classes must be >= 2");
    if (features < required_features()) {
      throw ConfigError("population.features must be >= " + std::to_string(required_features()) +
                        " for this cluster/class count");
    }
    if (!(separation > 0.0)) throw ConfigError("population.separation must be > 0");
    if (!(dirichlet_concentration > 0.0)) {
      throw ConfigError("population.dirichlet_concentration must be > 0");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
      throw ConfigError("population.test_fraction must be in (0, 1)");
    }
    if (samples_min < 2) throw ConfigError("population.samples_min must be >= 2");
    if (samples_min > samples_max) {
      throw ConfigError("population.samples_min must be <= population.samples_max");
    }
  }

  friend bool operator==(const PopulationConfig&, const PopulationConfig&) = default;
};

/// agent id -> task-cluster id (ground truth for structure recovery).
using PlantedAssignment = std::vector<std::size_t>;

struct AgentData {
  DatasetShard train;
  DatasetShard test;

  friend bool operator==(const AgentData&, const AgentData&) = default;
};

struct Population {
  std::vector<AgentData> agents;  // index == agent id
  PlantedAssignment assignment;
  std::size_t features = 0;
  std::size_t classes = 0;
};

inline std::vector<double> cluster_center(const PopulationConfig& cfg, std::size_t cluster,
                                          std::size_t label) {
  std::vector<double> c(cfg.features, 0.0);
  const std::size_t block = cluster / cfg.classes;
  c[block * cfg.classes + (label + cluster) % cfg.classes] = cfg.separation / std::sqrt(2.0);
  return c;
}

inline std::vector<double> sample_dirichlet(Rng& rng, std::size_t k, double concentration) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> p(k);
  double sum = 0.0;
  for (double& v : p) {
    v = gamma(rng);
    sum += v;
  }
  if (!(sum > 0.0)) {
    // every draw underflowed; degenerate to a single class
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    std::fill(p.begin(), p.end(), 0.0);
    p[pick(rng)] = 1.0;
    return p;
  }
  for (double& v : p) v /= sum;
  return p;
}

inline Population generate_population(const PopulationConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed({cfg.seed, 0xda7aULL}));
  Population pop;
  pop.features = cfg.features;
  pop.classes = cfg.classes;

  pop.assignment.resize(cfg.num_agents);
  for (std::size_t i = 0; i < cfg.num_agents; ++i) pop.assignment[i] = i % cfg.task_clusters;
  std::shuffle(pop.assignment.begin(), pop.assignment.end(), rng);

  std::vector<std::vector<std::vector<double>>> centers(cfg.task_clusters);
  for (std::size_t t = 0; t < cfg.task_clusters; ++t) {
    for (std::size_t c = 0; c < cfg.classes; ++c) centers[t].push_back(cluster_center(cfg, t, c));
  }

  std::uniform_int_distribution<std::size_t> count_dist(cfg.samples_min, cfg.samples_max);
  std::normal_distribution<double> noise(0.0, 1.0);
  pop.agents.reserve(cfg.num_agents);
  for (std::size_t a = 0; a < cfg.num_agents; ++a) {
    const std::size_t n = count_dist(rng);
    const auto proportions = sample_dirichlet(rng, cfg.classes, cfg.dirichlet_concentration);
    std::discrete_distribution<int> label_dist(proportions.begin(), proportions.end());
    const auto& cluster_centers = centers[pop.assignment[a]];

    std::vector<LabeledExample> examples(n);
    for (auto& ex : examples) {
      ex.label = label_dist(rng);
      ex.features = cluster_centers[std::size_t(ex.label)];
      for (double& x : ex.features) x += noise(rng);
    }

    std::size_t n_test = std::size_t(std::llround(cfg.test_fraction * double(n)));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
    AgentData data;
    data.train.owner = data.test.owner = AgentId(a);
    data.train.examples.assign(std::make_move_iterator(examples.begin()),
                               std::make_move_iterator(examples.end() - std::ptrdiff_t(n_test)));
    data.test.examples.assign(std::make_move_iterator(examples.end() - std::ptrdiff_t(n_test)),
                              std::make_move_iterator(examples.end()));
    pop.agents.push_back(std::move(data));
  }
  return pop;
}

/// Empirical label frequencies of a shard over C classes.
inline std::vector<double> label_frequencies(const DatasetShard& shard, std::size_t classes) {
  std::vector<double> f(classes, 0.0);
  for (const auto& ex : shard.examples) f[std::size_t(ex.label)] += 1.0;
  if (!shard.empty()) {
    for (double& v : f) v /= double(shard.size());
  }
  return f;
}

}  // namespace demai
