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

// Deterministic round loop. Per round t:
//   1. sample ceil(C * n) agents without replacement, seeded by (master, t)
//   2. before the hierarchy exists (warmup and construction rounds):
//      participants train locally with beta forced to 0
//   3. at the construction round: build the hierarchy from all agents
//   4. afterwards: participants train on the proximal objective with their
//      ancestor context, then every GMP is re-averaged with gamma(t), then
//      agents are restructured if due (order configurable)
//   5. metrics; hierarchy snapshot every `snapshot_every` rounds
// Local updates fan out over a worker pool; everything else runs on the
// calling thread in ascending agent / node id order, so the output does not
// depend on the worker count.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "demai/data.hpp"
#include "demai/error.hpp"
#include "demai/generalization.hpp"
#include "demai/hierarchy.hpp"
#include "demai/meta_law.hpp"
#include "demai/model.hpp"
#include "demai/parallel.hpp"
#include "demai/rng.hpp"
#include "demai/specialized.hpp"

namespace demai {

inline constexpr const char* kVersion = "demai-sim 0.1.0";

/// Where a participant's local solver starts from once the hierarchy exists.
enum class LocalStart { kGroup, kPersonal };
/// Vectors clustered at construction: model parameters, or each agent's last
/// local update (accumulated gradient step).
enum class ConstructionBasis { kParams, kUpdates };
enum class FedAvgWeighting { kUniform, kShardSize };

struct RunConfig {
  PopulationConfig population;
  std::string data_dir;  // non-empty: load shards instead of generating
  ModelSpec model;       // features/classes resolved from the data
  MetaLawSchedule meta_law;
  LocalSolverConfig solver;
  std::uint32_t rounds = 60;
  double participation = 1.0;
  std::uint64_t master_seed = 7;
  std::uint32_t workers = 1;
  std::uint32_t snapshot_every = 10;  // 0 disables snapshots
  bool baseline = false;
  LocalStart local_start = LocalStart::kGroup;
  bool restructure_before_averaging = false;
  bool full_recluster = false;
  ConstructionBasis construction_basis = ConstructionBasis::kParams;
  FedAvgWeighting fedavg_weighting = FedAvgWeighting::kUniform;
  std::vector<AgentId> group_learning_agents;
  std::uint32_t onboard_warmup_epochs = 1;
  bool check_invariants = false;

  void validate() const {
    if (rounds < 1) throw ConfigError("run.rounds must be >= 1");
    if (!(participation > 0.0 && participation <= 1.0)) {
      throw ConfigError("run.participation must be in (0, 1]");
    }
    if (workers < 1) throw ConfigError("run.workers must be >= 1");
    if (data_dir.empty()) population.validate();
    meta_law.validate();
    solver.validate();
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct RoundMetrics {
  std::uint32_t round = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double rho = 0.0;
  std::string stage;
  std::size_t participants = 0;
  double mean_train_loss = 0.0;
  double mean_personal_acc = 0.0;
  std::vector<double> level_acc;  // index k-1; NaN before construction
  double global_acc = 0.0;
  std::vector<std::size_t> groups_per_level;
  std::size_t group_changes = 0;
  std::size_t eliminations = 0;
  double mean_l1_gmp_distance = std::numeric_limits<double>::quiet_NaN();
};

inline std::size_t participant_count(double fraction, std::size_t n) {
  const auto m = std::size_t(std::ceil(fraction * double(n) - 1e-12));
  return std::clamp<std::size_t>(m, 1, n);
}

/// ceil(C * n) ids drawn without replacement, returned ascending.
inline std::vector<AgentId> sample_participants(const std::vector<AgentId>& ids, double fraction,
                                                std::uint64_t master_seed, std::uint32_t t) {
  std::vector<AgentId> pool = ids;
  Rng rng(derive_seed({master_seed, t, 0x9a47ULL}));
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(participant_count(fraction, ids.size()));
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline std::uint64_t round_seed(std::uint64_t master_seed, std::uint32_t t) {
  return derive_seed({master_seed, t, 0x70c4ULL});
}

/// Model dimensions taken from the data when the config leaves them at 0.
inline ModelSpec resolve_model(ModelSpec spec, const Population& pop) {
  if (spec.features == 0) spec.features = pop.features;
  if (spec.classes == 0) spec.classes = pop.classes;
  if (spec.features != pop.features || spec.classes != pop.classes) {
    throw ConfigError("model dimensions do not match the data (features " +
                      std::to_string(pop.features) + ", classes " + std::to_string(pop.classes) + ")");
  }
  spec.validate();
  return spec;
}

namespace detail {

template <class E>
[[noreturn]] void rethrow_with_context(const E& e, const std::string& ctx) {
  throw E(ctx + e.what());
}

/// Runs `fn` and re-raises module errors prefixed with `ctx`.
template <class Fn>
auto with_context(const std::string& ctx, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    rethrow_with_context(e, ctx);
  } catch (const DivergenceError& e) {
    rethrow_with_context(e, ctx);
  } catch (const StateError& e) {
    rethrow_with_context(e, ctx);
  } catch (const DataError& e) {
    rethrow_with_context(e, ctx);
  }
}

inline double pooled_accuracy(const ModelSpec& spec, const ModelParams& w,
                              const std::map<AgentId, AgentData>& data) {
  double correct = 0.0, total = 0.0;
  for (const auto& [id, d] : data) {
    correct += accuracy(spec, w, d.test) * double(d.test.size());
    total += double(d.test.size());
  }
  return correct / total;
}

inline ModelParams uniform_mean(const AgentParams& params, std::size_t dim) {
  ModelParams m(dim);
  for (const auto& [id, p] : params) axpy(1.0 / double(params.size()), p.view(), m.view());
  return m;
}

}  // namespace detail

class Simulation {
 public:
  Simulation(RunConfig cfg, const Population& pop) : cfg_(std::move(cfg)) {
    cfg_.validate();
    spec_ = resolve_model(cfg_.model, pop);
    cfg_.model = spec_;
    const ModelParams w0 = init_params(spec_, cfg_.master_seed);
    for (std::size_t a = 0; a < pop.agents.size(); ++a) {
      const auto id = AgentId(a);
      data_.emplace(id, pop.agents[a]);
      params_.emplace(id, w0);
    }
    if (data_.empty()) throw ConfigError("population has no agents");
    limited_.insert(cfg_.group_learning_agents.begin(), cfg_.group_learning_agents.end());
  }

  [[nodiscard]] std::uint32_t round() const noexcept { return t_; }
  [[nodiscard]] const RunConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const ModelSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] const std::vector<RoundMetrics>& metrics() const noexcept { return metrics_; }
  [[nodiscard]] const Hierarchy& hierarchy() const noexcept { return h_; }
  [[nodiscard]] bool hierarchy_built() const noexcept { return built_; }
  [[nodiscard]] const AgentParams& params() const noexcept { return params_; }
  [[nodiscard]] const std::map<AgentId, AgentData>& data() const noexcept { return data_; }
  [[nodiscard]] const std::vector<std::pair<std::uint32_t, Hierarchy>>& snapshots() const noexcept {
    return snapshots_;
  }

  [[nodiscard]] double personal_accuracy(AgentId a) const {
    return accuracy(spec_, params_.at(a), data_.at(a).test);
  }

  /// Runs round round() and advances.
  void step() {
    const std::uint32_t t = t_;
    const std::string ctx = "round " + std::to_string(t) + ": ";
    const auto& law = cfg_.meta_law;
    const Stage s = stage(law, t);

    RoundMetrics m;
    m.round = t;
    m.alpha = alpha(law, t);
    m.beta = beta(law, t);
    m.gamma = gamma(law, t);
    m.rho = resistance(law, t);
    m.stage = std::string(to_string(s));

    std::vector<AgentId> ids;
    for (const auto& [id, d] : data_) ids.push_back(id);
    const auto participants = sample_participants(ids, cfg_.participation, cfg_.master_seed, t);
    m.participants = participants.size();

    if (!built_) {
      train_participants(participants, t, m.alpha, 0.0, /*use_hierarchy=*/false);
      if (s == Stage::kConstruction) {
        detail::with_context(ctx, [&] { construct(); });
        built_ = true;
        check(ctx + "after construction");
      }
    } else {
      if (cfg_.restructure_before_averaging) restructure(t, m, ctx);
      train_participants(participants, t, m.alpha, m.beta, /*use_hierarchy=*/true);
      detail::with_context(ctx, [&] { average(m.gamma); });
      check(ctx + "after averaging");
      if (!cfg_.restructure_before_averaging) restructure(t, m, ctx);
    }

    fill_metrics(m);
    metrics_.push_back(std::move(m));
    if (built_ && cfg_.snapshot_every > 0 && t % cfg_.snapshot_every == 0) {
      snapshots_.emplace_back(t, h_);
    }
    ++t_;
  }

  /// Adds agents (ids from train.owner) after construction. Each new agent is
  /// initialized from the root GMP, optionally trained briefly on its own
  /// data, placed top-down, and then set to its level-1 group's GMP. It takes
  /// part from the next round on.
  void onboard_agents(std::vector<AgentData> shards) {
    if (!built_ || h_.empty()) throw StateError("onboard_agents: hierarchy not built");
    for (const auto& d : shards) {
      if (data_.contains(d.train.owner)) {
        throw ConfigError("onboard_agents: duplicate agent id " + std::to_string(d.train.owner));
      }
    }
    const std::uint32_t t = t_ == 0 ? 0 : t_ - 1;
    for (auto& d : shards) {
      const AgentId id = d.train.owner;
      ModelParams w = h_.node(*h_.root).gmp;
      if (cfg_.onboard_warmup_epochs > 0) {
        LocalSolverConfig warm = cfg_.solver;
        warm.epochs = cfg_.onboard_warmup_epochs;
        w = local_update(spec_, w, d.train, {}, alpha(cfg_.meta_law, t), 0.0, warm, id,
                         derive_seed({cfg_.master_seed, t, 0x0b0aULL}));
      }
      const NodeId g = place_new_agent(h_, id, w);
      params_[id] = h_.node(g).gmp;
      data_.emplace(id, std::move(d));
    }
    check("onboarding: ");
  }

  /// Runs every remaining round.
  void run_to_end() {
    while (t_ < cfg_.rounds) step();
  }

 private:
  AncestorContext ancestor_context(AgentId a) const {
    AncestorContext ctx;
    for (NodeId id : h_.ancestors(a)) {
      const auto& n = h_.node(id);
      ctx.push_back({n.gmp, n.member_count});
    }
    return ctx;
  }

  void train_participants(const std::vector<AgentId>& participants, std::uint32_t t, double a,
                          double b, bool use_hierarchy) {
    const std::uint64_t seed = round_seed(cfg_.master_seed, t);
    std::vector<AgentId> solo;
    for (AgentId id : participants) {
      if (!(use_hierarchy && limited_.contains(id))) solo.push_back(id);
    }
    std::vector<ModelParams> results(solo.size());
    parallel_for(solo.size(), cfg_.workers, [&](std::size_t i) {
      const AgentId id = solo[i];
      const std::string ctx = "round " + std::to_string(t) + ": ";
      results[i] = detail::with_context(ctx, [&] {
        if (!use_hierarchy) {
          return local_update(spec_, params_.at(id), data_.at(id).train, {}, a, 0.0, cfg_.solver,
                              id, seed);
        }
        const ModelParams& start = cfg_.local_start == LocalStart::kGroup
                                       ? h_.node(h_.group_of(id)).gmp
                                       : params_.at(id);
        return local_update(spec_, start, data_.at(id).train, ancestor_context(id), a, b,
                            cfg_.solver, id, seed);
      });
    });
    for (std::size_t i = 0; i < solo.size(); ++i) {
      const AgentId id = solo[i];
      auto& p = params_.at(id);
      last_update_[id] = ModelParams(p.dim());
      for (std::size_t j = 0; j < p.dim(); ++j) last_update_[id][j] = results[i][j] - p[j];
      p = std::move(results[i]);
    }
    if (use_hierarchy) train_groups(participants, t, a, b, seed);
  }

  // Capability-limited participants hand their data to their level-1 group,
  // which trains its GMP on the pooled shard under levels >= 2 and gives the
  // result back to those members.
  void train_groups(const std::vector<AgentId>& participants, std::uint32_t t, double a, double b,
                    std::uint64_t seed) {
    std::map<NodeId, std::vector<AgentId>> pooled;
    for (AgentId id : participants) {
      if (limited_.contains(id)) pooled[h_.group_of(id)].push_back(id);
    }
    for (const auto& [g, members] : pooled) {
      DatasetShard shard;
      shard.owner = members.front();
      for (AgentId id : members) {
        const auto& ex = data_.at(id).train.examples;
        shard.examples.insert(shard.examples.end(), ex.begin(), ex.end());
      }
      AncestorContext ctx = ancestor_context(members.front());
      ctx.erase(ctx.begin());
      const std::string where = "round " + std::to_string(t) + ": group " + std::to_string(g) + ": ";
      ModelParams w = detail::with_context(where, [&] {
        return local_update(spec_, h_.node(g).gmp, shard, ctx, a, b, cfg_.solver,
                            AgentId(0x80000000u | g), seed);
      });
      for (AgentId id : members) params_.at(id) = w;
    }
  }

  void construct() {
    if (cfg_.construction_basis == ConstructionBasis::kUpdates && !last_update_.empty()) {
      AgentParams basis;
      for (const auto& [id, p] : params_) {
        auto it = last_update_.find(id);
        basis.emplace(id, it != last_update_.end() ? it->second : ModelParams(p.dim()));
      }
      h_ = build_initial(basis, cfg_.meta_law);
      reset_gmps_to_means(h_, params_);
    } else {
      h_ = build_initial(params_, cfg_.meta_law);
    }
  }

  void average(double g) {
    if (!cfg_.check_invariants) {
      update_all_levels(h_, params_, g);
      return;
    }
    update_all_levels(h_, params_, g,
                      [](const GroupNode& n, const ModelParams& updated,
                         std::span<const ChildModel> children) {
                        for (std::size_t i = 0; i < updated.dim(); ++i) {
                          double lo = n.gmp[i], hi = n.gmp[i];
                          for (const auto& c : children) {
                            lo = std::min(lo, (*c.gmp)[i]);
                            hi = std::max(hi, (*c.gmp)[i]);
                          }
                          const double tol = 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
                          if (updated[i] < lo - tol || updated[i] > hi + tol) {
                            throw StateError("GMP of node " + std::to_string(n.id) +
                                             " left the convex hull at coordinate " + std::to_string(i));
                          }
                        }
                      });
  }

  void restructure(std::uint32_t t, RoundMetrics& m, const std::string& ctx) {
    const Stage s = stage(cfg_.meta_law, t);
    if (!restructure_due(cfg_.meta_law, t)) return;
    if (s != Stage::kAdaptation && s != Stage::kHighSpecialization) return;
    detail::with_context(ctx, [&] {
      if (cfg_.full_recluster) {
        const Hierarchy old = h_;
        h_ = build_initial(params_, cfg_.meta_law);
        m.group_changes += count_membership_changes(old, h_);
        return;
      }
      const auto moves = adapt(h_, params_, t, cfg_.meta_law);
      check(ctx + "after adapt");
      const auto replaced = eliminate_outliers(h_, params_, cfg_.meta_law);
      check(ctx + "after eliminate_outliers");
      m.group_changes += moves.size();
      m.eliminations += replaced.size();
      for (const auto& r : replaced) {
        if (r.from != r.to) ++m.group_changes;
      }
    });
  }

  // Agents whose set of level-1 co-members differs between two hierarchies.
  static std::size_t count_membership_changes(const Hierarchy& a, const Hierarchy& b) {
    std::size_t n = 0;
    for (const auto& [agent, g] : a.agent_group) {
      auto it = b.agent_group.find(agent);
      if (it == b.agent_group.end() || a.node(g).children != b.node(it->second).children) ++n;
    }
    return n;
  }

  void check(const std::string& where) const {
    if (!cfg_.check_invariants) return;
    if (auto v = validate(h_)) throw StateError(where + ": " + v->message);
    if (built_ && h_.agent_count() != data_.size()) {
      throw StateError(where + ": hierarchy holds " + std::to_string(h_.agent_count()) +
                       " agents, population has " + std::to_string(data_.size()));
    }
  }

  void fill_metrics(RoundMetrics& m) const {
    const std::uint32_t levels = cfg_.meta_law.max_levels + 1;
    double loss_sum = 0.0, acc_sum = 0.0;
    for (const auto& [id, d] : data_) {
      loss_sum += loss(spec_, params_.at(id), d.train);
      acc_sum += accuracy(spec_, params_.at(id), d.test);
    }
    const double n = double(data_.size());
    m.mean_train_loss = loss_sum / n;
    m.mean_personal_acc = acc_sum / n;
    m.level_acc.assign(levels, std::numeric_limits<double>::quiet_NaN());
    m.groups_per_level.assign(levels, 0);
    if (!built_ || h_.empty()) {
      m.global_acc = detail::pooled_accuracy(spec_, detail::uniform_mean(params_, spec_.dim()), data_);
      return;
    }
    std::vector<double> level_sum(levels, 0.0);
    for (const auto& [id, d] : data_) {
      const auto chain = h_.ancestors(id);
      for (std::size_t k = 0; k < chain.size(); ++k) {
        level_sum[k] += accuracy(spec_, h_.node(chain[k]).gmp, d.test);
      }
    }
    for (std::uint32_t k = 0; k < levels; ++k) {
      m.level_acc[k] = level_sum[k] / n;
      m.groups_per_level[k] = h_.nodes_at_level(k + 1).size();
    }
    m.global_acc = detail::pooled_accuracy(spec_, h_.node(*h_.root).gmp, data_);
    const auto l1 = h_.nodes_at_level(1);
    double dsum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < l1.size(); ++i) {
      for (std::size_t j = i + 1; j < l1.size(); ++j) {
        dsum += distance(h_.node(l1[i]).gmp, h_.node(l1[j]).gmp);
        ++pairs;
      }
    }
    m.mean_l1_gmp_distance = pairs ? dsum / double(pairs) : 0.0;
  }

  RunConfig cfg_;
  ModelSpec spec_;
  std::map<AgentId, AgentData> data_;
  AgentParams params_;
  AgentParams last_update_;
  std::set<AgentId> limited_;
  Hierarchy h_;
  bool built_ = false;
  std::uint32_t t_ = 0;
  std::vector<RoundMetrics> metrics_;
  std::vector<std::pair<std::uint32_t, Hierarchy>> snapshots_;
};

struct RunResult {
  std::vector<RoundMetrics> metrics;
  Hierarchy hierarchy;
  AgentParams params;
  std::vector<std::pair<std::uint32_t, Hierarchy>> snapshots;
};

inline RunResult run(const RunConfig& cfg, const Population& pop) {
  Simulation sim(cfg, pop);
  sim.run_to_end();
  return {sim.metrics(), sim.hierarchy(), sim.params(), sim.snapshots()};
}

struct BaselineResult {
  std::vector<RoundMetrics> metrics;
  std::vector<ModelParams> global_trajectory;  // global model after each round
};

/// Flat federated averaging: one global model; sampled agents run the local
/// solver (plain loss, alpha = 1, no proximal term) from it, and the global
/// model becomes the mean of their results, uniform over participants unless
/// shard-size weighting is configured. Personalized columns evaluate the
/// global model on each agent's own shards.
inline BaselineResult run_fedavg_baseline(const RunConfig& cfg_in, const Population& pop) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  const ModelSpec spec = resolve_model(cfg.model, pop);
  if (pop.agents.empty()) throw ConfigError("population has no agents");
  ModelParams global = init_params(spec, cfg.master_seed);
  std::vector<AgentId> ids(pop.agents.size());
  for (std::size_t a = 0; a < ids.size(); ++a) ids[a] = AgentId(a);

  BaselineResult out;
  for (std::uint32_t t = 0; t < cfg.rounds; ++t) {
    const auto participants = sample_participants(ids, cfg.participation, cfg.master_seed, t);
    const std::uint64_t seed = round_seed(cfg.master_seed, t);
    std::vector<ModelParams> results(participants.size());
    parallel_for(participants.size(), cfg.workers, [&](std::size_t i) {
      const AgentId id = participants[i];
      const std::string ctx = "round " + std::to_string(t) + ": ";
      results[i] = detail::with_context(ctx, [&] {
        return local_update(spec, global, pop.agents[id].train, {}, 1.0, 0.0, cfg.solver, id, seed);
      });
    });
    double total = 0.0;
    for (AgentId id : participants) {
      total += cfg.fedavg_weighting == FedAvgWeighting::kUniform ? 1.0 : double(pop.agents[id].train.size());
    }
    ModelParams next(spec.dim());
    for (std::size_t i = 0; i < participants.size(); ++i) {
      const double wgt = cfg.fedavg_weighting == FedAvgWeighting::kUniform
                             ? 1.0
                             : double(pop.agents[participants[i]].train.size());
      axpy(wgt / total, results[i].view(), next.view());
    }
    global = std::move(next);
    out.global_trajectory.push_back(global);

    RoundMetrics m;
    m.round = t;
    m.alpha = 1.0;
    m.gamma = 1.0;
    m.stage = "flat";
    m.participants = participants.size();
    double loss_sum = 0.0, acc_sum = 0.0, correct = 0.0, total_test = 0.0;
    for (const auto& d : pop.agents) {
      loss_sum += loss(spec, global, d.train);
      const double acc = accuracy(spec, global, d.test);
      acc_sum += acc;
      correct += acc * double(d.test.size());
      total_test += double(d.test.size());
    }
    m.mean_train_loss = loss_sum / double(pop.agents.size());
    m.mean_personal_acc = acc_sum / double(pop.agents.size());
    m.global_acc = correct / total_test;
    out.metrics.push_back(std::move(m));
  }
  return out;
}

}  // namespace demai
