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

// Personalized learning objective with hierarchical proximal terms:
//
//   J(w) = alpha * L(w | D) + beta * sum_k (1 / N_k) * ||w - w_k||^2
//
// where w_k is the GMP of the agent's level-k ancestor and N_k its member
// count, k running over levels 1..K including the root. There is no level-0
// (self) term.

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "demai/error.hpp"
#include "demai/linalg.hpp"
#include "demai/model.hpp"
#include "demai/rng.hpp"

namespace demai {

struct AncestorLevel {
  ModelParams gmp;
  std::size_t member_count = 1;
};

/// Ancestor GMPs ordered from level 1 upward.
using AncestorContext = std::vector<AncestorLevel>;

struct LocalSolverConfig {
  std::uint32_t epochs = 2;
  std::uint32_t batch_size = 16;
  double learning_rate = 0.1;

  void validate() const {
    if (epochs < 1) throw ConfigError("solver.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("solver.batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("solver.learning_rate must be finite and > 0");
    }
  }

  friend bool operator==(const LocalSolverConfig&, const LocalSolverConfig&) = default;
};

template <class L>
concept DifferentiableLoss = requires(const L& l, const ModelParams& w) {
  { l.value(w) } -> std::convertible_to<double>;
  { l.gradient(w) } -> std::convertible_to<std::vector<double>>;
};

/// Mean cross-entropy of a model on a shard, as a DifferentiableLoss.
struct ShardLoss {
  const ModelSpec& spec;
  const DatasetShard& shard;

  [[nodiscard]] double value(const ModelParams& w) const { return loss(spec, w, shard); }
  [[nodiscard]] std::vector<double> gradient(const ModelParams& w) const {
    return loss_gradient(spec, w, shard);
  }
};

inline void check_context(const AncestorContext& ctx, std::size_t dim) {
  for (std::size_t k = 0; k < ctx.size(); ++k) {
    require_same_dim(ctx[k].gmp.dim(), dim, "ancestor GMP");
    if (ctx[k].member_count == 0) throw ConfigError("ancestor member count must be > 0");
    if (k > 0 && ctx[k].member_count < ctx[k - 1].member_count) {
      throw ConfigError("ancestor member counts must be nondecreasing with level");
    }
  }
}

/// sum_k (1 / N_k) * ||w - w_k||^2
inline double proximal_value(const ModelParams& w, const AncestorContext& ctx) {
  double s = 0.0;
  for (const auto& lvl : ctx) s += squared_distance(w.view(), lvl.gmp.view()) / double(lvl.member_count);
  return s;
}

/// grad += 2 * beta * sum_k (1 / N_k) * (w - w_k)
inline void add_proximal_gradient(const ModelParams& w, const AncestorContext& ctx, double beta,
                                  std::span<double> grad) {
  for (const auto& lvl : ctx) {
    const double c = 2.0 * beta / double(lvl.member_count);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += c * (w[i] - lvl.gmp[i]);
  }
}

template <DifferentiableLoss L>
double objective_value(const L& data_loss, const ModelParams& w, const AncestorContext& ctx,
                       double alpha, double beta) {
  check_context(ctx, w.dim());
  return alpha * data_loss.value(w) + beta * proximal_value(w, ctx);
}

template <DifferentiableLoss L>
std::vector<double> objective_gradient(const L& data_loss, const ModelParams& w,
                                       const AncestorContext& ctx, double alpha, double beta) {
  check_context(ctx, w.dim());
  std::vector<double> g = data_loss.gradient(w);
  require_same_dim(g.size(), w.dim(), "loss gradient");
  for (double& v : g) v *= alpha;
  add_proximal_gradient(w, ctx, beta, g);
  return g;
}

inline double objective_value(const ModelSpec& spec, const ModelParams& w,
                              const DatasetShard& shard, const AncestorContext& ctx, double alpha,
                              double beta) {
  return objective_value(ShardLoss{spec, shard}, w, ctx, alpha, beta);
}

inline std::vector<double> objective_gradient(const ModelSpec& spec, const ModelParams& w,
                                              const DatasetShard& shard,
                                              const AncestorContext& ctx, double alpha,
                                              double beta) {
  return objective_gradient(ShardLoss{spec, shard}, w, ctx, alpha, beta);
}

/// Closed-form minimizer of the pure proximal objective (alpha = 0).
inline ModelParams proximal_fixed_point(const AncestorContext& ctx) {
  if (ctx.empty()) throw ConfigError("proximal_fixed_point: empty context");
  ModelParams num(ctx.front().gmp.dim());
  double den = 0.0;
  for (const auto& lvl : ctx) {
    axpy(1.0 / double(lvl.member_count), lvl.gmp.view(), num.view());
    den += 1.0 / double(lvl.member_count);
  }
  for (double& v : num.values) v /= den;
  return num;
}

/// Ratio at which the objective counts as diverged.
inline constexpr double kDivergenceFactor = 1e6;

/// Mini-batch gradient descent on the proximal objective: `epochs` passes over
/// the shard, reshuffled every epoch from a stream seeded by (agent, round
/// seed). Indices inside a batch are visited in ascending order, so a single
/// full batch reproduces the full-shard gradient exactly.
inline ModelParams local_update(const ModelSpec& spec, const ModelParams& start,
                                const DatasetShard& shard, const AncestorContext& ctx,
                                double alpha, double beta, const LocalSolverConfig& cfg,
                                AgentId agent, std::uint64_t round_seed) {
  cfg.validate();
  if (shard.empty()) throw ConfigError("local_update: agent " + std::to_string(agent) + " has no data");
  detail::check_inputs(spec, start, shard.examples);
  check_context(ctx, start.dim());

  auto objective = [&](const ModelParams& w) {
    const auto all = detail::all_indices(shard.size());
    return alpha * loss_and_gradient(spec, w, shard.examples, all, {}) + beta * proximal_value(w, ctx);
  };
  const double start_value = objective(start);

  Rng rng(derive_seed({agent, round_seed}));
  std::vector<std::size_t> order = detail::all_indices(shard.size());
  std::vector<std::size_t> batch;
  std::vector<double> grad(start.dim());
  ModelParams w = start;
  const std::size_t B = std::min<std::size_t>(cfg.batch_size, shard.size());

  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += B) {
      const std::size_t end = std::min(order.size(), begin + B);
      batch.assign(order.begin() + std::ptrdiff_t(begin), order.begin() + std::ptrdiff_t(end));
      std::sort(batch.begin(), batch.end());
      loss_and_gradient(spec, w, shard.examples, batch, grad);
      for (double& g : grad) g *= alpha;
      add_proximal_gradient(w, ctx, beta, grad);
      axpy(-cfg.learning_rate, grad, w.view());
    }
    const double value = objective(w);
    if (!std::isfinite(value) || (value > kDivergenceFactor * start_value && value > 1e-8)) {
      throw DivergenceError("agent " + std::to_string(agent) + ": local update diverged in epoch " +
                            std::to_string(epoch) + " (objective " + std::to_string(value) +
                            ", start " + std::to_string(start_value) + ") with learning rate " +
                            std::to_string(cfg.learning_rate));
    }
  }
  return w;
}

}  // namespace demai
