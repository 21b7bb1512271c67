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

// Bottom-up hierarchical model averaging:
//
//   GMP <- (1 - gamma) * GMP + gamma * sum_i (N_i / N) * GMP_i
//
// over the children i of a group with N = sum_i N_i members. Level-1 groups
// treat each member agent's parameters as a child GMP with count 1.

#include <cstddef>
#include <utility>
#include <span>
#include <string>
#include <vector>

#include "demai/error.hpp"
#include "demai/hierarchy.hpp"
#include "demai/linalg.hpp"

namespace demai {

struct ChildModel {
  const ModelParams* gmp = nullptr;
  std::size_t count = 0;
};

/// One averaging step for a single group. Children are reduced in the order
/// given (callers pass ascending child id).
inline ModelParams update_group_gmp(const ModelParams& old_gmp, std::span<const ChildModel> children,
                                    std::size_t member_count, double gamma_t) {
  if (!(gamma_t >= 0.0 && gamma_t <= 1.0)) throw ConfigError("update_group_gmp: gamma outside [0, 1]");
  std::size_t sum = 0;
  for (const auto& c : children) {
    require_same_dim(c.gmp->dim(), old_gmp.dim(), "update_group_gmp");
    sum += c.count;
  }
  if (sum != member_count || member_count == 0) {
    throw StateError("update_group_gmp: children counts sum to " + std::to_string(sum) +
                     " but group has " + std::to_string(member_count) + " members");
  }
  ModelParams avg(old_gmp.dim());
  for (const auto& c : children) axpy(double(c.count) / double(member_count), c.gmp->view(), avg.view());
  ModelParams out(old_gmp.dim());
  for (std::size_t i = 0; i < out.dim(); ++i) out[i] = (1.0 - gamma_t) * old_gmp[i] + gamma_t * avg[i];
  return out;
}

/// Observer called per group with (node still holding its old GMP, new GMP,
/// children).
struct NoUpdateObserver {
  void operator()(const GroupNode&, const ModelParams&, std::span<const ChildModel>) const {}
};

/// Sweeps levels bottom-up; each node is updated exactly once, and parents
/// see their children's fresh GMPs.
template <class Observer = NoUpdateObserver>
void update_all_levels(Hierarchy& h, const AgentParams& params, double gamma_t,
                       Observer&& observe = {}) {
  std::vector<ChildModel> children;
  for (std::uint32_t k = 1; k <= h.top_level(); ++k) {
    for (auto& [id, n] : h.nodes) {
      if (n.level != k) continue;
      children.clear();
      for (std::uint32_t c : n.children) {
        if (k == 1) {
          children.push_back({&detail::params_of(params, c), 1});
        } else {
          const auto& child = h.node(c);
          children.push_back({&child.gmp, child.member_count});
        }
      }
      ModelParams updated = update_group_gmp(n.gmp, children, n.member_count, gamma_t);
      observe(n, std::as_const(updated), std::span<const ChildModel>(children));
      n.gmp = std::move(updated);
    }
  }
}

}  // namespace demai
