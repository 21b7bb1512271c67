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

// Self-organizing hierarchy of specialized groups.
//
// Levels 1..max_levels are group levels; level 1 groups hold agents, level k
// groups hold level k-1 groups. A single root sits at level max_levels + 1
// above the top cut and carries the globally shared model. Node ids are
// unique for the lifetime of a Hierarchy; children lists are kept sorted.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "demai/error.hpp"
#include "demai/linalg.hpp"
#include "demai/linkage.hpp"
#include "demai/meta_law.hpp"
#include "demai/model.hpp"

namespace demai {

using NodeId = std::uint32_t;
using AgentParams = std::map<AgentId, ModelParams>;

struct GroupNode {
  NodeId id = 0;
  std::uint32_t level = 1;
  ModelParams gmp;
  std::size_t member_count = 0;
  std::vector<std::uint32_t> children;  // node ids, or agent ids at level 1
  std::optional<NodeId> parent;
};

struct GroupChange {
  AgentId agent = 0;
  NodeId from = 0;
  NodeId to = 0;

  friend bool operator==(const GroupChange&, const GroupChange&) = default;
};

struct Hierarchy {
  std::uint32_t max_levels = 1;
  std::size_t dim = 0;
  std::map<NodeId, GroupNode> nodes;
  std::optional<NodeId> root;
  std::map<AgentId, NodeId> agent_group;  // agent -> level-1 group
  NodeId next_id = 0;

  Hierarchy() = default;
  explicit Hierarchy(std::uint32_t levels) : max_levels(levels) {}

  [[nodiscard]] std::uint32_t top_level() const noexcept { return max_levels + 1; }
  [[nodiscard]] bool empty() const noexcept { return !root.has_value(); }
  [[nodiscard]] std::size_t agent_count() const noexcept { return agent_group.size(); }
  [[nodiscard]] bool contains(AgentId a) const { return agent_group.contains(a); }

  [[nodiscard]] const GroupNode& node(NodeId id) const {
    auto it = nodes.find(id);
    if (it == nodes.end()) throw StateError("hierarchy: unknown node " + std::to_string(id));
    return it->second;
  }
  GroupNode& node(NodeId id) {
    auto it = nodes.find(id);
    if (it == nodes.end()) throw StateError("hierarchy: unknown node " + std::to_string(id));
    return it->second;
  }

  [[nodiscard]] NodeId group_of(AgentId a) const {
    auto it = agent_group.find(a);
    if (it == agent_group.end()) throw StateError("hierarchy: agent " + std::to_string(a) + " not placed");
    return it->second;
  }

  [[nodiscard]] std::vector<NodeId> nodes_at_level(std::uint32_t k) const {
    std::vector<NodeId> out;
    for (const auto& [id, n] : nodes) {
      if (n.level == k) out.push_back(id);
    }
    return out;
  }

  /// Ancestor chain of an agent, level 1 first, root last.
  [[nodiscard]] std::vector<NodeId> ancestors(AgentId a) const {
    std::vector<NodeId> chain;
    std::optional<NodeId> cur = group_of(a);
    while (cur) {
      chain.push_back(*cur);
      cur = node(*cur).parent;
    }
    return chain;
  }
};

namespace detail {

inline void insert_sorted(std::vector<std::uint32_t>& v, std::uint32_t x) {
  v.insert(std::lower_bound(v.begin(), v.end(), x), x);
}

inline void erase_value(std::vector<std::uint32_t>& v, std::uint32_t x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end() || *it != x) throw StateError("hierarchy: child " + std::to_string(x) + " missing");
  v.erase(it);
}

inline const ModelParams& params_of(const AgentParams& params, AgentId a) {
  auto it = params.find(a);
  if (it == params.end()) throw ConfigError("no parameters for agent " + std::to_string(a));
  return it->second;
}

/// Count-weighted mean of child parameters, accumulated in ascending child id.
inline ModelParams weighted_child_mean(const Hierarchy& h, const GroupNode& n,
                                       const AgentParams& params) {
  ModelParams mean(h.dim);
  double total = 0.0;
  for (std::uint32_t c : n.children) total += n.level == 1 ? 1.0 : double(h.node(c).member_count);
  for (std::uint32_t c : n.children) {
    if (n.level == 1) {
      axpy(1.0 / total, params_of(params, c).view(), mean.view());
    } else {
      const auto& child = h.node(c);
      axpy(double(child.member_count) / total, child.gmp.view(), mean.view());
    }
  }
  return mean;
}

/// Member counts recomputed bottom-up from level-1 children lists.
inline void recompute_counts(Hierarchy& h) {
  for (std::uint32_t k = 1; k <= h.top_level(); ++k) {
    for (auto& [id, n] : h.nodes) {
      if (n.level != k) continue;
      if (k == 1) {
        n.member_count = n.children.size();
      } else {
        std::size_t s = 0;
        for (std::uint32_t c : n.children) s += h.node(c).member_count;
        n.member_count = s;
      }
    }
  }
}

/// Removes empty groups bottom-up; an empty root clears the hierarchy.
inline void prune_empty(Hierarchy& h) {
  for (std::uint32_t k = 1; k <= h.top_level(); ++k) {
    std::vector<NodeId> doomed;
    for (const auto& [id, n] : h.nodes) {
      if (n.level == k && n.member_count == 0) doomed.push_back(id);
    }
    for (NodeId id : doomed) {
      const auto parent = h.node(id).parent;
      if (!parent) {
        h.nodes.clear();
        h.root.reset();
        h.agent_group.clear();
        return;
      }
      erase_value(h.node(*parent).children, id);
      h.nodes.erase(id);
    }
  }
}

inline void adjust_counts_upward(Hierarchy& h, NodeId from, long delta) {
  std::optional<NodeId> cur = from;
  while (cur) {
    auto& n = h.node(*cur);
    n.member_count = std::size_t(long(n.member_count) + delta);
    cur = n.parent;
  }
}

inline void remove_agent(Hierarchy& h, AgentId a) {
  const NodeId g = h.group_of(a);
  erase_value(h.node(g).children, a);
  adjust_counts_upward(h, g, -1);
  h.agent_group.erase(a);
}

inline NodeId nearest_child(const Hierarchy& h, const GroupNode& n, const ModelParams& p) {
  NodeId best = n.children.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (std::uint32_t c : n.children) {
    const double d = distance(h.node(c).gmp, p);
    if (d < best_d) {  // children ascending, so ties keep the lower id
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace detail

/// Recomputes every GMP bottom-up as the count-weighted mean of its children.
inline void reset_gmps_to_means(Hierarchy& h, const AgentParams& params) {
  for (std::uint32_t k = 1; k <= h.top_level(); ++k) {
    for (auto& [id, n] : h.nodes) {
      if (n.level == k) n.gmp = detail::weighted_child_mean(h, n, params);
    }
  }
}

/// Average-linkage clustering of agent parameters, cut at each level's
/// threshold. `vectors` supplies the clustering coordinates and the initial
/// GMPs.
inline Hierarchy build_initial(const AgentParams& vectors, const MetaLawSchedule& sched) {
  if (vectors.empty()) throw ConfigError("build_initial: empty agent set");
  if (sched.thresholds.size() != sched.max_levels) {
    throw ConfigError("build_initial: need one threshold per level");
  }
  Hierarchy h(sched.max_levels);
  h.dim = vectors.begin()->second.dim();

  std::vector<AgentId> ids;
  std::vector<ModelParams> points;
  for (const auto& [a, p] : vectors) {
    require_same_dim(p.dim(), h.dim, "build_initial");
    ids.push_back(a);
    points.push_back(p);
  }
  const Dendrogram dg = average_linkage(points);

  // labels[k-1][i] = level-k cluster label of agent ids[i]
  std::vector<std::vector<std::size_t>> labels;
  for (double d : sched.thresholds) labels.push_back(cut_dendrogram(dg, d));

  // label -> node id, level by level
  std::vector<std::map<std::size_t, NodeId>> node_of(sched.max_levels);
  for (std::uint32_t k = 1; k <= sched.max_levels; ++k) {
    const auto& lab = labels[k - 1];
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto [it, inserted] = node_of[k - 1].try_emplace(lab[i], h.next_id);
      if (inserted) {
        GroupNode n;
        n.id = h.next_id++;
        n.level = k;
        h.nodes.emplace(n.id, std::move(n));
      }
      auto& n = h.node(it->second);
      if (k == 1) {
        detail::insert_sorted(n.children, ids[i]);
        h.agent_group[ids[i]] = n.id;
      } else {
        const NodeId child = node_of[k - 2].at(labels[k - 2][i]);
        auto& c = h.node(child);
        if (c.parent && *c.parent != n.id) {
          throw StateError("build_initial: level " + std::to_string(k) + " cut does not nest");
        }
        if (!c.parent) {
          c.parent = n.id;
          detail::insert_sorted(n.children, child);
        }
      }
    }
  }
  GroupNode root;
  root.id = h.next_id++;
  root.level = h.top_level();
  for (const auto& [lab, id] : node_of.back()) {
    detail::insert_sorted(root.children, id);
    h.node(id).parent = root.id;
  }
  h.root = root.id;
  h.nodes.emplace(root.id, std::move(root));

  detail::recompute_counts(h);
  reset_gmps_to_means(h, vectors);
  return h;
}

/// Moves agents between level-1 groups. Each agent (ascending id) compares
/// the distance to its own group's GMP, d_cur, with the nearest eligible other
/// group, d_best, and moves iff d_best < (1 - rho) * d_cur. GMPs and the
/// candidate set are frozen at entry. With `siblings_only`, candidates share
/// the agent's level-2 parent.
inline std::vector<GroupChange> adapt(Hierarchy& h, const AgentParams& params, double rho,
                                      bool siblings_only) {
  std::vector<GroupChange> changes;
  if (h.empty()) return changes;
  const auto groups = h.nodes_at_level(1);
  const auto start = h.agent_group;
  for (const auto& [agent, own] : start) {
    const auto& p = detail::params_of(params, agent);
    const auto& own_node = h.node(own);
    const double d_cur = distance(p, own_node.gmp);
    std::optional<NodeId> best;
    double d_best = std::numeric_limits<double>::infinity();
    for (NodeId g : groups) {
      if (g == own) continue;
      const auto& cand = h.node(g);
      if (siblings_only && cand.parent != own_node.parent) continue;
      const double d = distance(p, cand.gmp);
      if (d < d_best) {
        d_best = d;
        best = g;
      }
    }
    if (best && d_best < (1.0 - rho) * d_cur) {
      detail::erase_value(h.node(own).children, agent);
      detail::insert_sorted(h.node(*best).children, agent);
      h.agent_group[agent] = *best;
      changes.push_back({agent, own, *best});
    }
  }
  detail::recompute_counts(h);
  detail::prune_empty(h);
  return changes;
}

/// Schedule-driven adaptation: resistance from the meta-law; in the
/// high-specialization stage only sibling groups are candidates.
inline std::vector<GroupChange> adapt(Hierarchy& h, const AgentParams& params, std::uint32_t t,
                                      const MetaLawSchedule& sched) {
  const Stage s = stage(sched, t);
  if (s != Stage::kAdaptation && s != Stage::kHighSpecialization) {
    throw StateError("adapt: called in stage " + std::string(to_string(s)));
  }
  return adapt(h, params, resistance(sched, t), s == Stage::kHighSpecialization);
}

/// Greedy top-down descent to the level-1 group with the nearest GMP at each
/// level. Creates a singleton chain when the hierarchy is empty. Returns the
/// joined group.
inline NodeId place_new_agent(Hierarchy& h, AgentId agent, const ModelParams& p) {
  if (h.contains(agent)) {
    throw ConfigError("place_new_agent: agent " + std::to_string(agent) + " already placed");
  }
  if (h.empty()) {
    h.dim = p.dim();
    std::optional<NodeId> below;
    NodeId leaf = 0;
    for (std::uint32_t k = 1; k <= h.top_level(); ++k) {
      GroupNode n;
      n.id = h.next_id++;
      n.level = k;
      n.gmp = p;
      n.member_count = 1;
      n.children.push_back(k == 1 ? agent : *below);
      if (below) h.node(*below).parent = n.id;
      if (k == 1) leaf = n.id;
      below = n.id;
      h.nodes.emplace(n.id, std::move(n));
    }
    h.root = below;
    h.agent_group[agent] = leaf;
    return leaf;
  }
  require_same_dim(p.dim(), h.dim, "place_new_agent");
  NodeId cur = *h.root;
  while (h.node(cur).level > 1) cur = detail::nearest_child(h, h.node(cur), p);
  detail::insert_sorted(h.node(cur).children, agent);
  h.agent_group[agent] = cur;
  detail::adjust_counts_upward(h, cur, +1);
  return cur;
}

/// Agents farther than factor * d_1 from their level-1 GMP leave the group and
/// are re-placed as new agents. Outliers are detected once, at entry, so a
/// re-placement never triggers further eliminations in the same call. The
/// returned list holds every re-placed agent (to == from when it lands back).
inline std::vector<GroupChange> eliminate_outliers(Hierarchy& h, const AgentParams& params,
                                                   double level1_threshold, double factor) {
  std::vector<GroupChange> out;
  if (h.empty()) return out;
  const double limit = factor * level1_threshold;
  std::vector<AgentId> outliers;
  for (const auto& [agent, g] : h.agent_group) {
    if (distance(detail::params_of(params, agent), h.node(g).gmp) > limit) outliers.push_back(agent);
  }
  for (AgentId agent : outliers) {
    const NodeId from = h.group_of(agent);
    detail::remove_agent(h, agent);
    const NodeId to = place_new_agent(h, agent, detail::params_of(params, agent));
    out.push_back({agent, from, to});
  }
  detail::prune_empty(h);
  return out;
}

inline std::vector<GroupChange> eliminate_outliers(Hierarchy& h, const AgentParams& params,
                                                   const MetaLawSchedule& sched) {
  return eliminate_outliers(h, params, sched.thresholds.front(), sched.elimination_factor);
}

struct Violation {
  std::string message;
  std::vector<NodeId> nodes;
};

/// Checks partition, nesting, count sums, GMP dimensions and the single
/// root. Returns the first violation found.
inline std::optional<Violation> validate(const Hierarchy& h) {
  auto fail = [](std::string msg, std::vector<NodeId> ids) {
    return std::optional<Violation>(Violation{std::move(msg), std::move(ids)});
  };
  if (!h.root) {
    if (!h.nodes.empty() || !h.agent_group.empty()) {
      return fail("hierarchy without root still has nodes or agents", {});
    }
    return std::nullopt;
  }
  auto rit = h.nodes.find(*h.root);
  if (rit == h.nodes.end()) return fail("root node missing", {*h.root});
  const GroupNode& root = rit->second;
  if (root.parent) return fail("root has a parent", {root.id});
  if (root.level != h.top_level()) return fail("root is not at the top level", {root.id});

  std::size_t level1_members = 0;
  for (const auto& [id, n] : h.nodes) {
    if (n.id != id) return fail("node id does not match its key", {id});
    if (n.level < 1 || n.level > h.top_level()) return fail("node level out of range", {id});
    if (n.gmp.dim() != h.dim) return fail("GMP dimension mismatch", {id});
    if (!n.gmp.all_finite()) return fail("GMP has non-finite entries", {id});
    if (n.member_count == 0) return fail("empty group", {id});
    if (!std::is_sorted(n.children.begin(), n.children.end()) ||
        std::adjacent_find(n.children.begin(), n.children.end()) != n.children.end()) {
      return fail("children not strictly ascending", {id});
    }
    if (id != *h.root) {
      if (!n.parent) return fail("non-root node without parent", {id});
      auto pit = h.nodes.find(*n.parent);
      if (pit == h.nodes.end()) return fail("parent missing", {id, *n.parent});
      const auto& pc = pit->second.children;
      if (!std::binary_search(pc.begin(), pc.end(), id)) {
        return fail("parent does not list node as child", {id, *n.parent});
      }
      if (pit->second.level != n.level + 1) return fail("parent not one level up", {id, *n.parent});
    }
    std::size_t sum = 0;
    if (n.level == 1) {
      for (std::uint32_t a : n.children) {
        auto git = h.agent_group.find(a);
        if (git == h.agent_group.end() || git->second != id) {
          return fail("agent " + std::to_string(a) + " not mapped to its group", {id});
        }
      }
      sum = n.children.size();
      level1_members += sum;
    } else {
      for (std::uint32_t c : n.children) {
        auto cit = h.nodes.find(c);
        if (cit == h.nodes.end()) return fail("child missing", {id, c});
        if (cit->second.parent != std::optional<NodeId>(id)) return fail("child has another parent", {id, c});
        sum += cit->second.member_count;
      }
    }
    if (sum != n.member_count) {
      return fail("member_count " + std::to_string(n.member_count) + " != children sum " +
                      std::to_string(sum),
                  {id});
    }
  }
  if (level1_members != h.agent_group.size()) {
    return fail("agents not partitioned by level-1 groups", {});
  }
  for (const auto& [a, g] : h.agent_group) {
    auto git = h.nodes.find(g);
    if (git == h.nodes.end() || git->second.level != 1) {
      return fail("agent " + std::to_string(a) + " mapped to a non level-1 node", {g});
    }
  }
  // reachability: every node hangs under the root
  std::size_t reached = 0;
  std::vector<NodeId> stack{*h.root};
  while (!stack.empty()) {
    const auto& n = h.node(stack.back());
    stack.pop_back();
    ++reached;
    if (n.level > 1) stack.insert(stack.end(), n.children.begin(), n.children.end());
  }
  if (reached != h.nodes.size()) return fail("nodes unreachable from root", {});
  if (root.member_count != h.agent_group.size()) {
    return fail("root member_count differs from agent count", {root.id});
  }
  return std::nullopt;
}

}  // namespace demai
