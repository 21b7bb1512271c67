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

#include <catch_amalgamated.hpp>

#include <set>

#include "support.hpp"

using namespace demai;
using Catch::Matchers::ContainsSubstring;
using testing::vec;

namespace {

MetaLawSchedule one_level(double d1) {
  MetaLawSchedule s;
  s.max_levels = 1;
  s.thresholds = {d1};
  return s;
}

AgentParams params_of(std::initializer_list<ModelParams> ps) {
  AgentParams out;
  AgentId id = 0;
  for (const auto& p : ps) out.emplace(id++, p);
  return out;
}

// Hand-built hierarchy. groups[g] lists level-1 members; upper[g] is the
// level-2 parent index of group g (max_levels = 2) or empty for one level.
// GMPs are set explicitly.
Hierarchy make_hierarchy(const std::vector<std::vector<AgentId>>& groups, const std::vector<ModelParams>& gmps,
                         const std::vector<std::size_t>& upper = {}) {
  const std::uint32_t levels = upper.empty() ? 1 : 2;
  Hierarchy h(levels);
  h.dim = gmps.front().dim();
  std::vector<NodeId> l1;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    GroupNode n;
    n.id = h.next_id++;
    n.level = 1;
    n.gmp = gmps[g];
    n.children = groups[g];
    n.member_count = groups[g].size();
    for (AgentId a : groups[g]) h.agent_group[a] = n.id;
    l1.push_back(n.id);
    h.nodes.emplace(n.id, n);
  }
  std::vector<NodeId> below = l1;
  if (levels == 2) {
    const std::size_t count = *std::max_element(upper.begin(), upper.end()) + 1;
    std::vector<NodeId> l2;
    for (std::size_t u = 0; u < count; ++u) {
      GroupNode n;
      n.id = h.next_id++;
      n.level = 2;
      n.gmp = ModelParams(h.dim);
      l2.push_back(n.id);
      h.nodes.emplace(n.id, n);
    }
    for (std::size_t g = 0; g < l1.size(); ++g) {
      auto& p = h.node(l2[upper[g]]);
      p.children.push_back(l1[g]);
      p.member_count += h.node(l1[g]).member_count;
      h.node(l1[g]).parent = p.id;
    }
    below = l2;
  }
  GroupNode root;
  root.id = h.next_id++;
  root.level = levels + 1;
  root.gmp = ModelParams(h.dim);
  for (NodeId id : below) {
    root.children.push_back(id);
    root.member_count += h.node(id).member_count;
    h.node(id).parent = root.id;
  }
  h.root = root.id;
  h.nodes.emplace(root.id, root);
  REQUIRE_FALSE(validate(h).has_value());
  return h;
}

std::set<std::set<AgentId>> level_partition(const Hierarchy& h, std::uint32_t k) {
  std::set<std::set<AgentId>> out;
  for (NodeId id : h.nodes_at_level(k)) {
    std::set<AgentId> members;
    std::vector<NodeId> stack{id};
    while (!stack.empty()) {
      const auto& n = h.node(stack.back());
      stack.pop_back();
      if (n.level == 1) {
        members.insert(n.children.begin(), n.children.end());
      } else {
        stack.insert(stack.end(), n.children.begin(), n.children.end());
      }
    }
    out.insert(members);
  }
  return out;
}

}  // namespace

TEST_CASE("build_initial on four points", "[hierarchy]") {
  const auto params = params_of({vec({0.0}), vec({0.1}), vec({5.0}), vec({5.1})});
  const auto h = build_initial(params, one_level(1.0));
  CHECK_FALSE(validate(h).has_value());
  CHECK(level_partition(h, 1) == std::set<std::set<AgentId>>{{0, 1}, {2, 3}});
  CHECK(h.node(h.group_of(0)).gmp[0] == Catch::Approx(0.05));
  CHECK(h.node(h.group_of(3)).gmp[0] == Catch::Approx(5.05));
  const auto& root = h.node(*h.root);
  CHECK(root.level == 2);
  CHECK(root.member_count == 4);
  CHECK(root.gmp[0] == Catch::Approx(2.55));
}

TEST_CASE("build_initial with one agent is a singleton chain", "[hierarchy]") {
  MetaLawSchedule s;
  const auto params = params_of({vec({1.0, -2.0})});
  const auto h = build_initial(params, s);
  CHECK_FALSE(validate(h).has_value());
  CHECK(h.nodes.size() == s.max_levels + 1);
  CHECK(h.node(*h.root).gmp == params.at(0));
  CHECK(h.ancestors(0).size() == s.max_levels + 1);
}

TEST_CASE("a large threshold yields one level-1 group", "[hierarchy]") {
  const auto params = params_of({vec({0.0}), vec({3.0}), vec({7.0})});
  const auto h = build_initial(params, one_level(100.0));
  CHECK(h.nodes_at_level(1).size() == 1);
  CHECK(h.node(h.nodes_at_level(1).front()).member_count == 3);
}

TEST_CASE("build_initial errors", "[hierarchy][errors]") {
  CHECK_THROWS_AS(build_initial({}, one_level(1.0)), ConfigError);
  auto params = params_of({vec({0.0}), vec({0.0, 1.0})});
  CHECK_THROWS_AS(build_initial(params, one_level(1.0)), ConfigError);
}

TEST_CASE("multi-level build nests and validates", "[hierarchy][property]") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    AgentParams params;
    for (AgentId a = 0; a < 20; ++a) params.emplace(a, testing::random_params(rng, 3, 2.0));
    MetaLawSchedule s;
    s.max_levels = 3;
    s.thresholds = {1.5, 3.0, 4.5};
    const auto h = build_initial(params, s);
    REQUIRE_FALSE(validate(h).has_value());
    for (std::uint32_t k = 1; k < h.top_level(); ++k) {
      CHECK(level_partition(h, k + 1).size() <= level_partition(h, k).size());
    }
    CHECK(h.node(*h.root).member_count == 20);
  }
}

TEST_CASE("adapt honors the strict inequality", "[hierarchy]") {
  // groups at [0] and [2]; agent 1 sits at [1]
  auto params = params_of({vec({0.0}), vec({1.0}), vec({2.0})});
  auto h = make_hierarchy({{0, 1}, {2}}, {vec({0.0}), vec({2.0})});
  CHECK(adapt(h, params, 0.0, false).empty());
  CHECK(h.group_of(1) == 0);
}

TEST_CASE("adapt applies resistance", "[hierarchy]") {
  // agent 1 at distance 1.0 from its group, 0.6 from the other
  const auto params = params_of({vec({0.0}), vec({1.0}), vec({1.6})});
  auto h = make_hierarchy({{0, 1}, {2}}, {vec({0.0}), vec({1.6})});
  h.node(0).gmp = vec({0.0});
  // d_cur for agent 1 = 1.0, d_best = 0.6
  auto resisted = h;
  CHECK(adapt(resisted, params, 0.5, false).empty());
  auto moved = h;
  const auto changes = adapt(moved, params, 0.3, false);
  REQUIRE(changes.size() == 1);
  CHECK(changes[0] == GroupChange{1, 0, 1});
  CHECK(moved.node(1).member_count == 2);
  CHECK_FALSE(validate(moved).has_value());
}

TEST_CASE("an agent nearest to its own group never moves", "[hierarchy]") {
  const auto params = params_of({vec({0.1}), vec({4.9})});
  for (double rho : {0.0, 0.2, 0.5, 0.9}) {
    auto h = make_hierarchy({{0}, {1}}, {vec({0.0}), vec({5.0})});
    CHECK(adapt(h, params, rho, false).empty());
  }
}

TEST_CASE("adapt prunes emptied groups", "[hierarchy]") {
  const auto params = params_of({vec({0.0}), vec({0.2}), vec({9.0})});
  auto h = make_hierarchy({{0}, {1}, {2}}, {vec({0.0}), vec({5.0}), vec({9.0})});
  const auto changes = adapt(h, params, 0.0, false);
  REQUIRE(changes.size() == 1);
  CHECK(h.nodes_at_level(1).size() == 2);
  CHECK_FALSE(validate(h).has_value());
}

TEST_CASE("high specialization restricts moves to siblings", "[hierarchy]") {
  // groups 0,1 under parent A; group 2 under parent B. Agent 0 sits nearest group 2.
  const auto params = params_of({vec({9.0}), vec({0.0}), vec({5.0}), vec({10.0})});
  const auto h0 = make_hierarchy({{0, 1}, {2}, {3}}, {vec({0.0}), vec({5.0}), vec({10.0})}, {0, 0, 1});
  auto open = h0;
  auto changes = adapt(open, params, 0.0, false);
  REQUIRE_FALSE(changes.empty());
  CHECK(changes[0].to == 2);
  auto siblings = h0;
  changes = adapt(siblings, params, 0.0, true);
  REQUIRE(changes.size() == 1);
  CHECK(changes[0].to == 1);
  CHECK_FALSE(validate(siblings).has_value());
}

TEST_CASE("schedule-driven adapt rejects early stages", "[hierarchy][errors]") {
  MetaLawSchedule s;
  auto params = params_of({vec({0.0})});
  auto h = build_initial(params, s);
  CHECK_THROWS_AS(adapt(h, params, 0u, s), StateError);
  CHECK_THROWS_WITH(adapt(h, params, s.warmup_rounds, s), ContainsSubstring("construction"));
  CHECK_NOTHROW(adapt(h, params, s.warmup_rounds + 1, s));
  CHECK_NOTHROW(adapt(h, params, s.t_special + 5, s));
}

TEST_CASE("stronger resistance only removes moves", "[hierarchy][property]") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    AgentParams params;
    for (AgentId a = 0; a < 12; ++a) params.emplace(a, testing::random_params(rng, 2, 3.0));
    const auto base = build_initial(params, one_level(2.0));
    // drift the agents so some of them want to move
    for (auto& [a, p] : params) axpy(1.0, testing::random_params(rng, 2, 1.5).view(), p.view());
    std::set<AgentId> prev;
    bool first = true;
    for (double rho : {0.0, 0.1, 0.3, 0.5, 0.8, 0.99}) {
      auto h = base;
      std::set<AgentId> moved;
      for (const auto& c : adapt(h, params, rho, false)) moved.insert(c.agent);
      if (!first) CHECK(std::includes(prev.begin(), prev.end(), moved.begin(), moved.end()));
      prev = moved;
      first = false;
      CHECK_FALSE(validate(h).has_value());
    }
  }
}

TEST_CASE("place_new_agent descends to the nearest group", "[hierarchy]") {
  auto h = make_hierarchy({{0}, {1}}, {vec({0.0, 0.0}), vec({10.0, 10.0})});
  const auto before = h.agent_group;
  const NodeId g = place_new_agent(h, 7, vec({1.0, 1.0}));
  CHECK(g == 0);
  CHECK(h.group_of(7) == 0);
  CHECK(h.node(0).member_count == 2);
  CHECK(h.node(*h.root).member_count == 3);
  for (const auto& [a, grp] : before) CHECK(h.group_of(a) == grp);
  CHECK_FALSE(validate(h).has_value());
}

TEST_CASE("place_new_agent follows the nearest GMP at every level", "[hierarchy]") {
  // level-2 parents: A = {g0 at [0], g1 at [4]} with gmp [8]; B = {g2 at [10]} with gmp [20]
  auto h = make_hierarchy({{0}, {1}, {2}}, {vec({0.0}), vec({4.0}), vec({10.0})}, {0, 0, 1});
  h.node(3).gmp = vec({8.0});
  h.node(4).gmp = vec({20.0});
  // [7.5] is nearest g2 among level-1 groups, but descent picks A first
  CHECK(place_new_agent(h, 9, vec({7.5})) == 1);
  CHECK_FALSE(validate(h).has_value());
}

TEST_CASE("place_new_agent into an empty or single-chain hierarchy", "[hierarchy]") {
  Hierarchy empty(2);
  const NodeId g = place_new_agent(empty, 4, vec({3.0, 1.0}));
  CHECK_FALSE(validate(empty).has_value());
  CHECK(empty.nodes.size() == 3);
  CHECK(empty.node(*empty.root).gmp == vec({3.0, 1.0}));
  CHECK(empty.group_of(4) == g);

  CHECK(place_new_agent(empty, 5, vec({-100.0, 50.0})) == g);
  CHECK(empty.node(*empty.root).member_count == 2);
}

TEST_CASE("place_new_agent errors", "[hierarchy][errors]") {
  auto h = make_hierarchy({{0}}, {vec({0.0, 0.0})});
  CHECK_THROWS_AS(place_new_agent(h, 0, vec({1.0, 1.0})), ConfigError);
  CHECK_THROWS_AS(place_new_agent(h, 1, vec({1.0})), ConfigError);
}

TEST_CASE("eliminate_outliers", "[hierarchy]") {
  const double d1 = 1.0, kappa = 3.0;
  SECTION("no outliers") {
    const auto params = params_of({vec({0.5}), vec({-0.5}), vec({10.0})});
    auto h = make_hierarchy({{0, 1}, {2}}, {vec({0.0}), vec({10.0})});
    CHECK(eliminate_outliers(h, params, d1, kappa).empty());
  }
  SECTION("a far agent moves to the nearest group") {
    // agent 1 is 30 = 10 * kappa * d1 away from its group and sits on group 1's GMP
    const auto params = params_of({vec({0.0}), vec({30.0}), vec({30.0})});
    auto h = make_hierarchy({{0, 1}, {2}}, {vec({0.0}), vec({30.0})});
    const auto out = eliminate_outliers(h, params, d1, kappa);
    REQUIRE(out.size() == 1);
    CHECK(out[0] == GroupChange{1, 0, 1});
    CHECK(h.group_of(1) == 1);
    CHECK_FALSE(validate(h).has_value());
  }
  SECTION("a singleton group at its own GMP stays") {
    const auto params = params_of({vec({0.0}), vec({50.0})});
    auto h = make_hierarchy({{0}, {1}}, {vec({0.0}), vec({50.0})});
    CHECK(eliminate_outliers(h, params, d1, kappa).empty());
  }
  SECTION("an outlier can land back in its group") {
    const auto params = params_of({vec({0.0}), vec({5.0})});
    auto h = make_hierarchy({{0, 1}}, {vec({0.0})});
    const auto out = eliminate_outliers(h, params, d1, kappa);
    REQUIRE(out.size() == 1);
    CHECK(out[0].from == out[0].to);
    CHECK_FALSE(validate(h).has_value());
  }
}

TEST_CASE("validate reports corruption", "[hierarchy][errors]") {
  auto h = make_hierarchy({{0, 1}, {2}}, {vec({0.0}), vec({1.0})});
  SECTION("count") {
    h.node(1).member_count = 5;
    const auto v = validate(h);
    REQUIRE(v.has_value());
    CHECK(v->nodes == std::vector<NodeId>{1});
    CHECK_THAT(v->message, ContainsSubstring("member_count"));
  }
  SECTION("agent in two groups") {
    h.node(1).children.push_back(0);
    h.node(1).member_count = 2;
    h.node(2).member_count = 4;
    REQUIRE(validate(h).has_value());
  }
  SECTION("missing parent link") {
    h.node(0).parent.reset();
    REQUIRE(validate(h).has_value());
  }
  SECTION("non-finite GMP") {
    h.node(0).gmp[0] = std::nan("");
    REQUIRE(validate(h).has_value());
  }
}

TEST_CASE("hierarchy stays valid under random restructuring", "[hierarchy][property]") {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MetaLawSchedule s;
  s.thresholds = {1.0, 2.5};
  AgentParams params;
  for (AgentId a = 0; a < 15; ++a) params.emplace(a, testing::random_params(rng, 3, 1.5));
  auto h = build_initial(params, s);
  AgentId next = 15;
  for (int round = 0; round < 100; ++round) {
    for (auto& [a, p] : params) axpy(1.0, testing::random_params(rng, 3, 0.4).view(), p.view());
    const double r = u(rng);
    if (r < 0.4) {
      adapt(h, params, u(rng) * 0.5, u(rng) < 0.3);
    } else if (r < 0.7) {
      eliminate_outliers(h, params, s.thresholds[0], 1.0 + u(rng));
    } else if (r < 0.85) {
      params.emplace(next, testing::random_params(rng, 3, 3.0));
      place_new_agent(h, next, params.at(next));
      ++next;
    } else {
      update_all_levels(h, params, u(rng));
    }
    const auto v = validate(h);
    INFO("round " << round << ": " << (v ? v->message : ""));
    REQUIRE_FALSE(v.has_value());
    CHECK(h.agent_count() == params.size());
  }
}
