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

#include "support.hpp"

using namespace demai;
using Catch::Approx;
using testing::vec;

namespace {

std::vector<ChildModel> children_of(const std::vector<ModelParams>& gmps, const std::vector<std::size_t>& counts) {
  std::vector<ChildModel> out;
  for (std::size_t i = 0; i < gmps.size(); ++i) out.push_back({&gmps[i], counts[i]});
  return out;
}

MetaLawSchedule one_level(double d1) {
  MetaLawSchedule s;
  s.max_levels = 1;
  s.thresholds = {d1};
  return s;
}

}  // namespace

TEST_CASE("gamma zero keeps the old GMP", "[generalization]") {
  const std::vector<ModelParams> kids{vec({4.0, 4.0})};
  const auto old = vec({1.0, -1.0});
  CHECK(update_group_gmp(old, children_of(kids, {2}), 2, 0.0) == old);
}

TEST_CASE("gamma one with a single child copies it", "[generalization]") {
  const std::vector<ModelParams> kids{vec({4.0, -7.5})};
  CHECK(update_group_gmp(vec({1.0, 1.0}), children_of(kids, {3}), 3, 1.0) == kids[0]);
}

TEST_CASE("hand-derived two-child fixture", "[generalization]") {
  const std::vector<ModelParams> kids{vec({1.0, 1.0}), vec({5.0, 5.0})};
  const auto out = update_group_gmp(vec({0.0, 0.0}), children_of(kids, {3, 1}), 4, 0.5);
  CHECK(std::abs(out[0] - 1.0) <= 1e-12);
  CHECK(std::abs(out[1] - 1.0) <= 1e-12);
}

TEST_CASE("update_group_gmp errors", "[generalization][errors]") {
  const std::vector<ModelParams> kids{vec({1.0}), vec({2.0})};
  CHECK_THROWS_AS(update_group_gmp(vec({0.0}), children_of(kids, {1, 1}), 3, 0.5), StateError);
  const std::vector<ModelParams> bad{vec({1.0, 2.0})};
  CHECK_THROWS_AS(update_group_gmp(vec({0.0}), children_of(bad, {1}), 1, 0.5), ConfigError);
  CHECK_THROWS_AS(update_group_gmp(vec({0.0}), children_of(kids, {1, 1}), 2, 1.5), ConfigError);
}

TEST_CASE("updated GMPs stay inside the convex hull", "[generalization][property]") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t dim = 1 + rng() % 6, m = 1 + rng() % 6;
    std::vector<ModelParams> kids;
    std::vector<std::size_t> counts;
    std::size_t total = 0;
    for (std::size_t i = 0; i < m; ++i) {
      kids.push_back(testing::random_params(rng, dim, 10.0));
      counts.push_back(1 + rng() % 9);
      total += counts.back();
    }
    const auto old = testing::random_params(rng, dim, 10.0);
    const double g = trial % 10 == 0 ? double(trial % 20 == 0) : u(rng);
    const auto out = update_group_gmp(old, children_of(kids, counts), total, g);
    for (std::size_t j = 0; j < dim; ++j) {
      double lo = old[j], hi = old[j];
      for (const auto& k : kids) {
        lo = std::min(lo, k[j]);
        hi = std::max(hi, k[j]);
      }
      CHECK(out[j] >= lo - 1e-12 * std::max(1.0, std::abs(lo)));
      CHECK(out[j] <= hi + 1e-12 * std::max(1.0, std::abs(hi)));
    }
  }
}

TEST_CASE("parent moves by gamma * N_i / N per unit child change", "[generalization][property]") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ModelParams> kids{testing::random_params(rng, 3), testing::random_params(rng, 3),
                                  testing::random_params(rng, 3)};
    const std::vector<std::size_t> counts{1 + rng() % 5, 1 + rng() % 5, 1 + rng() % 5};
    const std::size_t total = counts[0] + counts[1] + counts[2];
    const auto old = testing::random_params(rng, 3);
    const double g = 0.37;
    const auto base = update_group_gmp(old, children_of(kids, counts), total, g);
    const std::size_t i = rng() % 3;
    const double eps = 1e-3;
    kids[i][1] += eps;
    const auto moved = update_group_gmp(old, children_of(kids, counts), total, g);
    CHECK((moved[1] - base[1]) / eps == Approx(g * double(counts[i]) / double(total)).epsilon(1e-8));
    CHECK(moved[0] == base[0]);
  }
}

TEST_CASE("update_all_levels", "[generalization]") {
  SECTION("uniform mean of a two-agent group") {
    AgentParams params{{0, vec({0.0})}, {1, vec({2.0})}};
    auto h = build_initial(params, one_level(10.0));
    h.node(h.group_of(0)).gmp = vec({-5.0});
    update_all_levels(h, params, 1.0);
    CHECK(h.node(h.group_of(0)).gmp == vec({1.0}));
    CHECK(h.node(*h.root).gmp == vec({1.0}));
  }
  SECTION("identical agents are a fixed point") {
    const auto p = vec({0.3, -1.2});
    AgentParams params;
    for (AgentId a = 0; a < 7; ++a) params.emplace(a, p);
    MetaLawSchedule s;
    auto h = build_initial(params, s);
    for (double g : {0.0, 0.25, 1.0}) {
      update_all_levels(h, params, g);
      for (const auto& [id, n] : h.nodes) CHECK(n.gmp == p);
    }
  }
  SECTION("two-level fixture with sizes 3 and 1") {
    AgentParams params{{0, vec({0.0})}, {1, vec({0.3})}, {2, vec({0.6})}, {3, vec({10.0})}};
    auto h = build_initial(params, one_level(1.0));
    REQUIRE(h.nodes_at_level(1).size() == 2);
    for (auto& [id, n] : h.nodes) n.gmp = vec({100.0});
    update_all_levels(h, params, 1.0);
    const double g1 = (0.0 + 0.3 + 0.6) / 3.0, g2 = 10.0;
    CHECK(h.node(h.group_of(0)).gmp[0] == Approx(g1));
    CHECK(h.node(h.group_of(3)).gmp[0] == Approx(g2));
    CHECK(h.node(*h.root).gmp[0] == Approx((3.0 * g1 + g2) / 4.0));
  }
  SECTION("full refresh of a flat hierarchy gives the unweighted mean") {
    std::mt19937_64 rng(14);
    AgentParams params;
    for (AgentId a = 0; a < 9; ++a) params.emplace(a, testing::random_params(rng, 4));
    auto h = build_initial(params, one_level(0.5));
    update_all_levels(h, params, 1.0);
    ModelParams mean(4);
    for (const auto& [a, p] : params) axpy(1.0 / 9.0, p.view(), mean.view());
    CHECK(testing::max_abs_diff(h.node(*h.root).gmp, mean) < 1e-12);
  }
  SECTION("observer sees each node once, bottom-up") {
    std::mt19937_64 rng(15);
    AgentParams params;
    for (AgentId a = 0; a < 12; ++a) params.emplace(a, testing::random_params(rng, 2, 2.0));
    MetaLawSchedule s;
    auto h = build_initial(params, s);
    std::vector<std::uint32_t> levels;
    std::map<NodeId, int> seen;
    update_all_levels(h, params, 0.5, [&](const GroupNode& n, const ModelParams&, std::span<const ChildModel>) {
      levels.push_back(n.level);
      ++seen[n.id];
    });
    CHECK(seen.size() == h.nodes.size());
    for (const auto& [id, c] : seen) CHECK(c == 1);
    CHECK(std::is_sorted(levels.begin(), levels.end()));
  }
}
