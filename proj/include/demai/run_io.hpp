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

// Run artifacts: metrics.csv, snapshots/round_NNNNNN.json, final_state.json,
// DOT export of snapshots, and metric comparison between two runs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "demai/csv.hpp"
#include "demai/engine.hpp"
#include "demai/hierarchy.hpp"
#include "demai/population_io.hpp"

namespace demai {

// ---------------------------------------------------------------- metrics

inline std::vector<std::string> metrics_header(std::uint32_t levels, bool flat) {
  std::vector<std::string> h = {"round", "alpha", "beta", "gamma", "rho", "stage", "participants",
                                "mean_train_loss", "mean_personal_acc"};
  if (!flat) {
    for (std::uint32_t k = 1; k <= levels; ++k) h.push_back("acc_L" + std::to_string(k));
  }
  h.push_back("global_acc");
  if (!flat) {
    for (std::uint32_t k = 1; k <= levels; ++k) h.push_back("groups_L" + std::to_string(k));
  }
  h.push_back("group_changes");
  h.push_back("eliminations");
  if (!flat) h.push_back("mean_l1_gmp_distance");
  return h;
}

/// One row per round, columns in RoundMetrics field order. `flat` drops the
/// per-level columns (baseline runs).
inline std::string metrics_csv(const std::vector<RoundMetrics>& rows, std::uint32_t levels, bool flat) {
  std::ostringstream out;
  const auto header = metrics_header(levels, flat);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& m : rows) {
    out << m.round << ',' << format_double(m.alpha) << ',' << format_double(m.beta) << ','
        << format_double(m.gamma) << ',' << format_double(m.rho) << ',' << m.stage << ','
        << m.participants << ',' << format_double(m.mean_train_loss) << ','
        << format_double(m.mean_personal_acc);
    if (!flat) {
      for (std::uint32_t k = 0; k < levels; ++k) {
        out << ',' << format_double(k < m.level_acc.size() ? m.level_acc[k] : std::nan(""));
      }
    }
    out << ',' << format_double(m.global_acc);
    if (!flat) {
      for (std::uint32_t k = 0; k < levels; ++k) {
        out << ',' << (k < m.groups_per_level.size() ? m.groups_per_level[k] : 0);
      }
    }
    out << ',' << m.group_changes << ',' << m.eliminations;
    if (!flat) out << ',' << format_double(m.mean_l1_gmp_distance);
    out << '\n';
  }
  return out.str();
}

// --------------------------------------------------------------- snapshots

/// {round, levels: [{k, groups: [{id, member_count, children|agents, gmp_norm}]}]}
inline nlohmann::ordered_json snapshot_json(const Hierarchy& h, std::uint32_t round) {
  nlohmann::ordered_json doc;
  doc["round"] = round;
  doc["max_levels"] = h.max_levels;
  auto levels = nlohmann::ordered_json::array();
  for (std::uint32_t k = 1; k <= h.top_level(); ++k) {
    auto groups = nlohmann::ordered_json::array();
    for (NodeId id : h.nodes_at_level(k)) {
      const auto& n = h.node(id);
      nlohmann::ordered_json g;
      g["id"] = id;
      g["member_count"] = n.member_count;
      g[k == 1 ? "agents" : "children"] = n.children;
      g["gmp_norm"] = norm(n.gmp.view());
      groups.push_back(std::move(g));
    }
    levels.push_back({{"k", k}, {"groups", std::move(groups)}});
  }
  doc["levels"] = std::move(levels);
  return doc;
}

inline std::string snapshot_file_name(std::uint32_t round) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "round_%06u.json", round);
  return buf;
}

/// Renders a snapshot document as a DOT digraph root -> ... -> agents. Group
/// nodes are labeled "L{k}/#{N}", agents "a{id}". Nodes and edges are emitted
/// top level first, ascending id within a level.
inline std::string snapshot_to_dot(const nlohmann::json& snap) {
  std::ostringstream out;
  try {
    const auto& levels = snap.at("levels");
    if (!levels.is_array() || levels.empty()) throw DataError("snapshot: 'levels' must be a non-empty array");
    std::vector<const nlohmann::json*> ordered;
    for (const auto& l : levels) ordered.push_back(&l);
    std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
      return a->at("k").template get<int>() > b->at("k").template get<int>();
    });
    out << "digraph hierarchy {\n";
    out << "  rankdir=TB;\n";
    for (const auto* l : ordered) {
      const int k = l->at("k").get<int>();
      for (const auto& g : l->at("groups")) {
        const auto id = g.at("id").get<std::uint64_t>();
        out << "  g" << id << " [label=\"L" << k << "/#" << g.at("member_count").get<std::uint64_t>()
            << "\", shape=box];\n";
      }
    }
    for (const auto* l : ordered) {
      const int k = l->at("k").get<int>();
      for (const auto& g : l->at("groups")) {
        const auto id = g.at("id").get<std::uint64_t>();
        if (k == 1) {
          for (const auto& a : g.at("agents")) {
            const auto aid = a.get<std::uint64_t>();
            out << "  a" << aid << " [label=\"a" << aid << "\", shape=ellipse];\n";
            out << "  g" << id << " -> a" << aid << ";\n";
          }
        } else {
          for (const auto& c : g.at("children")) out << "  g" << id << " -> g" << c.get<std::uint64_t>() << ";\n";
        }
      }
    }
    out << "}\n";
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed snapshot: ") + e.what());
  }
  return out.str();
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open file");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline nlohmann::ordered_json final_state_json(const Hierarchy& h, const AgentParams& params,
                                               std::uint32_t round) {
  nlohmann::ordered_json doc;
  doc["round"] = round;
  auto agents = nlohmann::ordered_json::array();
  for (const auto& [id, p] : params) {
    nlohmann::ordered_json a;
    a["id"] = id;
    a["param_norm"] = norm(p.view());
    if (h.contains(id)) a["group"] = h.group_of(id);
    agents.push_back(std::move(a));
  }
  doc["agents"] = std::move(agents);
  doc["hierarchy"] = snapshot_json(h, round);
  return doc;
}

// ----------------------------------------------------------------- compare

struct Comparison {
  std::vector<std::uint32_t> rounds;
  std::vector<double> personal_a, personal_b, global_a, global_b;

  [[nodiscard]] double final_personal_delta() const { return personal_a.back() - personal_b.back(); }
  [[nodiscard]] double final_global_delta() const { return global_a.back() - global_b.back(); }
};

inline Comparison compare_metrics(const CsvTable& a, const CsvTable& b) {
  const char* cols[] = {"round", "mean_personal_acc", "global_acc"};
  for (const char* c : cols) {
    (void)a.column(c);
    (void)b.column(c);
  }
  if (a.rows.size() != b.rows.size()) {
    throw DataError("round count mismatch: " + std::to_string(a.rows.size()) + " vs " +
                    std::to_string(b.rows.size()));
  }
  if (a.rows.empty()) throw DataError("metrics files have no rows");
  Comparison cmp;
  auto num = [](const std::string& s) {
    double v = 0.0;
    if (!parse_double(s, v)) throw DataError("non-numeric metric value '" + s + "'");
    return v;
  };
  for (std::size_t r = 0; r < a.rows.size(); ++r) {
    cmp.rounds.push_back(std::uint32_t(num(a.rows[r][a.column("round")])));
    cmp.personal_a.push_back(num(a.rows[r][a.column("mean_personal_acc")]));
    cmp.personal_b.push_back(num(b.rows[r][b.column("mean_personal_acc")]));
    cmp.global_a.push_back(num(a.rows[r][a.column("global_acc")]));
    cmp.global_b.push_back(num(b.rows[r][b.column("global_acc")]));
  }
  return cmp;
}

inline std::string comparison_csv(const Comparison& c) {
  std::ostringstream out;
  out << "round,personal_a,personal_b,delta_personal,global_a,global_b,delta_global\n";
  for (std::size_t i = 0; i < c.rounds.size(); ++i) {
    out << c.rounds[i] << ',' << format_double(c.personal_a[i]) << ',' << format_double(c.personal_b[i])
        << ',' << format_double(c.personal_a[i] - c.personal_b[i]) << ',' << format_double(c.global_a[i])
        << ',' << format_double(c.global_b[i]) << ',' << format_double(c.global_a[i] - c.global_b[i])
        << '\n';
  }
  return out.str();
}

inline std::string comparison_text(const Comparison& c) {
  std::ostringstream out;
  out << "rounds compared: " << c.rounds.size() << '\n';
  out << "final mean personalized accuracy: a=" << format_double(c.personal_a.back())
      << " b=" << format_double(c.personal_b.back()) << " delta=" << format_double(c.final_personal_delta())
      << '\n';
  out << "final global accuracy: a=" << format_double(c.global_a.back())
      << " b=" << format_double(c.global_b.back()) << " delta=" << format_double(c.final_global_delta())
      << '\n';
  return out.str();
}

}  // namespace demai
