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

// Locale-independent CSV reading and writing for dataset shards and metric
// tables. Floats are written with 17 significant digits.

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "demai/error.hpp"
#include "demai/model.hpp"

namespace demai {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

/// Which columns carry features and which the integer label. An empty
/// feature list selects every column except the label, in file order.
struct CsvSchema {
  std::vector<std::string> feature_columns;
  std::string label_column = "label";
};

inline DatasetShard load_csv(const std::filesystem::path& path, const CsvSchema& schema,
                             AgentId owner = 0) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open file");

  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw DataError(path.string() + ": no examples");
  }
  const auto header = split_csv_line(line);
  auto column_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(path.string() + ": missing column '" + name + "'");
    return std::size_t(it - header.begin());
  };
  const std::size_t label_col = column_of(schema.label_column);
  std::vector<std::size_t> feature_cols;
  if (schema.feature_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i != label_col) feature_cols.push_back(i);
    }
  } else {
    for (const auto& name : schema.feature_columns) feature_cols.push_back(column_of(name));
  }

  DatasetShard shard;
  shard.owner = owner;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(path.string() + ": row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(cells.size()));
    }
    LabeledExample ex;
    ex.features.reserve(feature_cols.size());
    for (std::size_t c : feature_cols) {
      double v = 0.0;
      if (!parse_double(cells[c], v) || !std::isfinite(v)) {
        throw DataError(path.string() + ": row " + std::to_string(row) + ": malformed value '" +
                        std::string(cells[c]) + "' in column '" + std::string(header[c]) + "'");
      }
      ex.features.push_back(v);
    }
    if (!parse_int(cells[label_col], ex.label) || ex.label < 0) {
      throw DataError(path.string() + ": row " + std::to_string(row) + ": non-integer label '" +
                      std::string(cells[label_col]) + "'");
    }
    shard.examples.push_back(std::move(ex));
  }
  if (shard.empty()) throw DataError(path.string() + ": no examples");
  return shard;
}

/// Header f0..f{F-1},label.
inline void write_shard_csv(const std::filesystem::path& path, const DatasetShard& shard) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot write file");
  const std::size_t F = shard.empty() ? 0 : shard.examples.front().features.size();
  for (std::size_t j = 0; j < F; ++j) out << 'f' << j << ',';
  out << "label\n";
  for (const auto& ex : shard.examples) {
    for (double x : ex.features) out << format_double(x) << ',';
    out << ex.label << '\n';
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

/// A CSV table of named columns with string cells (used for metric files).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::size_t column(std::string_view name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("schema error: missing column '" + std::string(name) + "'");
    return std::size_t(it - header.begin());
  }
};

inline CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open file");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  for (auto c : split_csv_line(line)) t.header.emplace_back(c);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    for (auto c : split_csv_line(line)) cells.emplace_back(c);
    if (cells.size() != t.header.size()) {
      throw DataError(path.string() + ": row " + std::to_string(row) + ": field count mismatch");
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

}  // namespace demai
