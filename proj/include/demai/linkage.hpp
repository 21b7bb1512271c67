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

// Average-linkage (UPGMA) agglomerative clustering and dendrogram cuts.
//
// Leaves are 0..n-1; the i-th merge creates cluster id n + i. Among equally
// close pairs the one with the smallest (lower id, higher id) wins.

#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "demai/linalg.hpp"

namespace demai {

struct Merge {
  std::size_t left = 0;   // smaller cluster id
  std::size_t right = 0;  // larger cluster id
  double height = 0.0;
  std::size_t size = 0;
};

struct Dendrogram {
  std::size_t leaves = 0;
  std::vector<Merge> merges;  // leaves - 1 entries once complete
};

/// Full pairwise Euclidean distance matrix (row-major n x n).
inline std::vector<double> pairwise_distances(std::span<const ModelParams> points) {
  const std::size_t n = points.size();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      d[i * n + j] = d[j * n + i] = distance(points[i], points[j]);
    }
  }
  return d;
}

inline Dendrogram average_linkage(std::span<const ModelParams> points) {
  const std::size_t n = points.size();
  Dendrogram dg;
  dg.leaves = n;
  if (n < 2) return dg;

  // Slots hold active clusters; dist is between slots.
  std::vector<double> dist = pairwise_distances(points);
  std::vector<std::size_t> slot_id(n), slot_size(n, 1);
  std::iota(slot_id.begin(), slot_id.end(), std::size_t{0});
  std::vector<bool> alive(n, true);

  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t bi = 0, bj = 0;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_lo = 0, best_hi = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!alive[j]) continue;
        const double dij = dist[i * n + j];
        const std::size_t lo = std::min(slot_id[i], slot_id[j]);
        const std::size_t hi = std::max(slot_id[i], slot_id[j]);
        if (dij < best || (dij == best && (lo < best_lo || (lo == best_lo && hi < best_hi)))) {
          best = dij;
          bi = i;
          bj = j;
          best_lo = lo;
          best_hi = hi;
        }
      }
    }
    const std::size_t ni = slot_size[bi], nj = slot_size[bj];
    for (std::size_t k = 0; k < n; ++k) {
      if (!alive[k] || k == bi || k == bj) continue;
      const double dk = (double(ni) * dist[k * n + bi] + double(nj) * dist[k * n + bj]) /
                        double(ni + nj);
      dist[k * n + bi] = dist[bi * n + k] = dk;
    }
    dg.merges.push_back({best_lo, best_hi, best, ni + nj});
    slot_id[bi] = n + step;
    slot_size[bi] = ni + nj;
    alive[bj] = false;
  }
  return dg;
}

/// Flat partition obtained by applying every merge of height <= threshold
/// whose inputs were themselves applied. Labels are numbered in order of
/// each cluster's smallest leaf, so equal partitions compare equal.
inline std::vector<std::size_t> cut_dendrogram(const Dendrogram& dg, double threshold) {
  const std::size_t n = dg.leaves;
  std::vector<std::size_t> parent(n + dg.merges.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  std::vector<bool> applied(n + dg.merges.size(), false);
  for (std::size_t i = 0; i < n; ++i) applied[i] = true;
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t m = 0; m < dg.merges.size(); ++m) {
    const auto& mg = dg.merges[m];
    if (!(mg.height <= threshold) || !applied[mg.left] || !applied[mg.right]) continue;
    const std::size_t id = n + m;
    applied[id] = true;
    parent[find(mg.left)] = id;
    parent[find(mg.right)] = id;
  }
  std::vector<std::size_t> labels(n);
  std::vector<std::size_t> root_label(parent.size(), std::numeric_limits<std::size_t>::max());
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    if (root_label[r] == std::numeric_limits<std::size_t>::max()) root_label[r] = next++;
    labels[i] = root_label[r];
  }
  return labels;
}

}  // namespace demai
