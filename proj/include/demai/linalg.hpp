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

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "demai/error.hpp"

namespace demai {

/// Flat coefficient vector of a model. Block layout is fixed by ModelSpec
/// (see model.hpp) so Euclidean distances are comparable everywhere.
struct ModelParams {
  std::vector<double> values;

  ModelParams() = default;
  explicit ModelParams(std::vector<double> v) : values(std::move(v)) {}
  explicit ModelParams(std::size_t dim, double fill = 0.0) : values(dim, fill) {}

  [[nodiscard]] std::size_t dim() const noexcept { return values.size(); }
  [[nodiscard]] std::span<const double> view() const noexcept { return values; }
  [[nodiscard]] std::span<double> view() noexcept { return values; }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  [[nodiscard]] bool all_finite() const noexcept {
    for (double v : values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ConfigError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                      " vs " + std::to_string(b) + ")");
  }
}

/// y += a * x
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  require_same_dim(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size(), "squared_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Euclidean distance between two parameter vectors.
inline double distance(const ModelParams& a, const ModelParams& b) {
  return std::sqrt(squared_distance(a.view(), b.view()));
}

inline double norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

}  // namespace demai
