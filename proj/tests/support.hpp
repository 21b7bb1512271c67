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

// Fixtures and independent reference computations shared by the unit tests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "demai/demai.hpp"

namespace testing {

using namespace demai;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("demai_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline DatasetShard random_shard(std::mt19937_64& rng, std::size_t n, std::size_t F, std::size_t C,
                                 AgentId owner = 0) {
  std::normal_distribution<double> x(0.0, 1.5);
  std::uniform_int_distribution<int> y(0, int(C) - 1);
  DatasetShard s;
  s.owner = owner;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledExample ex;
    ex.features.resize(F);
    for (double& v : ex.features) v = x(rng);
    ex.label = y(rng);
    s.examples.push_back(std::move(ex));
  }
  return s;
}

inline ModelParams random_params(std::mt19937_64& rng, std::size_t dim, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  ModelParams p(dim);
  for (double& v : p.values) v = d(rng);
  return p;
}

// Naive logits, written out per layout without sharing code with the library.
inline std::vector<double> reference_logits(const ModelSpec& spec, const ModelParams& w,
                                            const std::vector<double>& x) {
  const std::size_t F = spec.features, C = spec.classes, H = spec.hidden;
  std::vector<double> z(C, 0.0);
  if (spec.kind == ModelKind::kSoftmaxLinear) {
    for (std::size_t c = 0; c < C; ++c) {
      z[c] = w[c * (F + 1) + F];
      for (std::size_t j = 0; j < F; ++j) z[c] += w[c * (F + 1) + j] * x[j];
    }
    return z;
  }
  std::vector<double> h(H);
  for (std::size_t k = 0; k < H; ++k) {
    double a = w[k * (F + 1) + F];
    for (std::size_t j = 0; j < F; ++j) a += w[k * (F + 1) + j] * x[j];
    h[k] = std::tanh(a);
  }
  const std::size_t off = H * (F + 1);
  for (std::size_t c = 0; c < C; ++c) {
    z[c] = w[off + c * (H + 1) + H];
    for (std::size_t k = 0; k < H; ++k) z[c] += w[off + c * (H + 1) + k] * h[k];
  }
  return z;
}

inline double reference_loss(const ModelSpec& spec, const ModelParams& w, const DatasetShard& s) {
  long double total = 0.0L;
  for (const auto& ex : s.examples) {
    const auto z = reference_logits(spec, w, ex.features);
    long double denom = 0.0L;
    for (double v : z) denom += std::exp((long double)v);
    total += std::log(denom) - (long double)z[std::size_t(ex.label)];
  }
  return double(total / (long double)s.size());
}

inline double reference_accuracy(const ModelSpec& spec, const ModelParams& w, const DatasetShard& s) {
  std::size_t hit = 0;
  for (const auto& ex : s.examples) {
    const auto z = reference_logits(spec, w, ex.features);
    int best = 0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      bool beats_all = true;
      for (std::size_t d = 0; d < z.size(); ++d) {
        if (d < c ? !(z[c] > z[d]) : (d > c && z[d] > z[c])) beats_all = false;
      }
      if (beats_all) {
        best = int(c);
        break;
      }
    }
    if (best == ex.label) ++hit;
  }
  return double(hit) / double(s.size());
}

inline std::vector<double> central_differences(const std::function<double(const ModelParams&)>& f,
                                               const ModelParams& w, double h = 1e-5) {
  std::vector<double> g(w.dim());
  ModelParams p = w;
  for (std::size_t i = 0; i < w.dim(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double up = f(p);
    p[i] = orig - h;
    const double down = f(p);
    p[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += std::max(a[i] * a[i], b[i] * b[i]);
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-8);
}

inline double max_abs_diff(const ModelParams& a, const ModelParams& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline ModelParams vec(std::initializer_list<double> v) { return ModelParams(std::vector<double>(v)); }

// Adjusted Rand index of two labelings, from the contingency table.
template <class A, class B>
double adjusted_rand_index(const std::vector<A>& a, const std::vector<B>& b) {
  std::map<A, std::size_t> ra;
  std::map<B, std::size_t> rb;
  std::map<std::pair<A, B>, std::size_t> nij;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++ra[a[i]];
    ++rb[b[i]];
    ++nij[{a[i], b[i]}];
  }
  auto c2 = [](double n) { return n * (n - 1.0) / 2.0; };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [k, v] : nij) sum_ij += c2(double(v));
  for (const auto& [k, v] : ra) sum_a += c2(double(v));
  for (const auto& [k, v] : rb) sum_b += c2(double(v));
  const double expected = sum_a * sum_b / c2(double(a.size()));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_ij - expected) / (max_index - expected);
}

}  // namespace testing
