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

// Differentiable supervised models over dataset shards: multinomial logistic
// regression (default) and a one-hidden-layer tanh perceptron.
//
// Parameter layout (flattening order), shared by every module that measures
// distances between models:
//
//   softmax-linear:    for class c = 0..C-1:  [w_c,0 .. w_c,F-1, b_c]
//                      D = (F + 1) * C
//   one-hidden-layer:  for hidden unit h = 0..H-1:  [u_h,0 .. u_h,F-1, a_h]
//                      then for class c = 0..C-1:   [v_c,0 .. v_c,H-1, b_c]
//                      D = (F + 1) * H + (H + 1) * C

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "demai/error.hpp"
#include "demai/linalg.hpp"
#include "demai/rng.hpp"

namespace demai {

using AgentId = std::uint32_t;

struct LabeledExample {
  std::vector<double> features;
  int label = 0;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

struct DatasetShard {
  std::vector<LabeledExample> examples;
  AgentId owner = 0;

  [[nodiscard]] std::size_t size() const noexcept { return examples.size(); }
  [[nodiscard]] bool empty() const noexcept { return examples.empty(); }

  friend bool operator==(const DatasetShard&, const DatasetShard&) = default;
};

enum class ModelKind { kSoftmaxLinear, kOneHiddenLayer };

inline std::string_view to_string(ModelKind k) {
  return k == ModelKind::kSoftmaxLinear ? "softmax-linear" : "one-hidden-layer";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "softmax-linear") return ModelKind::kSoftmaxLinear;
  if (s == "one-hidden-layer") return ModelKind::kOneHiddenLayer;
  throw ConfigError("model.kind: unknown model kind '" + std::string(s) + "'");
}

struct ModelSpec {
  ModelKind kind = ModelKind::kSoftmaxLinear;
  std::size_t features = 0;
  std::size_t classes = 0;
  std::size_t hidden = 0;  // one-hidden-layer only

  [[nodiscard]] std::size_t dim() const noexcept {
    if (kind == ModelKind::kSoftmaxLinear) return (features + 1) * classes;
    return (features + 1) * hidden + (hidden + 1) * classes;
  }

  void validate() const {
    if (features == 0) throw ConfigError("model.features must be > 0");
    if (classes < 2) throw ConfigError("model.classes must be >= 2");
    if (kind == ModelKind::kOneHiddenLayer && hidden == 0) {
      throw ConfigError("model.hidden must be > 0 for one-hidden-layer");
    }
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Deterministic in (spec, seed). Entries are zero-mean Gaussian with standard
/// deviation 1/sqrt(fan-in): 1/sqrt(F) for the input-facing block, 1/sqrt(H)
/// for the output block of the perceptron.
inline ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed({seed, 0x1417ULL}));
  std::normal_distribution<double> in_dist(0.0, 1.0 / std::sqrt(double(spec.features)));
  ModelParams w(spec.dim());
  if (spec.kind == ModelKind::kSoftmaxLinear) {
    for (double& v : w.values) v = in_dist(rng);
    return w;
  }
  const std::size_t hidden_block = (spec.features + 1) * spec.hidden;
  std::normal_distribution<double> out_dist(0.0, 1.0 / std::sqrt(double(spec.hidden)));
  for (std::size_t i = 0; i < w.dim(); ++i) {
    w[i] = i < hidden_block ? in_dist(rng) : out_dist(rng);
  }
  return w;
}

namespace detail {

inline void check_inputs(const ModelSpec& spec, const ModelParams& w,
                         std::span<const LabeledExample> examples) {
  require_same_dim(w.dim(), spec.dim(), "model parameters");
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    if (ex.features.size() != spec.features) {
      throw ConfigError("example " + std::to_string(i) + ": expected " +
                        std::to_string(spec.features) + " features, got " +
                        std::to_string(ex.features.size()));
    }
    if (ex.label < 0 || std::size_t(ex.label) >= spec.classes) {
      throw ConfigError("example " + std::to_string(i) + ": label " + std::to_string(ex.label) +
                        " outside [0, " + std::to_string(spec.classes) + ")");
    }
  }
}

/// Scratch buffers for one forward/backward pass.
struct Workspace {
  std::vector<double> hidden;  // tanh activations
  std::vector<double> logits;
  std::vector<double> dlogits;
  std::vector<double> dhidden;

  explicit Workspace(const ModelSpec& spec)
      : hidden(spec.hidden), logits(spec.classes), dlogits(spec.classes), dhidden(spec.hidden) {}
};

inline void forward(const ModelSpec& spec, std::span<const double> w, const LabeledExample& ex,
                    Workspace& ws) {
  const std::size_t F = spec.features;
  const std::size_t C = spec.classes;
  if (spec.kind == ModelKind::kSoftmaxLinear) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* wc = w.data() + c * (F + 1);
      double z = wc[F];
      for (std::size_t j = 0; j < F; ++j) z += wc[j] * ex.features[j];
      ws.logits[c] = z;
    }
    return;
  }
  const std::size_t H = spec.hidden;
  for (std::size_t h = 0; h < H; ++h) {
    const double* uh = w.data() + h * (F + 1);
    double a = uh[F];
    for (std::size_t j = 0; j < F; ++j) a += uh[j] * ex.features[j];
    ws.hidden[h] = std::tanh(a);
  }
  const double* out = w.data() + H * (F + 1);
  for (std::size_t c = 0; c < C; ++c) {
    const double* vc = out + c * (H + 1);
    double z = vc[H];
    for (std::size_t h = 0; h < H; ++h) z += vc[h] * ws.hidden[h];
    ws.logits[c] = z;
  }
}

/// Returns -log softmax(logits)[label] and leaves softmax(logits) - onehot in
/// ws.dlogits.
inline double cross_entropy(std::span<const double> logits, int label, std::span<double> dlogits) {
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    dlogits[c] = std::exp(logits[c] - zmax);
    denom += dlogits[c];
  }
  for (std::size_t c = 0; c < logits.size(); ++c) dlogits[c] /= denom;
  dlogits[std::size_t(label)] -= 1.0;
  return std::log(denom) + zmax - logits[std::size_t(label)];
}

/// Accumulates d(loss)/dw for one example into grad (unscaled).
inline void backward(const ModelSpec& spec, std::span<const double> w, const LabeledExample& ex,
                     Workspace& ws, std::span<double> grad) {
  const std::size_t F = spec.features;
  const std::size_t C = spec.classes;
  if (spec.kind == ModelKind::kSoftmaxLinear) {
    for (std::size_t c = 0; c < C; ++c) {
      double* gc = grad.data() + c * (F + 1);
      const double d = ws.dlogits[c];
      for (std::size_t j = 0; j < F; ++j) gc[j] += d * ex.features[j];
      gc[F] += d;
    }
    return;
  }
  const std::size_t H = spec.hidden;
  const double* out = w.data() + H * (F + 1);
  double* gout = grad.data() + H * (F + 1);
  std::fill(ws.dhidden.begin(), ws.dhidden.end(), 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double d = ws.dlogits[c];
    const double* vc = out + c * (H + 1);
    double* gc = gout + c * (H + 1);
    for (std::size_t h = 0; h < H; ++h) {
      gc[h] += d * ws.hidden[h];
      ws.dhidden[h] += d * vc[h];
    }
    gc[H] += d;
  }
  for (std::size_t h = 0; h < H; ++h) {
    const double dpre = ws.dhidden[h] * (1.0 - ws.hidden[h] * ws.hidden[h]);
    double* gh = grad.data() + h * (F + 1);
    for (std::size_t j = 0; j < F; ++j) gh[j] += dpre * ex.features[j];
    gh[F] += dpre;
  }
}

}  // namespace detail

/// Mean cross-entropy and (optionally) its gradient over the examples picked
/// by `indices`, accumulated in the order given. `grad` may be empty to skip
/// the backward pass; otherwise it is overwritten.
inline double loss_and_gradient(const ModelSpec& spec, const ModelParams& w,
                                std::span<const LabeledExample> examples,
                                std::span<const std::size_t> indices, std::span<double> grad) {
  if (indices.empty()) throw ConfigError("loss on an empty batch");
  const bool want_grad = !grad.empty();
  if (want_grad) {
    require_same_dim(grad.size(), spec.dim(), "gradient buffer");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  detail::Workspace ws(spec);
  double total = 0.0;
  for (std::size_t i : indices) {
    const auto& ex = examples[i];
    detail::forward(spec, w.view(), ex, ws);
    total += detail::cross_entropy(ws.logits, ex.label, ws.dlogits);
    if (want_grad) detail::backward(spec, w.view(), ex, ws, grad);
  }
  const double inv_n = 1.0 / double(indices.size());
  if (want_grad) {
    for (double& g : grad) g *= inv_n;
  }
  return total * inv_n;
}

namespace detail {
inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}
}  // namespace detail

/// Mean cross-entropy of the model on the shard.
inline double loss(const ModelSpec& spec, const ModelParams& w, const DatasetShard& shard) {
  detail::check_inputs(spec, w, shard.examples);
  const auto idx = detail::all_indices(shard.size());
  return loss_and_gradient(spec, w, shard.examples, idx, {});
}

/// Exact analytic gradient of loss().
inline std::vector<double> loss_gradient(const ModelSpec& spec, const ModelParams& w,
                                         const DatasetShard& shard) {
  detail::check_inputs(spec, w, shard.examples);
  const auto idx = detail::all_indices(shard.size());
  std::vector<double> grad(spec.dim());
  loss_and_gradient(spec, w, shard.examples, idx, grad);
  return grad;
}

namespace detail {
inline int argmax_logits(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.size(); ++c) {
    if (logits[c] > logits[best]) best = c;
  }
  return int(best);
}
}  // namespace detail

/// Argmax class; ties resolve to the lowest class id.
inline int predict(const ModelSpec& spec, const ModelParams& w, const LabeledExample& ex) {
  detail::Workspace ws(spec);
  detail::forward(spec, w.view(), ex, ws);
  return detail::argmax_logits(ws.logits);
}

/// Fraction of examples whose predicted class equals the label.
inline double accuracy(const ModelSpec& spec, const ModelParams& w, const DatasetShard& shard) {
  detail::check_inputs(spec, w, shard.examples);
  if (shard.empty()) throw ConfigError("accuracy on an empty shard");
  detail::Workspace ws(spec);
  std::size_t correct = 0;
  for (const auto& ex : shard.examples) {
    detail::forward(spec, w.view(), ex, ws);
    if (detail::argmax_logits(ws.logits) == ex.label) ++correct;
  }
  return double(correct) / double(shard.size());
}

}  // namespace demai
