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

// The meta-law: global schedules moving the system from plasticity to
// stability.
//
//   alpha(t)      = alpha1 - (alpha1 - alpha0) * beta_decay^t
//   beta(t)       = beta0 * beta_decay^t
//   gamma(t)      = gamma0 * gamma_decay^t
//   resistance(t) = rho0                                       t <  t_adapt
//                 = 1 - (1 - rho0) * rho_growth^(t - t_adapt)  t >= t_adapt
//
// Stages: warmup (t < W), construction (t == W), adaptation (W < t < t_special),
// high-specialization (t >= t_special).

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "demai/error.hpp"

namespace demai {

enum class Stage { kWarmup, kConstruction, kAdaptation, kHighSpecialization };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kWarmup: return "warmup";
    case Stage::kConstruction: return "construction";
    case Stage::kAdaptation: return "adaptation";
    case Stage::kHighSpecialization: return "high-specialization";
  }
  return "?";
}

struct MetaLawSchedule {
  double alpha0 = 1.0;
  double alpha1 = 1.0;
  double beta0 = 1.0;
  double beta_decay = 0.95;
  double gamma0 = 1.0;
  double gamma_decay = 0.97;
  std::uint32_t warmup_rounds = 3;
  std::uint32_t restructure_period = 1;
  std::uint32_t t_adapt = 10;
  std::uint32_t t_special = 30;
  std::uint32_t max_levels = 2;
  std::vector<double> thresholds = {1.75, 3.0};
  double rho0 = 0.0;
  double rho_growth = 0.9;
  double elimination_factor = 3.0;

  // Decay factors equal to 1 are accepted (constant schedules), which the
  // flat-averaging reduction needs; beta0 = 0 likewise switches the proximal
  // pull off.
  void validate() const {
    if (!(alpha0 > 0.0)) throw ConfigError("meta_law.alpha0 must be > 0");
    if (!(alpha1 >= alpha0)) throw ConfigError("meta_law.alpha1 must be >= meta_law.alpha0");
    if (!(beta0 >= 0.0)) throw ConfigError("meta_law.beta0 must be >= 0");
    if (!(beta_decay > 0.0 && beta_decay <= 1.0)) {
      throw ConfigError("meta_law.beta_decay must be in (0, 1]");
    }
    if (!(gamma0 > 0.0 && gamma0 <= 1.0)) throw ConfigError("meta_law.gamma0 must be in (0, 1]");
    if (!(gamma_decay > 0.0 && gamma_decay <= 1.0)) {
      throw ConfigError("meta_law.gamma_decay must be in (0, 1]");
    }
    if (restructure_period < 1) throw ConfigError("meta_law.restructure_period must be >= 1");
    if (!(t_adapt < t_special)) throw ConfigError("meta_law.t_adapt must be < meta_law.t_special");
    if (!(warmup_rounds < t_special)) {
      throw ConfigError("meta_law.warmup_rounds must be < meta_law.t_special");
    }
    if (max_levels < 1) throw ConfigError("meta_law.max_levels must be >= 1");
    if (thresholds.size() != max_levels) {
      throw ConfigError("meta_law.thresholds must have exactly max_levels entries");
    }
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      if (!(thresholds[k] > 0.0) || !std::isfinite(thresholds[k])) {
        throw ConfigError("meta_law.thresholds must be finite and > 0");
      }
      if (k > 0 && !(thresholds[k] > thresholds[k - 1])) {
        throw ConfigError("meta_law.thresholds must be strictly increasing");
      }
    }
    if (!(rho0 >= 0.0 && rho0 < 1.0)) throw ConfigError("meta_law.rho0 must be in [0, 1)");
    if (!(rho_growth > 0.0 && rho_growth <= 1.0)) {
      throw ConfigError("meta_law.rho_growth must be in (0, 1]");
    }
    if (!(elimination_factor > 1.0)) {
      throw ConfigError("meta_law.elimination_factor must be > 1");
    }
  }

  friend bool operator==(const MetaLawSchedule&, const MetaLawSchedule&) = default;
};

inline double alpha(const MetaLawSchedule& s, std::uint32_t t) {
  return s.alpha1 - (s.alpha1 - s.alpha0) * std::pow(s.beta_decay, double(t));
}

inline double beta(const MetaLawSchedule& s, std::uint32_t t) {
  return s.beta0 * std::pow(s.beta_decay, double(t));
}

inline double gamma(const MetaLawSchedule& s, std::uint32_t t) {
  return s.gamma0 * std::pow(s.gamma_decay, double(t));
}

inline Stage stage(const MetaLawSchedule& s, std::uint32_t t) {
  if (t < s.warmup_rounds) return Stage::kWarmup;
  if (t == s.warmup_rounds) return Stage::kConstruction;
  if (t < s.t_special) return Stage::kAdaptation;
  return Stage::kHighSpecialization;
}

inline double resistance(const MetaLawSchedule& s, std::uint32_t t) {
  if (t < s.t_adapt) return s.rho0;
  return 1.0 - (1.0 - s.rho0) * std::pow(s.rho_growth, double(t - s.t_adapt));
}

inline bool restructure_due(const MetaLawSchedule& s, std::uint32_t t) {
  return t >= s.warmup_rounds && (t - s.warmup_rounds) % s.restructure_period == 0;
}

}  // namespace demai
