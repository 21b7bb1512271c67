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

#include <stdexcept>
#include <string>

namespace demai {

/// Invalid configuration, inconsistent dimensions, or a precondition on
/// user-supplied input. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or missing data files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Local solver blew up.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation called in the wrong simulation state (e.g. before the
/// hierarchy exists), or an internal invariant breach.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace demai
