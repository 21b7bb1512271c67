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

#include "demai/config.hpp"
#include "demai/csv.hpp"
#include "demai/data.hpp"
#include "demai/engine.hpp"
#include "demai/error.hpp"
#include "demai/generalization.hpp"
#include "demai/hierarchy.hpp"
#include "demai/linalg.hpp"
#include "demai/linkage.hpp"
#include "demai/meta_law.hpp"
#include "demai/model.hpp"
#include "demai/parallel.hpp"
#include "demai/population_io.hpp"
#include "demai/rng.hpp"
#include "demai/run_io.hpp"
#include "demai/specialized.hpp"
