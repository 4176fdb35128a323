// Copyright (c) 2026 The askd Authors. All Rights Reserved.
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

#include <cstddef>
#include <cstdint>
#include <vector>

#include "askd/core.hpp"
#include "askd/rng.hpp"

namespace askd::pier {

struct PierConfig {
  double alpha = 1.5;
  double beta = 1.0;
  double lambda = 0.5;
  double base = 10.0;
};

void validate(const PierConfig& config);

// Sampling floor for tuples whose priority comes out as exactly zero.
inline constexpr double kPriorityFloor = 1e-6;

// Blend of uncertainty and demonstration age in [0, 1]. With no updates yet
// (current_k == 0) every demonstration counts as current.
double priority_exponent(double u, std::int64_t k, std::int64_t current_k, double lambda);

// 1 - r (b^(1-c) - 1) / (b - 1): failures land in [1, 2], successes in [0, 1],
// neutral tuples at 1.
double priority(Reward r, double c, double base);

struct PriorityTable {
  std::vector<double> priorities;
  std::vector<double> probs;
  std::vector<double> weights;

  std::size_t size() const noexcept { return probs.size(); }
};

// Priorities, sampling distribution and max-normalized importance weights for
// every tuple of the dataset, computed from the aligned feedback records.
PriorityTable build_table(const DemoDataset& dataset, std::int64_t current_k,
                          const PierConfig& config);

// Same computation from raw priorities; build_table delegates here.
PriorityTable table_from_priorities(std::vector<double> priorities, double alpha,
                                    double beta);

// Independent categorical draws with replacement.
std::vector<std::size_t> sample(const PriorityTable& table, std::size_t batch_size,
                                Rng& rng);

}  // namespace askd::pier
