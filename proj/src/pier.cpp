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

#include "askd/pier.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "askd/error.hpp"

namespace askd::pier {

void validate(const PierConfig& config) {
  if (!(config.alpha >= 0.0)) fail(ErrorCode::kConfig, "pier alpha must be >= 0");
  if (!(config.beta >= 0.0)) fail(ErrorCode::kConfig, "pier beta must be >= 0");
  if (!(config.lambda >= 0.0 && config.lambda <= 1.0)) {
    fail(ErrorCode::kConfig, "pier lambda must lie in [0, 1]");
  }
  if (!(config.base > 1.0)) fail(ErrorCode::kConfig, "pier base must be > 1");
}

double priority_exponent(double u, std::int64_t k, std::int64_t current_k, double lambda) {
  const double age = current_k > 0 ? static_cast<double>(current_k - k) /
                                         static_cast<double>(current_k)
                                   : 0.0;
  return std::clamp(lambda * u + (1.0 - lambda) * age, 0.0, 1.0);
}

double priority(Reward r, double c, double base) {
  return 1.0 - to_int(r) * (std::pow(base, 1.0 - c) - 1.0) / (base - 1.0);
}

PriorityTable table_from_priorities(std::vector<double> priorities, double alpha,
                                    double beta) {
  if (priorities.empty()) fail(ErrorCode::kInvalidArgument, "cannot build a table for an empty dataset");
  PriorityTable t;
  const std::size_t n = priorities.size();
  t.probs.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::max(priorities[i], kPriorityFloor);
    t.probs[i] = alpha == 0.0 ? 1.0 : std::pow(p, alpha);
    total += t.probs[i];
  }
  for (auto& p : t.probs) p /= total;

  t.weights.resize(n);
  double max_w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    t.weights[i] = beta == 0.0 ? 1.0 : std::pow(static_cast<double>(n) * t.probs[i], -beta);
    max_w = std::max(max_w, t.weights[i]);
  }
  for (auto& w : t.weights) w /= max_w;
  t.priorities = std::move(priorities);
  return t;
}

PriorityTable build_table(const DemoDataset& dataset, std::int64_t current_k,
                          const PierConfig& config) {
  std::vector<double> priorities;
  priorities.reserve(dataset.size());
  for (const auto& rec : dataset.records()) {
    const double c = priority_exponent(rec.u, rec.k, current_k, config.lambda);
    priorities.push_back(priority(rec.r, c, config.base));
  }
  return table_from_priorities(std::move(priorities), config.alpha, config.beta);
}

std::vector<std::size_t> sample(const PriorityTable& table, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> out;
  if (batch_size == 0) return out;
  if (table.probs.empty()) fail(ErrorCode::kInvalidArgument, "cannot sample from an empty table");
  out.reserve(batch_size);
  std::discrete_distribution<std::size_t> dist(table.probs.begin(), table.probs.end());
  for (std::size_t i = 0; i < batch_size; ++i) out.push_back(dist(rng));
  return out;
}

}  // namespace askd::pier
