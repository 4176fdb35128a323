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

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "askd/core.hpp"
#include "askd/rng.hpp"

namespace askd::sag {

enum class GatingMode { kSensitivity, kSpecificity, kSuccess };

std::string_view to_string(GatingMode mode) noexcept;
GatingMode gating_mode_from_string(std::string_view name);

// Returned when no uncertainty should trigger an active query.
inline constexpr double kNeverQuery = std::numeric_limits<double>::infinity();

struct GatingConfig {
  GatingMode mode = GatingMode::kSensitivity;
  double sigma_des = 0.9;
  double p_rand = 0.1;
  int n_min = 15;
  int n_rep = 25;
  // Ablation switches; both on for the full gate.
  bool normalize = true;
  bool impute = true;
};

// Hard errors throw kConfig; soft contradictions come back as warnings.
std::vector<std::string> validate(const GatingConfig& config);

// Failure labels are the negated teacher rewards: +1 the novice failed,
// -1 it succeeded, 0 the teacher was not asked.
enum class FailureLabel : std::int8_t { kSuccess = -1, kUnknown = 0, kFailure = 1 };

FailureLabel label_from_reward(Reward r) noexcept;

struct LabeledWindow {
  std::vector<double> u;
  std::vector<FailureLabel> f;
  std::vector<std::int64_t> k;
  std::size_t window_start = 0;

  std::size_t size() const noexcept { return u.size(); }
};

bool is_relevant(Reward r, GatingMode mode) noexcept;

// Shortest suffix of the history holding at least n_min relevant labels, or
// the whole history when it holds fewer.
LabeledWindow get_window(std::span<const FeedbackRecord> records, int n_min,
                         GatingMode mode);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

// Ordinary least squares of u on k. Fewer than two distinct k give slope 0.
LinearFit fit_linear(std::span<const std::int64_t> k, std::span<const double> u);

// Shifts every u by slope * (current_k - k) so old uncertainties are expressed
// at the current model version, then clamps to [0, 1].
LabeledWindow normalize_uncertainties(LabeledWindow window, std::int64_t current_k);

struct LogisticFit {
  double w = 0.0;
  double b = 0.0;
  bool constant = false;  // single-class fallback

  double probability(double u) const noexcept;
};

inline constexpr double kMaxLogisticSlope = 50.0;

// Maximum-likelihood fit of P(failure | u) on the known labels of the window.
// Unknown entries are ignored.
LogisticFit fit_logistic(std::span<const double> u, std::span<const FailureLabel> f);

// One imputation draw: known labels pass through, unknown ones are sampled
// from the logistic model.
std::vector<FailureLabel> impute_labels(const LabeledWindow& window,
                                        const LogisticFit& model, Rng& rng);

// Rate transform turning the desired total metric into the target for the
// active gate alone (random queries accounted for in expectation).
double active_target(GatingMode mode, double sigma_des, double p_rand) noexcept;

// Empirical metric of the active gate at threshold gamma, where queries are
// {u >= gamma} and f = +1 marks failures. Returns NaN when the metric's
// denominator is empty.
double gate_metric(GatingMode mode, std::span<const double> u,
                   std::span<const FailureLabel> f, double gamma);

// Picks the threshold whose active metric meets the target, interpolating
// between the two adjacent candidate thresholds that straddle it.
double set_threshold(std::span<const double> u, std::span<const FailureLabel> f,
                     double sigma_des, double p_rand, GatingMode mode);

// Full gate: window, normalization, logistic imputation repeated n_rep
// times and the median threshold.
double sag_threshold(std::span<const FeedbackRecord> records,
                     const GatingConfig& config, std::int64_t current_k, Rng& rng);

// Median with +inf treated as the largest value. For an even count the two
// middle values are averaged unless the upper one is +inf, in which case the
// lower one is returned.
double median_threshold(std::vector<double> thresholds);

enum class QueryReason { kNone, kActive, kRandom };

std::string_view to_string(QueryReason reason) noexcept;

struct GatingDecision {
  double gamma = kNeverQuery;
  bool queried = false;
  QueryReason reason = QueryReason::kNone;
};

// Always consumes exactly one uniform draw so the gating stream stays aligned
// regardless of the outcome.
GatingDecision decide(double u, double gamma, double p_rand, Rng& rng);

}  // namespace askd::sag
