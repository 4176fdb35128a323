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

#include "askd/sag.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "askd/error.hpp"

namespace askd::sag {

std::string_view to_string(GatingMode mode) noexcept {
  switch (mode) {
    case GatingMode::kSensitivity: return "sensitivity";
    case GatingMode::kSpecificity: return "specificity";
    case GatingMode::kSuccess: return "success";
  }
  return "sensitivity";
}

GatingMode gating_mode_from_string(std::string_view name) {
  if (name == "sensitivity") return GatingMode::kSensitivity;
  if (name == "specificity") return GatingMode::kSpecificity;
  if (name == "success") return GatingMode::kSuccess;
  fail(ErrorCode::kConfig, "unknown gating mode '" + std::string(name) +
                               "' (expected sensitivity, specificity or success)");
}

std::string_view to_string(QueryReason reason) noexcept {
  switch (reason) {
    case QueryReason::kNone: return "none";
    case QueryReason::kActive: return "active";
    case QueryReason::kRandom: return "random";
  }
  return "none";
}

std::vector<std::string> validate(const GatingConfig& config) {
  if (!(config.sigma_des > 0.0 && config.sigma_des < 1.0)) {
    fail(ErrorCode::kConfig, "sigma_des must lie in (0, 1)");
  }
  if (!(config.p_rand >= 0.0 && config.p_rand < 1.0)) {
    fail(ErrorCode::kConfig, "p_rand must lie in [0, 1)");
  }
  if (config.n_min < 1) fail(ErrorCode::kConfig, "n_min must be positive");
  if (config.n_rep < 1) fail(ErrorCode::kConfig, "n_rep must be positive");
  std::vector<std::string> warnings;
  if (config.mode != GatingMode::kSpecificity && config.sigma_des <= config.p_rand) {
    warnings.push_back("sigma_des <= p_rand: random queries alone exceed the desired " +
                       std::string(to_string(config.mode)) +
                       ", the achieved value will sit near p_rand");
  }
  if (config.mode == GatingMode::kSpecificity && config.sigma_des > 1.0 - config.p_rand) {
    warnings.push_back("sigma_des > 1 - p_rand: random queries cap specificity at 1 - p_rand");
  }
  return warnings;
}

FailureLabel label_from_reward(Reward r) noexcept {
  return static_cast<FailureLabel>(-to_int(r));
}

bool is_relevant(Reward r, GatingMode mode) noexcept {
  switch (mode) {
    case GatingMode::kSensitivity: return r == Reward::kFailure;
    case GatingMode::kSpecificity: return r == Reward::kSuccess;
    case GatingMode::kSuccess: return r != Reward::kNeutral;
  }
  return false;
}

LabeledWindow get_window(std::span<const FeedbackRecord> records, int n_min,
                         GatingMode mode) {
  std::size_t start = 0;
  int found = 0;
  for (std::size_t i = records.size(); i-- > 0;) {
    if (is_relevant(records[i].r, mode) && ++found >= n_min) {
      start = i;
      break;
    }
  }
  LabeledWindow w;
  w.window_start = start;
  const std::size_t n = records.size() - start;
  w.u.reserve(n);
  w.f.reserve(n);
  w.k.reserve(n);
  for (std::size_t i = start; i < records.size(); ++i) {
    w.u.push_back(records[i].u);
    w.f.push_back(label_from_reward(records[i].r));
    w.k.push_back(records[i].k);
  }
  return w;
}

LinearFit fit_linear(std::span<const std::int64_t> k, std::span<const double> u) {
  const std::size_t n = std::min(k.size(), u.size());
  if (n < 2) return {0.0, n == 1 ? u[0] : 0.0};
  double mean_k = 0.0, mean_u = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_k += static_cast<double>(k[i]);
    mean_u += u[i];
  }
  mean_k /= static_cast<double>(n);
  mean_u /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dk = static_cast<double>(k[i]) - mean_k;
    sxx += dk * dk;
    sxy += dk * (u[i] - mean_u);
  }
  if (sxx == 0.0) return {0.0, mean_u};
  const double slope = sxy / sxx;
  return {slope, mean_u - slope * mean_k};
}

LabeledWindow normalize_uncertainties(LabeledWindow window, std::int64_t current_k) {
  const LinearFit fit = fit_linear(window.k, window.u);
  if (fit.slope == 0.0) return window;
  for (std::size_t i = 0; i < window.u.size(); ++i) {
    const double shifted =
        window.u[i] + fit.slope * static_cast<double>(current_k - window.k[i]);
    window.u[i] = std::clamp(shifted, 0.0, 1.0);
  }
  return window;
}

namespace {

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double softplus(double z) noexcept {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

constexpr double kRidge = 1e-6;
constexpr double kGradTol = 1e-8;
constexpr int kMaxNewton = 100;

struct KnownLabels {
  std::vector<double> u;
  std::vector<double> y;  // 1 failure, 0 success
};

double penalized_nll(const KnownLabels& d, double w, double b) {
  double loss = 0.5 * kRidge * (w * w + b * b);
  for (std::size_t i = 0; i < d.u.size(); ++i) {
    const double z = w * d.u[i] + b;
    loss += softplus(z) - d.y[i] * z;
  }
  return loss;
}

// Newton on the intercept alone with the slope held fixed.
double refit_intercept(const KnownLabels& d, double w, double b) {
  for (int it = 0; it < kMaxNewton; ++it) {
    double g = kRidge * b, h = kRidge;
    for (std::size_t i = 0; i < d.u.size(); ++i) {
      const double p = sigmoid(w * d.u[i] + b);
      g += p - d.y[i];
      h += p * (1.0 - p);
    }
    if (std::abs(g) <= kGradTol) break;
    double step = g / h;
    const double before = penalized_nll(d, w, b);
    while (step != 0.0 && penalized_nll(d, w, b - step) > before) step *= 0.5;
    if (step == 0.0) break;
    b -= step;
  }
  return b;
}

}  // namespace

double LogisticFit::probability(double u) const noexcept { return sigmoid(w * u + b); }

LogisticFit fit_logistic(std::span<const double> u, std::span<const FailureLabel> f) {
  KnownLabels d;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < std::min(u.size(), f.size()); ++i) {
    if (f[i] == FailureLabel::kUnknown) continue;
    d.u.push_back(u[i]);
    const bool failed = f[i] == FailureLabel::kFailure;
    d.y.push_back(failed ? 1.0 : 0.0);
    failures += failed ? 1 : 0;
  }
  const std::size_t n = d.u.size();
  if (failures == 0 || failures == n) {
    double p = n == 0 ? 0.5 : static_cast<double>(failures) / static_cast<double>(n);
    p = std::clamp(p, 0.01, 0.99);
    return {0.0, std::log(p / (1.0 - p)), true};
  }

  double w = 0.0;
  double b = std::log(static_cast<double>(failures) / static_cast<double>(n - failures));
  for (int it = 0; it < kMaxNewton; ++it) {
    double gw = kRidge * w, gb = kRidge * b;
    double hww = kRidge, hwb = 0.0, hbb = kRidge;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(w * d.u[i] + b);
      const double r = p - d.y[i];
      const double s = p * (1.0 - p);
      gw += r * d.u[i];
      gb += r;
      hww += s * d.u[i] * d.u[i];
      hwb += s * d.u[i];
      hbb += s;
    }
    if (std::hypot(gw, gb) <= kGradTol) break;
    const double det = hww * hbb - hwb * hwb;
    double dw, db;
    if (det > 0.0) {
      dw = (hbb * gw - hwb * gb) / det;
      db = (hww * gb - hwb * gw) / det;
    } else {
      dw = gw;
      db = gb;
    }
    // Backtracking keeps every iterate a descent step.
    const double before = penalized_nll(d, w, b);
    double t = 1.0;
    while (t > 1e-12 && penalized_nll(d, w - t * dw, b - t * db) > before) t *= 0.5;
    if (t <= 1e-12) break;
    w -= t * dw;
    b -= t * db;
    if (std::abs(w) > kMaxLogisticSlope) break;
  }
  if (std::abs(w) > kMaxLogisticSlope) {
    w = std::copysign(kMaxLogisticSlope, w);
    b = refit_intercept(d, w, b);
  }
  return {w, b, false};
}

std::vector<FailureLabel> impute_labels(const LabeledWindow& window,
                                        const LogisticFit& model, Rng& rng) {
  std::vector<FailureLabel> out(window.f);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] != FailureLabel::kUnknown) continue;
    out[i] = uniform01(rng) < model.probability(window.u[i]) ? FailureLabel::kFailure
                                                              : FailureLabel::kSuccess;
  }
  return out;
}

double active_target(GatingMode mode, double sigma_des, double p_rand) noexcept {
  if (mode == GatingMode::kSpecificity) return sigma_des / (1.0 - p_rand);
  return (sigma_des - p_rand) / (1.0 - p_rand);
}

double gate_metric(GatingMode mode, std::span<const double> u,
                   std::span<const FailureLabel> f, double gamma) {
  double tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (f[i] == FailureLabel::kUnknown) continue;
    const bool query = u[i] >= gamma;
    const bool failure = f[i] == FailureLabel::kFailure;
    if (failure) (query ? tp : fn) += 1;
    else (query ? fp : tn) += 1;
  }
  switch (mode) {
    case GatingMode::kSensitivity:
      return tp + fn > 0 ? tp / (tp + fn) : std::nan("");
    case GatingMode::kSpecificity:
      return tn + fp > 0 ? tn / (tn + fp) : std::nan("");
    case GatingMode::kSuccess: {
      const double n = tp + fn + tn + fp;
      return n > 0 ? 1.0 - fn / n : std::nan("");
    }
  }
  return std::nan("");
}

namespace {

// Threshold search over labels already sorted by ascending u. Unknown labels
// must have been removed or imputed.
double threshold_sorted(std::span<const double> u, std::span<const FailureLabel> f,
                        double target, GatingMode mode) {
  const std::size_t n = u.size();
  std::size_t failures = 0;
  for (auto label : f) failures += label == FailureLabel::kFailure ? 1 : 0;
  const std::size_t successes = n - failures;

  if (mode == GatingMode::kSensitivity && failures == 0) return kNeverQuery;
  if (mode == GatingMode::kSuccess && n == 0) return kNeverQuery;
  if (mode == GatingMode::kSpecificity && successes == 0) return n == 0 ? 0.0 : u[0];

  // Candidate j < m is the j-th distinct u; candidate m is the sentinel.
  std::vector<double> cand;
  std::vector<double> metric;
  cand.reserve(n + 1);
  metric.reserve(n + 1);
  std::size_t fail_below = 0, succ_below = 0;
  auto metric_now = [&]() {
    switch (mode) {
      case GatingMode::kSensitivity:
        return static_cast<double>(failures - fail_below) / static_cast<double>(failures);
      case GatingMode::kSpecificity:
        return static_cast<double>(succ_below) / static_cast<double>(successes);
      case GatingMode::kSuccess:
        return 1.0 - static_cast<double>(fail_below) / static_cast<double>(n);
    }
    return 0.0;
  };
  for (std::size_t i = 0; i < n;) {
    cand.push_back(u[i]);
    metric.push_back(metric_now());
    const double v = u[i];
    for (; i < n && u[i] == v; ++i) {
      (f[i] == FailureLabel::kFailure ? fail_below : succ_below) += 1;
    }
  }
  cand.push_back(kNeverQuery);
  metric.push_back(metric_now());
  const std::size_t m = cand.size() - 1;

  auto interpolate = [&](std::size_t lo, std::size_t hi) {
    // lo < hi are adjacent candidates; the metric crosses the target between
    // them. frac measures how far along the metric axis the target sits.
    const double frac = (metric[lo] == metric[hi])
                            ? 0.0
                            : (target - metric[lo]) / (metric[hi] - metric[lo]);
    if (frac >= 1.0) return cand[hi];
    if (frac <= 0.0) return cand[lo];
    const double upper = hi == m ? std::max(1.0, cand[lo]) : cand[hi];
    return cand[lo] + frac * (upper - cand[lo]);
  };

  if (mode == GatingMode::kSpecificity) {
    // Metric rises with gamma: take the lowest satisfying candidate.
    std::size_t a = 0;
    while (a <= m && metric[a] < target) ++a;
    if (a > m) return kNeverQuery;
    if (a == 0 || metric[a] == target) return cand[a];
    return interpolate(a - 1, a);
  }

  // Sensitivity and success fall with gamma: take the highest satisfying
  // candidate, or the lowest of an exact-hit plateau.
  if (metric[0] < target) return cand[0];
  if (metric[m] >= target) return kNeverQuery;
  std::size_t a = 0;
  while (a < m && metric[a + 1] >= target) ++a;
  if (metric[a] == target) {
    while (a > 0 && metric[a - 1] == target) --a;
    return cand[a];
  }
  if (a == m) return kNeverQuery;
  return interpolate(a, a + 1);
}

struct SortedWindow {
  std::vector<double> u;
  std::vector<std::size_t> order;
};

SortedWindow sort_window(std::span<const double> u) {
  SortedWindow s;
  s.order.resize(u.size());
  std::iota(s.order.begin(), s.order.end(), std::size_t{0});
  std::stable_sort(s.order.begin(), s.order.end(),
                   [&](std::size_t a, std::size_t b) { return u[a] < u[b]; });
  s.u.reserve(u.size());
  for (auto i : s.order) s.u.push_back(u[i]);
  return s;
}

}  // namespace

double set_threshold(std::span<const double> u, std::span<const FailureLabel> f,
                     double sigma_des, double p_rand, GatingMode mode) {
  if (u.size() != f.size()) {
    fail(ErrorCode::kInvalidArgument, "set_threshold: u and f differ in length");
  }
  std::vector<double> ku;
  std::vector<FailureLabel> kf;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (f[i] == FailureLabel::kUnknown) continue;
    ku.push_back(u[i]);
    kf.push_back(f[i]);
  }
  const SortedWindow s = sort_window(ku);
  std::vector<FailureLabel> sf;
  sf.reserve(kf.size());
  for (auto i : s.order) sf.push_back(kf[i]);
  return threshold_sorted(s.u, sf, active_target(mode, sigma_des, p_rand), mode);
}

double median_threshold(std::vector<double> thresholds) {
  if (thresholds.empty()) return kNeverQuery;
  std::sort(thresholds.begin(), thresholds.end());
  const std::size_t n = thresholds.size();
  if (n % 2 == 1) return thresholds[n / 2];
  const double lo = thresholds[n / 2 - 1];
  const double hi = thresholds[n / 2];
  if (std::isinf(hi)) return lo;
  return 0.5 * (lo + hi);
}

double sag_threshold(std::span<const FeedbackRecord> records, const GatingConfig& config,
                     std::int64_t current_k, Rng& rng) {
  LabeledWindow window = get_window(records, config.n_min, config.mode);
  if (config.normalize) window = normalize_uncertainties(std::move(window), current_k);
  const double target = active_target(config.mode, config.sigma_des, config.p_rand);

  if (!config.impute) {
    return set_threshold(window.u, window.f, config.sigma_des, config.p_rand, config.mode);
  }

  const LogisticFit model = fit_logistic(window.u, window.f);
  const SortedWindow s = sort_window(window.u);
  std::vector<double> gammas;
  gammas.reserve(static_cast<std::size_t>(config.n_rep));
  std::vector<FailureLabel> sorted_f(s.order.size());
  for (int rep = 0; rep < config.n_rep; ++rep) {
    const std::vector<FailureLabel> f = impute_labels(window, model, rng);
    for (std::size_t j = 0; j < s.order.size(); ++j) sorted_f[j] = f[s.order[j]];
    gammas.push_back(threshold_sorted(s.u, sorted_f, target, config.mode));
  }
  return median_threshold(std::move(gammas));
}

GatingDecision decide(double u, double gamma, double p_rand, Rng& rng) {
  const double eps = uniform01(rng);
  GatingDecision d;
  d.gamma = gamma;
  if (u >= gamma) {
    d.queried = true;
    d.reason = QueryReason::kActive;
  } else if (eps < p_rand) {
    d.queried = true;
    d.reason = QueryReason::kRandom;
  }
  return d;
}

}  // namespace askd::sag
