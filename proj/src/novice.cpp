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

#include "askd/novice.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "askd/error.hpp"

namespace askd::novice {

using nlohmann::json;

std::string_view to_string(UncertaintyScore score) noexcept {
  return score == UncertaintyScore::kEntropy ? "entropy" : "least_confidence";
}

UncertaintyScore uncertainty_score_from_string(std::string_view name) {
  if (name == "least_confidence") return UncertaintyScore::kLeastConfidence;
  if (name == "entropy") return UncertaintyScore::kEntropy;
  fail(ErrorCode::kConfig, "unknown uncertainty score '" + std::string(name) +
                               "' (expected least_confidence or entropy)");
}

void validate(const NoviceConfig& c) {
  if (c.feature_dim < 1 || c.num_goals < 1 || c.hidden < 1) {
    fail(ErrorCode::kConfig, "novice dimensions must be positive");
  }
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) fail(ErrorCode::kConfig, "dropout must lie in [0, 1)");
  if (c.passes < 1) fail(ErrorCode::kConfig, "ensemble passes must be >= 1");
  if (!(c.leaky_slope >= 0.0 && c.leaky_slope < 1.0)) {
    fail(ErrorCode::kConfig, "leaky slope must lie in [0, 1)");
  }
}

double uncertainty(std::span<const double> probs, UncertaintyScore score) {
  if (probs.empty()) return 0.0;
  if (score == UncertaintyScore::kLeastConfidence) {
    return std::clamp(1.0 - *std::max_element(probs.begin(), probs.end()), 0.0, 1.0);
  }
  if (probs.size() < 2) return 0.0;
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::clamp(h / std::log(static_cast<double>(probs.size())), 0.0, 1.0);
}

namespace {

void softmax_inplace(std::vector<double>& s) {
  const double mx = *std::max_element(s.begin(), s.end());
  double sum = 0.0;
  for (auto& v : s) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : s) v /= sum;
}

// Per-unit multiplier for inverted dropout: 0 or 1/(1-rate).
std::vector<double> draw_mask(int hidden, double rate, Rng& rng) {
  std::vector<double> mask(static_cast<std::size_t>(hidden));
  const double keep = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = uniform01(rng) < rate ? 0.0 : keep;
  return mask;
}

}  // namespace

NoviceModel::NoviceModel(const NoviceConfig& config, Rng& init_rng) : config_(config) {
  validate(config_);
  params_.assign(param_count(), 0.0);
  const double lim1 = std::sqrt(6.0 / static_cast<double>(input_dim() + config_.hidden));
  const double lim2 = std::sqrt(6.0 / static_cast<double>(config_.hidden + 1));
  std::uniform_real_distribution<double> d1(-lim1, lim1), d2(-lim2, lim2);
  for (std::size_t i = w1_offset(); i < b1_offset(); ++i) params_[i] = d1(init_rng);
  for (std::size_t i = w2_offset(); i < param_count(); ++i) params_[i] = d2(init_rng);
}

void NoviceModel::check_input(const Observation& obs, int goal) const {
  if (obs.block_dim() != config_.feature_dim) {
    fail(ErrorCode::kInvalidArgument, "observation block size does not match the novice");
  }
  if (goal < 0 || goal >= config_.num_goals) {
    fail(ErrorCode::kInvalidArgument, "goal id outside the novice's goal set");
  }
}

namespace {

struct PassCache {
  std::vector<double> pre;     // candidates x hidden pre-activations
  std::vector<double> hidden;  // candidates x hidden, after activation and mask
  std::vector<double> probs;
};

void run_pass(const NoviceConfig& cfg, std::span<const double> params,
                     std::size_t input_dim, const Observation& obs, int goal,
                     const std::vector<double>* mask, PassCache& cache) {
  const int H = cfg.hidden;
  const int d = cfg.feature_dim;
  const int C = obs.num_candidates();
  const double* W1 = params.data();
  const double* b1 = W1 + static_cast<std::size_t>(H) * input_dim;
  const double* w2 = b1 + H;
  cache.pre.assign(static_cast<std::size_t>(C) * H, 0.0);
  cache.hidden.assign(static_cast<std::size_t>(C) * H, 0.0);
  cache.probs.assign(static_cast<std::size_t>(C), 0.0);
  for (int c = 0; c < C; ++c) {
    const auto x = obs.block(c);
    double score = 0.0;
    for (int j = 0; j < H; ++j) {
      const double* row = W1 + static_cast<std::size_t>(j) * input_dim;
      double z = b1[j] + row[d + goal];
      for (int i = 0; i < d; ++i) z += row[i] * x[static_cast<std::size_t>(i)];
      double h = z > 0.0 ? z : cfg.leaky_slope * z;
      if (mask) h *= (*mask)[static_cast<std::size_t>(j)];
      cache.pre[static_cast<std::size_t>(c) * H + j] = z;
      cache.hidden[static_cast<std::size_t>(c) * H + j] = h;
      score += w2[j] * h;
    }
    cache.probs[static_cast<std::size_t>(c)] = score;
  }
  softmax_inplace(cache.probs);
}

}  // namespace

std::vector<double> NoviceModel::forward(const Observation& obs, int goal,
                                         Rng* dropout_rng) const {
  check_input(obs, goal);
  PassCache cache;
  if (dropout_rng && config_.dropout > 0.0) {
    const auto mask = draw_mask(config_.hidden, config_.dropout, *dropout_rng);
    run_pass(config_, params_, input_dim(), obs, goal, &mask, cache);
  } else {
    run_pass(config_, params_, input_dim(), obs, goal, nullptr, cache);
  }
  return cache.probs;
}

Prediction NoviceModel::predict(const Observation& obs, int goal, Rng& dropout_rng) const {
  check_input(obs, goal);
  Prediction p;
  const int C = obs.num_candidates();
  p.probs.assign(static_cast<std::size_t>(C), 0.0);
  const bool stochastic = config_.dropout > 0.0;
  const int passes = stochastic ? config_.passes : 1;
  PassCache cache;
  for (int m = 0; m < passes; ++m) {
    if (stochastic) {
      const auto mask = draw_mask(config_.hidden, config_.dropout, dropout_rng);
      run_pass(config_, params_, input_dim(), obs, goal, &mask, cache);
    } else {
      run_pass(config_, params_, input_dim(), obs, goal, nullptr, cache);
    }
    for (int c = 0; c < C; ++c) p.probs[static_cast<std::size_t>(c)] += cache.probs[static_cast<std::size_t>(c)];
  }
  for (auto& v : p.probs) v /= passes;
  p.action = static_cast<int>(std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin());
  p.u = uncertainty(p.probs, config_.score);
  return p;
}

int NoviceModel::act(const Observation& obs, int goal) const {
  const auto probs = forward(obs, goal, nullptr);
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

double NoviceModel::loss(std::span<const TrainingExample> batch, std::vector<double>* grad,
                         Rng* dropout_rng) const {
  if (grad) grad->assign(params_.size(), 0.0);
  if (batch.empty()) return 0.0;
  const int H = config_.hidden;
  const int d = config_.feature_dim;
  const std::size_t in = input_dim();
  const double* w2 = params_.data() + w2_offset();
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  PassCache cache;
  std::vector<double> mask;
  std::vector<double> dz(static_cast<std::size_t>(H));
  for (const auto& ex : batch) {
    check_input(*ex.observation, ex.goal);
    const Observation& obs = *ex.observation;
    const bool use_mask = dropout_rng && config_.dropout > 0.0;
    if (use_mask) mask = draw_mask(H, config_.dropout, *dropout_rng);
    run_pass(config_, params_, in, obs, ex.goal, use_mask ? &mask : nullptr, cache);
    const double pa = std::max(cache.probs[static_cast<std::size_t>(ex.action)], 1e-300);
    total += ex.weight * -std::log(pa);
    if (!grad) continue;
    double* g = grad->data();
    for (int c = 0; c < obs.num_candidates(); ++c) {
      const double ds = scale * ex.weight *
                        (cache.probs[static_cast<std::size_t>(c)] - (c == ex.action ? 1.0 : 0.0));
      const auto x = obs.block(c);
      const std::size_t base = static_cast<std::size_t>(c) * H;
      for (int j = 0; j < H; ++j) {
        g[w2_offset() + j] += ds * cache.hidden[base + j];
        double dh = ds * w2[j];
        if (use_mask) dh *= mask[static_cast<std::size_t>(j)];
        dz[static_cast<std::size_t>(j)] = cache.pre[base + j] > 0.0 ? dh : config_.leaky_slope * dh;
      }
      for (int j = 0; j < H; ++j) {
        const double z = dz[static_cast<std::size_t>(j)];
        if (z == 0.0) continue;
        double* row = g + static_cast<std::size_t>(j) * in;
        for (int i = 0; i < d; ++i) row[i] += z * x[static_cast<std::size_t>(i)];
        row[d + ex.goal] += z;
        g[b1_offset() + j] += z;
      }
    }
  }
  return total * scale;
}

void NoviceModel::update(const DemoDataset& dataset, const pier::PriorityTable& table,
                         const UpdateOptions& options, Rng& sampling_rng, Rng& dropout_rng) {
  if (options.steps > 0) {
    if (dataset.empty()) fail(ErrorCode::kInvalidArgument, "cannot update on an empty dataset");
    if (table.size() != dataset.size()) {
      fail(ErrorCode::kAlignment, "replay table does not match the dataset");
    }
  }
  std::vector<double> grad;
  std::vector<TrainingExample> batch;
  for (int step = 0; step < options.steps; ++step) {
    const auto idx = pier::sample(table, static_cast<std::size_t>(options.batch_size), sampling_rng);
    batch.clear();
    for (auto i : idx) {
      const auto& t = dataset.tuples()[i];
      batch.push_back({&t.observation, t.goal, t.action, table.weights[i]});
    }
    loss(batch, &grad, &dropout_rng);
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= options.learning_rate * grad[i];
  }
  ++update_count_;
}

void NoviceModel::save_json(std::ostream& out) const {
  json j = {{"schema", "askd.novice/1"},
            {"config",
             {{"feature_dim", config_.feature_dim},
              {"num_goals", config_.num_goals},
              {"hidden", config_.hidden},
              {"dropout", config_.dropout},
              {"passes", config_.passes},
              {"leaky_slope", config_.leaky_slope},
              {"score", to_string(config_.score)}}},
            {"update_count", update_count_},
            {"params", params_}};
  out << j.dump() << '\n';
}

NoviceModel NoviceModel::load_json(std::istream& in) {
  try {
    json j = json::parse(in);
    if (j.at("schema").get<std::string>() != "askd.novice/1") {
      fail(ErrorCode::kSchema, "unsupported novice checkpoint schema");
    }
    const auto& c = j.at("config");
    NoviceModel m;
    m.config_.feature_dim = c.at("feature_dim").get<int>();
    m.config_.num_goals = c.at("num_goals").get<int>();
    m.config_.hidden = c.at("hidden").get<int>();
    m.config_.dropout = c.at("dropout").get<double>();
    m.config_.passes = c.at("passes").get<int>();
    m.config_.leaky_slope = c.at("leaky_slope").get<double>();
    m.config_.score = uncertainty_score_from_string(c.at("score").get<std::string>());
    validate(m.config_);
    m.update_count_ = j.at("update_count").get<std::int64_t>();
    m.params_ = j.at("params").get<std::vector<double>>();
    if (m.params_.size() != m.param_count()) {
      fail(ErrorCode::kSchema, "checkpoint parameter count does not match its config");
    }
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::kSchema, std::string("novice checkpoint: ") + e.what());
  }
}

}  // namespace askd::novice
