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
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "askd/core.hpp"
#include "askd/pier.hpp"
#include "askd/rng.hpp"

namespace askd::novice {

enum class UncertaintyScore { kLeastConfidence, kEntropy };

std::string_view to_string(UncertaintyScore score) noexcept;
UncertaintyScore uncertainty_score_from_string(std::string_view name);

struct NoviceConfig {
  int feature_dim = 8;   // features per candidate block
  int num_goals = 12;    // size of the goal one-hot
  int hidden = 64;
  double dropout = 0.4;
  int passes = 16;       // stochastic forward passes per prediction
  double leaky_slope = 0.01;
  UncertaintyScore score = UncertaintyScore::kLeastConfidence;
};

void validate(const NoviceConfig& config);

struct Prediction {
  int action = 0;
  double u = 0.0;
  std::vector<double> probs;  // ensemble mean over candidates
};

struct TrainingExample {
  const Observation* observation = nullptr;
  int goal = 0;
  int action = 0;
  double weight = 1.0;
};

struct UpdateOptions {
  int steps = 8;
  int batch_size = 32;
  double learning_rate = 0.1;
};

// Goal-conditioned candidate scorer. One two-layer network with leaky
// rectifiers scores every candidate block concatenated with the goal one-hot;
// a softmax over the scores gives the action distribution. Dropout on the
// hidden layer provides the stochastic ensemble behind the uncertainty.
class NoviceModel {
 public:
  NoviceModel(const NoviceConfig& config, Rng& init_rng);

  const NoviceConfig& config() const noexcept { return config_; }
  std::int64_t update_count() const noexcept { return update_count_; }

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  // Distribution over candidates. Without a dropout rng the pass is
  // deterministic (no units dropped).
  std::vector<double> forward(const Observation& obs, int goal, Rng* dropout_rng) const;

  // Ensemble mean over config().passes stochastic passes; argmax ties go to
  // the lowest index.
  Prediction predict(const Observation& obs, int goal, Rng& dropout_rng) const;

  // Deterministic pass, used for frozen-checkpoint evaluation.
  int act(const Observation& obs, int goal) const;

  // Mean importance-weighted cross-entropy over the batch. When grad is non
  // null it receives the gradient with respect to parameters().
  double loss(std::span<const TrainingExample> batch, std::vector<double>* grad,
              Rng* dropout_rng) const;

  // `steps` minibatch SGD steps on batches drawn from the replay table, then
  // the update count advances by one.
  void update(const DemoDataset& dataset, const pier::PriorityTable& table,
              const UpdateOptions& options, Rng& sampling_rng, Rng& dropout_rng);

  void save_json(std::ostream& out) const;
  static NoviceModel load_json(std::istream& in);

 private:
  NoviceModel() = default;

  std::size_t input_dim() const noexcept {
    return static_cast<std::size_t>(config_.feature_dim + config_.num_goals);
  }
  // Layout: W1 (hidden x input, row-major), b1 (hidden), w2 (hidden).
  std::size_t w1_offset() const noexcept { return 0; }
  std::size_t b1_offset() const noexcept { return config_.hidden * input_dim(); }
  std::size_t w2_offset() const noexcept { return b1_offset() + config_.hidden; }
  std::size_t param_count() const noexcept { return w2_offset() + config_.hidden; }

  void check_input(const Observation& obs, int goal) const;

  NoviceConfig config_;
  std::vector<double> params_;
  std::int64_t update_count_ = 0;
};

double uncertainty(std::span<const double> probs, UncertaintyScore score);

}  // namespace askd::novice
