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
#include <string>
#include <string_view>
#include <vector>

#include "askd/novice.hpp"
#include "askd/pier.hpp"
#include "askd/sag.hpp"

namespace askd {

struct Ablations {
  bool no_fier_relabel = false;
  bool no_fier_validate = false;
  bool no_pier = false;
  bool no_sag_imputation = false;
  bool no_sag_normalization = false;

  std::string to_string() const;  // comma list, "none" when empty
  static Ablations parse(std::string_view list);

  friend bool operator==(const Ablations&, const Ablations&) = default;
};

enum class TeacherFallback { kBlock, kOracleAfterTimeout };

std::string_view to_string(TeacherFallback f) noexcept;

struct TaskConfig {
  int attributes = 12;
  int seen_attributes = 8;
  int candidates = 6;
  int feature_dim = 8;
  double noise = 0.35;
  double prototype_scale = 1.0;
  double unseen_distractor_rate = 0.25;
  double clutter_rate = 0.1;
  int steps_per_episode = 1;
  // Comma list of preset:episodes; the last entry may omit its length.
  std::string phases = "seen";
};

struct ExperimentConfig {
  sag::GatingConfig gating;
  pier::PierConfig pier{1.5, 0.0, 0.5, 10.0};  // beta 0: see README

  int hidden = 64;
  double dropout = 0.4;
  int passes = 16;
  double leaky_slope = 0.01;
  novice::UncertaintyScore uncertainty = novice::UncertaintyScore::kLeastConfidence;
  double learning_rate = 0.1;
  int batch_size = 32;
  int grad_steps = 8;
  int update_every = 5;

  TaskConfig task;

  double relabel_probability = 1.0;
  double teacher_timeout = 30.0;
  TeacherFallback fallback = TeacherFallback::kOracleAfterTimeout;

  std::string run_id;
  int episodes = 3000;
  std::vector<std::uint64_t> seeds{0};
  Ablations ablate;
  int eval_every = 25;
  int eval_scenes = 200;
  int sensitivity_window = 200;
  int specificity_window = 200;
  int episode_window = 100;
  int series_every = 50;
  std::string out = "runs";
  int jobs = 1;

  // Effective component settings after ablations are applied.
  sag::GatingConfig effective_gating() const;
  pier::PierConfig effective_pier() const;
  novice::NoviceConfig novice_config() const;

  // Hard errors throw kConfig; soft contradictions are returned.
  std::vector<std::string> validate() const;

  // Sets one "section.key" entry from text. Throws kConfig on unknown keys
  // and unparsable values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  // Full effective configuration in the file format. parse(echo()) == *this.
  std::string echo() const;

  // Errors carry "<origin>:<line>: " prefixes.
  static ExperimentConfig parse(std::string_view text, std::string_view origin = "<config>");
  static ExperimentConfig load_file(const std::string& path);

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&);
};

}  // namespace askd
