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
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "askd/config.hpp"
#include "askd/core.hpp"
#include "askd/fier.hpp"
#include "askd/novice.hpp"
#include "askd/rng.hpp"

namespace askd::simbench {

void validate(const TaskConfig& config);

enum class GoalPool { kSeen, kUnseen, kAll };

// One stretch of the domain-shift schedule.
struct Phase {
  std::string name;
  std::int64_t episodes = -1;  // -1: until the run ends
  GoalPool goals = GoalPool::kSeen;
  int bank = 0;                // which prototype set renders the attributes
};

// Presets: seen, unseen, all (bank 0) and shifted, shifted_unseen,
// shifted_all (bank 1).
Phase phase_preset(std::string_view name);

class PhaseSchedule {
 public:
  PhaseSchedule() : PhaseSchedule(std::vector<Phase>{phase_preset("seen")}) {}
  explicit PhaseSchedule(std::vector<Phase> phases);
  static PhaseSchedule parse(std::string_view text);

  const Phase& at(std::int64_t episode) const;
  const std::vector<Phase>& phases() const noexcept { return phases_; }

 private:
  std::vector<Phase> phases_;
};

inline constexpr int kClutter = -1;  // candidate without an attribute

// Display name of an attribute ("clutter" for kClutter).
std::string attribute_name(int attribute);

struct Scene {
  Observation observation;
  int goal = 0;
  std::vector<int> attributes;  // per candidate; kClutter for clutter
  int target = 0;               // the unique candidate carrying the goal
};

// Synthetic goal-conditioned pick task. Each attribute has a prototype
// feature vector in two independent banks; a scene shows C noisy candidate
// blocks, exactly one of which carries the commanded attribute.
class SynthTask {
 public:
  SynthTask(const TaskConfig& config, Rng& rng);

  const TaskConfig& config() const noexcept { return config_; }
  int num_goals() const noexcept { return config_.attributes; }
  bool is_seen(int attribute) const noexcept {
    return attribute >= 0 && attribute < config_.seen_attributes;
  }
  std::span<const double> prototype(int bank, int attribute) const;
  std::string attribute_name(int attribute) const { return simbench::attribute_name(attribute); }

  // Goal drawn from `pool`, or from the phase's own pool when unset.
  Scene generate_scene(const Phase& phase, Rng& rng,
                       std::optional<GoalPool> pool = std::nullopt) const;
  Scene generate_scene(const Phase& phase, int goal, Rng& rng) const;

 private:
  TaskConfig config_;
  std::vector<std::vector<double>> banks_[2];
};

class SynthEnv : public fier::Environment {
 public:
  SynthEnv(const SynthTask& task, PhaseSchedule schedule, Rng rng);
  SynthEnv(const SynthEnv&) = delete;
  SynthEnv& operator=(const SynthEnv&) = delete;

  // Selects the phase for the next reset.
  void begin_episode(std::int64_t episode);
  const Phase& phase() const noexcept { return *phase_; }
  const Scene& scene() const noexcept { return scene_; }

  void reset() override;
  const Observation& observation() const override { return scene_.observation; }
  int goal() const override { return scene_.goal; }
  bool act(int action) override;
  bool achieves_goal(int action) const override;
  std::vector<std::string> candidate_labels() const override;
  std::string goal_label() const override;

 private:
  const SynthTask* task_;
  PhaseSchedule schedule_;
  const Phase* phase_;
  Rng rng_;
  Scene scene_;
  int step_ = 0;
};

// Answers from the ground truth of the scene currently shown by the env.
class OracleTeacher : public fier::TeacherInterface {
 public:
  OracleTeacher(const SynthEnv& env, int num_goals, double relabel_probability, Rng rng);
  fier::TeacherResponse respond(const fier::QueryPresentation& query) override;

  // The oracle's rule, separated from the env so remote clients can apply
  // it to the scene labels of a presentation.
  static fier::TeacherResponse answer(std::span<const int> attributes, int goal,
                                      int planned_action, bool annotate_only, bool relabel,
                                      int num_goals);

 private:
  const SynthEnv* env_;
  int num_goals_;
  double relabel_probability_;
  Rng rng_;
};

// Rolling sensitivity, specificity, success and query rates over recent
// failures, successes and decisions.
class RollingMetrics {
 public:
  RollingMetrics(int failure_window, int success_window, int decision_window);

  void record(bool novice_correct, bool queried);

  // NaN until the corresponding window has at least one entry.
  double sensitivity() const;
  double specificity() const;
  double novice_success() const;
  double system_success() const;
  double query_rate() const;

 private:
  struct Ring {
    explicit Ring(std::size_t cap) : capacity(cap) {}
    std::size_t capacity;
    std::vector<std::uint8_t> items;
    std::size_t next = 0;
    std::size_t count = 0;
    std::size_t sum = 0;
    void push(std::uint8_t v);
    double mean() const;
  };
  Ring failures_queried_;
  Ring successes_unqueried_;
  Ring decisions_correct_;
  Ring decisions_system_;
  Ring decisions_queried_;
};

struct StepRow {
  std::string phase;
  fier::StepLog log;
};

struct MetricsPoint {
  std::int64_t episode = 0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double novice_success = 0.0;
  double system_success = 0.0;
  double query_rate = 0.0;
};

struct Evaluation {
  std::int64_t episode = 0;
  std::int64_t queries = 0;
  CompositionCounts composition;
  double seen_success = 0.0;
  double unseen_success = 0.0;
};

struct RunHooks {
  // Builds the teacher for the run; the oracle is offered as fallback.
  std::function<std::unique_ptr<fier::TeacherInterface>(fier::TeacherInterface& oracle)>
      make_teacher;
  std::function<void(const StepRow&)> on_step;
  std::function<void(std::int64_t episode, const fier::EpisodeResult&)> on_episode;
  std::function<void(const MetricsPoint&)> on_metrics;
};

struct RunResult {
  std::string run_id;
  std::uint64_t seed = 0;
  std::vector<StepRow> steps;
  DemoDataset dataset;
  std::optional<novice::NoviceModel> model;
  std::vector<MetricsPoint> series;
  std::vector<Evaluation> evaluations;
  std::vector<std::string> warnings;
  std::string config_echo;
};

std::string default_run_id(const ExperimentConfig& config, std::uint64_t seed);

// Success rate of the deterministic novice on freshly drawn scenes.
double evaluate(const novice::NoviceModel& model, const SynthTask& task, const Phase& phase,
                GoalPool pool, int scenes, Rng rng);

RunResult run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                         const RunHooks& hooks = {});

inline constexpr std::string_view kStepsHeader =
    "run_id,seed,phase,episode,step,k,u,gamma,queried,reason,reward,kind,"
    "novice_correct,system_success,goal,action";

std::string format_number(double v);
void write_steps_csv(const RunResult& result, std::ostream& out);
std::string steps_csv_row(const std::string& run_id, std::uint64_t seed, const StepRow& row);
nlohmann::json summary_json(const RunResult& result);

// steps.csv, summary.json, config.txt, dataset.jsonl, novice.json
void write_run(const RunResult& result, const std::string& dir);

}  // namespace askd::simbench
