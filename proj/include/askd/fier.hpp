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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "askd/core.hpp"
#include "askd/novice.hpp"
#include "askd/rng.hpp"
#include "askd/sag.hpp"

namespace askd::fier {

// What the teacher sees when the novice asks for help.
struct QueryPresentation {
  Observation observation;
  int goal = 0;
  int planned_action = 0;
  double u = 0.0;
  double gamma = sag::kNeverQuery;
  std::int64_t episode = 0;
  std::int64_t step = 0;
  // Annotation-only queries hide the verdict choice: the teacher always
  // answers with a demonstration.
  bool annotate_only = false;
  // Human-readable scene: one label per candidate plus the goal command.
  std::vector<std::string> candidate_labels;
  std::string goal_label;
};

enum class Verdict { kValidate, kReject };

std::string_view to_string(Verdict v) noexcept;
Verdict verdict_from_string(std::string_view name);

struct TeacherResponse {
  Verdict verdict = Verdict::kValidate;
  std::optional<int> relabel_goal;
  std::optional<int> annotation_action;
};

// Wire-level validity: validate carries nothing else, reject carries an
// annotation that indexes a candidate. Throws kProtocol with the reason.
void check_response(const TeacherResponse& response, const QueryPresentation& query);

class TeacherInterface {
 public:
  virtual ~TeacherInterface() = default;
  virtual TeacherResponse respond(const QueryPresentation& query) = 0;
};

struct FierOptions {
  bool validation = true;  // off: every query is answered by annotation
  bool relabel = true;
};

struct QueryOutcome {
  int executed_action = 0;
  std::vector<DemoTuple> tuples;
  // Feedback for the gate: +1 the plan was right, -1 it was wrong.
  Reward reward = Reward::kNeutral;
};

// Converts one teacher round-trip into validation, annotation and relabeled
// demonstrations. A relabel goal outside [0, num_goals) is dropped.
QueryOutcome fier_query(const QueryPresentation& query, TeacherInterface& teacher,
                        int num_goals, const FierOptions& options);

// Environment seen by the episode loop.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual void reset() = 0;
  virtual const Observation& observation() const = 0;
  virtual int goal() const = 0;
  // Executes the action; returns true when the episode is over.
  virtual bool act(int action) = 0;
  // Ground truth for bookkeeping; simulation only.
  virtual bool achieves_goal(int action) const = 0;
  virtual std::vector<std::string> candidate_labels() const { return {}; }
  virtual std::string goal_label() const { return std::to_string(goal()); }
};

struct StepLog {
  std::int64_t episode = 0;
  std::int64_t step = 0;
  std::int64_t k = 0;
  double u = 0.0;
  double gamma = sag::kNeverQuery;
  bool queried = false;
  sag::QueryReason reason = sag::QueryReason::kNone;
  Reward reward = Reward::kNeutral;
  bool has_validation = false;
  bool has_annotation = false;
  bool has_relabel = false;
  bool novice_correct = false;
  bool system_success = false;
  int goal = 0;
  int planned_action = 0;
  int action = 0;  // executed

  // Column value for the tuple kinds this step produced.
  std::string kind_label() const;
};

struct EpisodeStreams {
  Rng& gating;
  Rng& imputation;
  Rng& dropout;
};

struct EpisodeResult {
  std::vector<DemoTuple> trajectory;
  std::vector<FeedbackRecord> tuple_records;  // aligned with trajectory
  std::vector<FeedbackRecord> step_records;   // one per decision
  std::vector<StepLog> steps;
  bool aborted = false;
};

// Runs one episode: predict, gate, query through FIER when gated, act.
// Every decision's record is appended to `history` as it happens so later
// steps of the same episode see it.
EpisodeResult run_episode(Environment& env, const novice::NoviceModel& model,
                          TeacherInterface& teacher, const sag::GatingConfig& gating,
                          const FierOptions& options, std::vector<FeedbackRecord>& history,
                          std::int64_t episode, EpisodeStreams streams);

}  // namespace askd::fier
