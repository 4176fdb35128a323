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

#include "askd/fier.hpp"

#include "askd/error.hpp"

namespace askd::fier {

std::string_view to_string(Verdict v) noexcept {
  return v == Verdict::kValidate ? "validate" : "reject";
}

Verdict verdict_from_string(std::string_view name) {
  if (name == "validate") return Verdict::kValidate;
  if (name == "reject") return Verdict::kReject;
  fail(ErrorCode::kProtocol, "verdict must be 'validate' or 'reject'");
}

void check_response(const TeacherResponse& response, const QueryPresentation& query) {
  if (response.verdict == Verdict::kValidate) {
    if (query.annotate_only) {
      fail(ErrorCode::kProtocol, "this query asks for an annotation, not a verdict");
    }
    if (response.annotation_action) {
      fail(ErrorCode::kProtocol, "validate must not carry annotation_action");
    }
    if (response.relabel_goal) fail(ErrorCode::kProtocol, "validate must not carry relabel_goal");
    return;
  }
  if (!response.annotation_action) fail(ErrorCode::kProtocol, "reject requires annotation_action");
  if (!query.observation.valid_action(*response.annotation_action)) {
    fail(ErrorCode::kProtocol, "annotation_action is not a candidate index");
  }
}

QueryOutcome fier_query(const QueryPresentation& query, TeacherInterface& teacher,
                        int num_goals, const FierOptions& options) {
  const TeacherResponse response = teacher.respond(query);
  check_response(response, query);

  QueryOutcome out;
  if (response.verdict == Verdict::kValidate) {
    out.executed_action = query.planned_action;
    out.reward = Reward::kSuccess;
    out.tuples.push_back(make_demo(query.observation, query.planned_action, query.goal,
                                   DemoKind::kValidation));
    return out;
  }

  const int annotation = *response.annotation_action;
  out.executed_action = annotation;
  // Without the validation modality the teacher never judges the plan, so
  // the gate's label comes from comparing plan and annotation.
  out.reward = (query.annotate_only && annotation == query.planned_action) ? Reward::kSuccess
                                                                          : Reward::kFailure;
  out.tuples.push_back(
      make_demo(query.observation, annotation, query.goal, DemoKind::kAnnotation));
  if (options.relabel && response.relabel_goal && *response.relabel_goal >= 0 &&
      *response.relabel_goal < num_goals) {
    out.tuples.push_back(make_demo(query.observation, query.planned_action,
                                   *response.relabel_goal, DemoKind::kRelabeled));
  }
  return out;
}

std::string StepLog::kind_label() const {
  if (has_validation) return "validation";
  if (has_annotation) return has_relabel ? "annotation+relabeled" : "annotation";
  return "none";
}

EpisodeResult run_episode(Environment& env, const novice::NoviceModel& model,
                          TeacherInterface& teacher, const sag::GatingConfig& gating,
                          const FierOptions& options, std::vector<FeedbackRecord>& history,
                          std::int64_t episode, EpisodeStreams streams) {
  EpisodeResult result;
  const std::int64_t k = model.update_count();
  bool done = false;
  for (std::int64_t t = 0; !done; ++t) {
    const Observation& obs = env.observation();
    const int goal = env.goal();
    const novice::Prediction pred = model.predict(obs, goal, streams.dropout);
    const double gamma = sag::sag_threshold(history, gating, k, streams.imputation);
    const sag::GatingDecision decision = sag::decide(pred.u, gamma, gating.p_rand, streams.gating);

    StepLog log;
    log.episode = episode;
    log.step = t;
    log.k = k;
    log.u = pred.u;
    log.gamma = gamma;
    log.queried = decision.queried;
    log.reason = decision.reason;
    log.goal = goal;
    log.planned_action = pred.action;
    log.novice_correct = env.achieves_goal(pred.action);

    int executed = pred.action;
    if (decision.queried) {
      QueryPresentation query{obs,       goal,    pred.action,          pred.u,
                              gamma,     episode, t,                    !options.validation,
                              env.candidate_labels(), env.goal_label()};
      QueryOutcome outcome = fier_query(query, teacher, model.config().num_goals, options);
      executed = outcome.executed_action;
      log.reward = outcome.reward;
      for (auto& tuple : outcome.tuples) {
        log.has_validation |= tuple.kind == DemoKind::kValidation;
        log.has_annotation |= tuple.kind == DemoKind::kAnnotation;
        log.has_relabel |= tuple.kind == DemoKind::kRelabeled;
        const bool judged =
            tuple.kind == DemoKind::kValidation || tuple.kind == DemoKind::kAnnotation;
        result.tuple_records.push_back({pred.u, tuple.reward, k, judged, episode, t});
        result.trajectory.push_back(std::move(tuple));
      }
    }
    log.action = executed;
    log.system_success = decision.queried || log.novice_correct;

    const FeedbackRecord record{pred.u, log.reward, k, decision.queried, episode, t};
    history.push_back(record);
    result.step_records.push_back(record);
    result.steps.push_back(log);

    try {
      done = env.act(executed);
    } catch (const std::exception&) {
      result.aborted = true;
      break;
    }
  }
  return result;
}

}  // namespace askd::fier
