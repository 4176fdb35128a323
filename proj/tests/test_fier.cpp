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

#include <functional>
#include <limits>

#include "askd/error.hpp"
#include "askd/fier.hpp"
#include "askd/simbench.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace askd;
using namespace askd::fier;

namespace {

class ScriptedTeacher : public TeacherInterface {
 public:
  explicit ScriptedTeacher(std::function<TeacherResponse(const QueryPresentation&)> f)
      : f_(std::move(f)) {}
  TeacherResponse respond(const QueryPresentation& q) override {
    ++calls;
    return f_(q);
  }
  int calls = 0;

 private:
  std::function<TeacherResponse(const QueryPresentation&)> f_;
};

// Fixed scenes, target candidate 2, `length` steps per episode.
class FakeEnv : public Environment {
 public:
  explicit FakeEnv(int length, int dim) : length_(length), obs_(4, dim) {}
  void reset() override { t_ = 0; }
  const Observation& observation() const override { return obs_; }
  int goal() const override { return 1; }
  bool act(int action) override {
    if (!obs_.valid_action(action)) fail(ErrorCode::kInvalidArgument, "bad action");
    if (fail_at_ == t_) fail(ErrorCode::kInternal, "actuator fault");
    return ++t_ >= length_;
  }
  bool achieves_goal(int action) const override { return action == 2; }
  int fail_at_ = -1;

 private:
  int length_;
  int t_ = 0;
  Observation obs_;
};

QueryPresentation query(int planned = 1, bool annotate_only = false) {
  QueryPresentation q;
  q.observation = Observation(4, 2);
  q.goal = 3;
  q.planned_action = planned;
  q.annotate_only = annotate_only;
  return q;
}

TeacherResponse validate() { return {Verdict::kValidate, std::nullopt, std::nullopt}; }
TeacherResponse reject(int annotation, std::optional<int> relabel = std::nullopt) {
  return {Verdict::kReject, relabel, annotation};
}

novice::NoviceModel flat_model(int dim) {
  novice::NoviceConfig cfg;
  cfg.feature_dim = dim;
  cfg.num_goals = 5;
  Rng init(0);
  novice::NoviceModel m(cfg, init);
  for (auto& p : m.parameters()) p = 0.0;  // uniform output, u = 0.75, plan 0
  return m;
}

}  // namespace

TEST_SUITE("fier") {

TEST_CASE("validate yields one validation tuple") {
  ScriptedTeacher t([](const QueryPresentation&) { return validate(); });
  const auto out = fier_query(query(1), t, 5, {});
  CHECK(out.executed_action == 1);
  CHECK(out.reward == Reward::kSuccess);
  REQUIRE(out.tuples.size() == 1);
  CHECK(out.tuples[0].kind == DemoKind::kValidation);
  CHECK(out.tuples[0].reward == Reward::kSuccess);
  CHECK(out.tuples[0].goal == 3);
  CHECK(out.tuples[0].action == 1);
}

TEST_CASE("reject without relabel yields one annotation") {
  ScriptedTeacher t([](const QueryPresentation&) { return reject(0); });
  const auto out = fier_query(query(1), t, 5, {});
  CHECK(out.executed_action == 0);
  CHECK(out.reward == Reward::kFailure);
  REQUIRE(out.tuples.size() == 1);
  CHECK(out.tuples[0].kind == DemoKind::kAnnotation);
  CHECK(out.tuples[0].action == 0);
  CHECK(out.tuples[0].goal == 3);
}

TEST_CASE("reject with relabel yields annotation and relabeled plan") {
  ScriptedTeacher t([](const QueryPresentation&) { return reject(0, 4); });
  const auto out = fier_query(query(1), t, 5, {});
  REQUIRE(out.tuples.size() == 2);
  CHECK(out.tuples[0].kind == DemoKind::kAnnotation);
  CHECK(out.tuples[0].action == 0);
  CHECK(out.tuples[0].goal == 3);
  CHECK(out.tuples[1].kind == DemoKind::kRelabeled);
  CHECK(out.tuples[1].action == 1);  // the novice's plan
  CHECK(out.tuples[1].goal == 4);
  CHECK(out.tuples[1].reward == Reward::kNeutral);
  CHECK(out.executed_action == 0);  // rejected plans never run
}

TEST_CASE("relabel outside the goal set or switched off is dropped") {
  ScriptedTeacher bad([](const QueryPresentation&) { return reject(0, 5); });
  CHECK(fier_query(query(1), bad, 5, {}).tuples.size() == 1);
  ScriptedTeacher neg([](const QueryPresentation&) { return reject(0, -1); });
  CHECK(fier_query(query(1), neg, 5, {}).tuples.size() == 1);
  ScriptedTeacher ok([](const QueryPresentation&) { return reject(0, 2); });
  CHECK(fier_query(query(1), ok, 5, {true, false}).tuples.size() == 1);
}

TEST_CASE("malformed responses are protocol errors") {
  auto expect_protocol = [](TeacherResponse r, QueryPresentation q) {
    try {
      check_response(r, q);
      FAIL("expected a protocol error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kProtocol);
    }
  };
  expect_protocol({Verdict::kValidate, std::nullopt, 1}, query());
  expect_protocol({Verdict::kValidate, 2, std::nullopt}, query());
  expect_protocol({Verdict::kReject, std::nullopt, std::nullopt}, query());
  expect_protocol(reject(4), query());
  expect_protocol(reject(-1), query());
  expect_protocol(validate(), query(1, true));
  CHECK_NOTHROW(check_response(reject(3, 2), query()));

  ScriptedTeacher t([](const QueryPresentation&) { return reject(9); });
  CHECK_THROWS_AS(fier_query(query(), t, 5, {}), Error);
}

TEST_CASE("annotate-only queries produce annotations") {
  ScriptedTeacher same([](const QueryPresentation& q) { return reject(q.planned_action); });
  const auto a = fier_query(query(2, true), same, 5, {false, false});
  REQUIRE(a.tuples.size() == 1);
  CHECK(a.tuples[0].kind == DemoKind::kAnnotation);
  CHECK(a.reward == Reward::kSuccess);  // plan agreed with the annotation
  ScriptedTeacher other([](const QueryPresentation&) { return reject(0, 1); });
  const auto b = fier_query(query(2, true), other, 5, {false, false});
  REQUIRE(b.tuples.size() == 1);
  CHECK(b.tuples[0].kind == DemoKind::kAnnotation);
  CHECK(b.reward == Reward::kFailure);
}

TEST_CASE("autonomous episode records every step and no tuples") {
  FakeEnv env(5, 2);
  env.reset();
  const auto model = flat_model(2);
  ScriptedTeacher t([](const QueryPresentation&) { return validate(); });
  // Sensitivity without imputation and no known failures: gamma = +inf.
  sag::GatingConfig g;
  g.p_rand = 0.0;
  g.impute = false;
  std::vector<FeedbackRecord> history;
  Rng a(1), b(2), c(3);
  const auto res = run_episode(env, model, t, g, {}, history, 0, {a, b, c});
  CHECK(res.trajectory.empty());
  CHECK(res.step_records.size() == 5);
  CHECK(history.size() == 5);
  CHECK(t.calls == 0);
  for (const auto& r : res.step_records) {
    CHECK_FALSE(r.queried);
    CHECK(r.r == Reward::kNeutral);
  }
  for (const auto& s : res.steps) {
    CHECK(s.gamma == std::numeric_limits<double>::infinity());
    CHECK(s.system_success == s.novice_correct);
  }
}

TEST_CASE("fully supervised episode queries every step") {
  FakeEnv env(6, 2);
  env.reset();
  const auto model = flat_model(2);
  ScriptedTeacher t([](const QueryPresentation& q) { return reject(2, q.planned_action == 2 ? std::nullopt : std::optional<int>(0)); });
  sag::GatingConfig g{sag::GatingMode::kSpecificity, 0.5, 0.0, 15, 1, false, false};
  std::vector<FeedbackRecord> history;
  Rng a(1), b(2), c(3);
  const auto res = run_episode(env, model, t, g, {}, history, 3, {a, b, c});
  CHECK(t.calls == 6);
  std::size_t validations = 0, annotations = 0, relabels = 0;
  for (const auto& tup : res.trajectory) {
    validations += tup.kind == DemoKind::kValidation;
    annotations += tup.kind == DemoKind::kAnnotation;
    relabels += tup.kind == DemoKind::kRelabeled;
    if (tup.kind == DemoKind::kRelabeled) {
      CHECK(tup.reward == Reward::kNeutral);
      CHECK(tup.action == 0);  // plan of the flat model
    }
  }
  CHECK(res.trajectory.size() == validations + annotations + relabels);
  CHECK(validations + annotations == 6);
  CHECK(relabels == 6);
  CHECK(res.tuple_records.size() == res.trajectory.size());
  for (const auto& s : res.steps) {
    CHECK(s.queried);
    CHECK(s.action == 2);
    CHECK(s.system_success);
    CHECK(s.episode == 3);
  }
}

TEST_CASE("env failure aborts the episode and keeps partial records") {
  FakeEnv env(5, 2);
  env.reset();
  env.fail_at_ = 2;
  const auto model = flat_model(2);
  ScriptedTeacher t([](const QueryPresentation&) { return validate(); });
  sag::GatingConfig g;
  g.p_rand = 0.0;
  std::vector<FeedbackRecord> history;
  Rng a(1), b(2), c(3);
  const auto res = run_episode(env, model, t, g, {}, history, 0, {a, b, c});
  CHECK(res.aborted);
  CHECK(res.step_records.size() == 3);
}

TEST_CASE("oracle episodes are reproducible and keep the identities") {
  ExperimentConfig cfg;
  cfg.task.steps_per_episode = 3;
  auto run = [&](std::uint64_t seed) {
    RngStreams streams(seed);
    Rng task_rng = streams.stream("task");
    simbench::SynthTask task(cfg.task, task_rng);
    simbench::SynthEnv env(task, simbench::PhaseSchedule::parse("seen"), streams.stream("env"));
    Rng init = streams.stream("init");
    novice::NoviceModel model(cfg.novice_config(), init);
    simbench::OracleTeacher oracle(env, task.num_goals(), 1.0, streams.stream("teacher"));
    Rng g = streams.stream("gating"), im = streams.stream("imputation"),
        dr = streams.stream("dropout");
    std::vector<FeedbackRecord> history;
    std::vector<EpisodeResult> out;
    sag::GatingConfig gating = cfg.gating;
    gating.n_min = 3;
    for (int ep = 0; ep < 30; ++ep) {
      env.begin_episode(ep);
      env.reset();
      out.push_back(run_episode(env, model, oracle, gating, {}, history, ep, {g, im, dr}));
    }
    return out;
  };
  const auto a = run(4), b = run(4);
  REQUIRE(a.size() == b.size());
  std::size_t queries = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].trajectory == b[i].trajectory);
    CHECK(a[i].step_records == b[i].step_records);
    std::size_t v = 0, an = 0, rl = 0, q = 0;
    for (const auto& t : a[i].trajectory) {
      v += t.kind == DemoKind::kValidation;
      an += t.kind == DemoKind::kAnnotation;
      rl += t.kind == DemoKind::kRelabeled;
    }
    for (const auto& s : a[i].steps) {
      q += s.queried;
      CHECK(s.system_success == (s.queried || s.novice_correct));
      if (!s.queried) CHECK(s.reward == Reward::kNeutral);
    }
    CHECK(q == v + an);
    CHECK(rl <= an);
    queries += q;
  }
  CHECK(queries > 0);
}

}  // TEST_SUITE
