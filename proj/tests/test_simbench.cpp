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

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "askd/error.hpp"
#include "askd/simbench.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace askd;
using namespace askd::simbench;

namespace {

std::string csv_of(const RunResult& r) {
  std::ostringstream os;
  write_steps_csv(r, os);
  return os.str();
}

ExperimentConfig short_run(int episodes = 80) {
  ExperimentConfig c;
  c.episodes = episodes;
  c.eval_every = 20;
  c.eval_scenes = 40;
  c.passes = 4;
  c.series_every = 10;
  return c;
}

double mean_or_nan(const std::deque<int>& d) {
  if (d.empty()) return std::nan("");
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

}  // namespace

TEST_SUITE("simbench") {

TEST_CASE("scenes have one target at a uniform position") {
  TaskConfig cfg;
  Rng rng(1);
  const SynthTask task(cfg, rng);
  const Phase phase = phase_preset("all");
  const int n = 10000;
  std::vector<int> pos(static_cast<std::size_t>(cfg.candidates), 0);
  int distractors = 0, unseen_distractors = 0, clutter = 0;
  for (int i = 0; i < n; ++i) {
    const Scene s = task.generate_scene(phase, rng, GoalPool::kSeen);
    REQUIRE(std::count(s.attributes.begin(), s.attributes.end(), s.goal) == 1);
    CHECK(s.attributes[static_cast<std::size_t>(s.target)] == s.goal);
    CHECK(task.is_seen(s.goal));
    ++pos[static_cast<std::size_t>(s.target)];
    for (int c = 0; c < cfg.candidates; ++c) {
      if (c == s.target) continue;
      ++distractors;
      const int a = s.attributes[static_cast<std::size_t>(c)];
      clutter += a == kClutter;
      unseen_distractors += a >= cfg.seen_attributes;
    }
  }
  const double p = 1.0 / cfg.candidates;
  const double sd = std::sqrt(n * p * (1.0 - p));
  for (int c : pos) CHECK(std::abs(c - n * p) < 3.0 * sd);
  CHECK(std::abs(static_cast<double>(unseen_distractors) / distractors - cfg.unseen_distractor_rate) < 0.02);
  CHECK(std::abs(static_cast<double>(clutter) / distractors - cfg.clutter_rate) < 0.02);
}

TEST_CASE("goal pools draw from the right attributes") {
  TaskConfig cfg;
  Rng rng(2);
  const SynthTask task(cfg, rng);
  const Phase phase = phase_preset("seen");
  for (int i = 0; i < 500; ++i) {
    CHECK(task.generate_scene(phase, rng, GoalPool::kUnseen).goal >= cfg.seen_attributes);
    CHECK(task.generate_scene(phase, rng).goal < cfg.seen_attributes);
  }
  CHECK_THROWS_AS(task.generate_scene(phase, cfg.attributes, rng), Error);
}

TEST_CASE("noise-free scenes are solved by a prototype probe") {
  TaskConfig cfg;
  cfg.noise = 0.0;
  cfg.clutter_rate = 0.0;  // clutter blocks are random, not prototypes
  Rng rng(3);
  const SynthTask task(cfg, rng);
  for (const char* name : {"all", "shifted_all"}) {
    const Phase phase = phase_preset(name);
    int hits = 0;
    for (int i = 0; i < 2000; ++i) {
      const Scene s = task.generate_scene(phase, rng);
      const auto proto = task.prototype(phase.bank, s.goal);
      int best = 0;
      double best_score = -1e300;
      for (int c = 0; c < cfg.candidates; ++c) {
        const auto b = s.observation.block(c);
        const double d = std::inner_product(b.begin(), b.end(), proto.begin(), 0.0);
        if (d > best_score) {
          best_score = d;
          best = c;
        }
      }
      hits += best == s.target;
    }
    CAPTURE(name);
    CHECK(hits == 2000);
  }
}

TEST_CASE("oracle answers from ground truth") {
  const std::vector<int> attrs{3, kClutter, 9, 1};  // goal 1 at index 3
  const int G = 12;
  auto ok = OracleTeacher::answer(attrs, 1, 3, false, true, G);
  CHECK(ok.verdict == fier::Verdict::kValidate);
  CHECK_FALSE(ok.annotation_action.has_value());
  CHECK_FALSE(ok.relabel_goal.has_value());

  auto distractor = OracleTeacher::answer(attrs, 1, 2, false, true, G);
  CHECK(distractor.verdict == fier::Verdict::kReject);
  CHECK(distractor.annotation_action == 3);
  CHECK(distractor.relabel_goal == 9);

  auto no_relabel = OracleTeacher::answer(attrs, 1, 0, false, false, G);
  CHECK(no_relabel.annotation_action == 3);
  CHECK_FALSE(no_relabel.relabel_goal.has_value());

  auto cl = OracleTeacher::answer(attrs, 1, 1, false, true, G);
  CHECK(cl.verdict == fier::Verdict::kReject);
  CHECK(cl.annotation_action == 3);
  CHECK_FALSE(cl.relabel_goal.has_value());

  auto outside = OracleTeacher::answer(attrs, 1, 2, false, true, 8);  // 9 not in G
  CHECK_FALSE(outside.relabel_goal.has_value());

  auto ann = OracleTeacher::answer(attrs, 1, 3, true, true, G);
  CHECK(ann.verdict == fier::Verdict::kReject);
  CHECK(ann.annotation_action == 3);
  CHECK_FALSE(ann.relabel_goal.has_value());

  CHECK_THROWS_AS(OracleTeacher::answer(attrs, 5, 0, false, true, G), Error);
}

TEST_CASE("phase schedules") {
  const auto s = PhaseSchedule::parse("seen:10, unseen:5,shifted_all");
  REQUIRE(s.phases().size() == 3);
  CHECK(s.at(0).name == "seen");
  CHECK(s.at(9).name == "seen");
  CHECK(s.at(10).name == "unseen");
  CHECK(s.at(14).goals == GoalPool::kUnseen);
  CHECK(s.at(15).name == "shifted_all");
  CHECK(s.at(15).bank == 1);
  CHECK(s.at(15).goals == GoalPool::kAll);
  CHECK(s.at(100000).name == "shifted_all");

  const auto bounded = PhaseSchedule::parse("seen:3,shifted:2");
  CHECK(bounded.at(4).name == "shifted");
  CHECK(bounded.at(50).name == "shifted");  // runs out: stays in the last phase
  CHECK(phase_preset("shifted").goals == GoalPool::kSeen);

  for (const char* bad : {"", "seen,unseen", "seen:0", "seen:x", "seen:-3", "bogus",
                          "shiftedx", "seen:10,,all"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(PhaseSchedule::parse(bad), Error);
  }
  TaskConfig all_seen;
  all_seen.seen_attributes = all_seen.attributes;
  all_seen.phases = "seen:5,unseen";
  CHECK_THROWS_AS(validate(all_seen), Error);
}

TEST_CASE("rolling metrics match a brute-force window") {
  Rng rng(4);
  const int fw = 7, sw = 5, dw = 11;
  RollingMetrics m(fw, sw, dw);
  std::deque<int> f, s, dc, ds, dq;
  auto push = [](std::deque<int>& d, int v, std::size_t cap) {
    d.push_back(v);
    if (d.size() > cap) d.pop_front();
  };
  CHECK(std::isnan(m.sensitivity()));
  CHECK(std::isnan(m.query_rate()));
  for (int i = 0; i < 500; ++i) {
    const bool correct = rng() % 3 != 0;
    const bool queried = rng() % 2 == 0;
    m.record(correct, queried);
    if (correct) push(s, !queried, sw);
    else push(f, queried, fw);
    push(dc, correct, dw);
    push(ds, correct || queried, dw);
    push(dq, queried, dw);
    auto same = [](double a, double b) {
      return (std::isnan(a) && std::isnan(b)) || std::abs(a - b) < 1e-12;
    };
    CHECK(same(m.sensitivity(), mean_or_nan(f)));
    CHECK(same(m.specificity(), mean_or_nan(s)));
    CHECK(same(m.novice_success(), mean_or_nan(dc)));
    CHECK(same(m.system_success(), mean_or_nan(ds)));
    CHECK(same(m.query_rate(), mean_or_nan(dq)));
  }
}

TEST_CASE("csv header is fixed") {
  RunResult empty;
  CHECK(csv_of(empty) ==
        "run_id,seed,phase,episode,step,k,u,gamma,queried,reason,reward,kind,"
        "novice_correct,system_success,goal,action\n");
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_number(std::nan("")) == "nan");
}

TEST_CASE("runs are byte-identical for a seed under every ablation") {
  const char* lists[] = {"none", "no_fier_relabel", "no_fier_validate", "no_pier",
                         "no_sag_imputation", "no_sag_normalization"};
  for (const char* list : lists) {
    ExperimentConfig c = short_run(40);
    c.ablate = Ablations::parse(list);
    const auto a = run_experiment(c, 9);
    const auto b = run_experiment(c, 9);
    CAPTURE(list);
    CHECK(csv_of(a) == csv_of(b));
    CHECK(summary_json(a) == summary_json(b));
  }
  ExperimentConfig c = short_run(40);
  CHECK(csv_of(run_experiment(c, 1)) != csv_of(run_experiment(c, 2)));
}

TEST_CASE("run invariants") {
  ExperimentConfig c = short_run(120);
  const auto r = run_experiment(c, 3);
  REQUIRE(r.steps.size() == 120);
  std::size_t queries = 0, v = 0, an = 0, rl = 0;
  for (const auto& row : r.steps) {
    const auto& s = row.log;
    CHECK(s.system_success == (s.queried || s.novice_correct));
    queries += s.queried;
    v += s.has_validation;
    an += s.has_annotation;
    rl += s.has_relabel;
    if (s.has_relabel) CHECK(s.has_annotation);
  }
  const auto comp = r.dataset.composition_counts();
  CHECK(comp.validation == v);
  CHECK(comp.annotation == an);
  CHECK(comp.relabeled == rl);
  CHECK(comp.validation + comp.annotation == queries);
  CHECK(r.series.size() == 12);
  CHECK(r.evaluations.front().episode == -1);
  CHECK(r.evaluations.back().episode == 119);
  for (std::size_t i = 1; i < r.evaluations.size(); ++i) {
    CHECK(r.evaluations[i].queries >= r.evaluations[i - 1].queries);
  }
  const auto j = summary_json(r);
  CHECK(j["totals"]["queries"] == queries);
  CHECK(j["schema"] == "askd.summary/1");
}

TEST_CASE("without validation and relabels every query is an annotation") {
  ExperimentConfig c = short_run(120);
  c.ablate = Ablations::parse("no_fier_validate,no_fier_relabel");
  const auto r = run_experiment(c, 5);
  const auto comp = r.dataset.composition_counts();
  std::size_t queries = 0;
  for (const auto& row : r.steps) queries += row.log.queried;
  CHECK(queries > 0);
  CHECK(comp.validation == 0);
  CHECK(comp.relabeled == 0);
  CHECK(comp.annotation == queries);
}

TEST_CASE("write_run emits every artifact") {
  ExperimentConfig c = short_run(20);
  const auto r = run_experiment(c, 1);
  const auto dir = testutil::scratch("write_run");
  write_run(r, dir.string());
  for (const char* f : {"steps.csv", "summary.json", "config.txt", "dataset.jsonl", "novice.json"}) {
    CAPTURE(f);
    CHECK(std::filesystem::exists(dir / f));
  }
  CHECK(testutil::slurp(dir / "steps.csv") == csv_of(r));
  CHECK(ExperimentConfig::parse(testutil::slurp(dir / "config.txt")) == c);
}

}  // TEST_SUITE
