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

#include "askd/simbench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "askd/error.hpp"

namespace askd::simbench {

namespace {

constexpr std::string_view kAttributeNames[] = {
    "red", "green", "blue", "yellow", "brown", "gray",
    "cyan", "orange", "purple", "pink", "white", "black"};

int uniform_int(Rng& rng, int lo, int hi) {  // inclusive
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

void unit_vector(std::span<double> out, double scale, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& v : out) {
      v = normal(rng);
      norm += v * v;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (double& v : out) v *= scale / norm;
}

// Uniform attribute in [lo, hi) other than `skip`; -2 when none exists.
int draw_other(Rng& rng, int lo, int hi, int skip) {
  const int n = hi - lo - ((skip >= lo && skip < hi) ? 1 : 0);
  if (n <= 0) return -2;
  int a = lo + uniform_int(rng, 0, n - 1);
  if (skip >= lo && skip < hi && a >= skip) ++a;
  return a;
}

}  // namespace

void validate(const TaskConfig& c) {
  if (c.attributes < 2) fail(ErrorCode::kConfig, "task.attributes must be >= 2");
  if (c.seen_attributes < 1 || c.seen_attributes > c.attributes) {
    fail(ErrorCode::kConfig, "task.seen_attributes must lie in [1, task.attributes]");
  }
  if (c.candidates < 2) fail(ErrorCode::kConfig, "task.candidates must be >= 2");
  if (c.feature_dim < 1) fail(ErrorCode::kConfig, "task.feature_dim must be >= 1");
  if (!(c.noise >= 0.0)) fail(ErrorCode::kConfig, "task.noise must be >= 0");
  if (!(c.prototype_scale > 0.0)) fail(ErrorCode::kConfig, "task.prototype_scale must be > 0");
  if (!(c.unseen_distractor_rate >= 0.0 && c.clutter_rate >= 0.0 &&
        c.unseen_distractor_rate + c.clutter_rate <= 1.0)) {
    fail(ErrorCode::kConfig,
         "task.unseen_distractor_rate and task.clutter_rate must be >= 0 with sum <= 1");
  }
  if (c.steps_per_episode < 1) fail(ErrorCode::kConfig, "task.steps_per_episode must be >= 1");
  const PhaseSchedule schedule = PhaseSchedule::parse(c.phases);
  for (const Phase& p : schedule.phases()) {
    if (p.goals == GoalPool::kUnseen && c.seen_attributes == c.attributes) {
      fail(ErrorCode::kConfig, "phase '" + p.name + "' needs unseen attributes");
    }
  }
}

Phase phase_preset(std::string_view name) {
  Phase p;
  p.name = std::string(name);
  std::string_view base = name;
  if (base.starts_with("shifted")) {
    p.bank = 1;
    base.remove_prefix(7);
    if (base.empty()) base = "seen";
    else if (base.front() == '_') base.remove_prefix(1);
    else fail(ErrorCode::kConfig, "unknown phase '" + std::string(name) + "'");
  }
  if (base == "seen") p.goals = GoalPool::kSeen;
  else if (base == "unseen") p.goals = GoalPool::kUnseen;
  else if (base == "all") p.goals = GoalPool::kAll;
  else fail(ErrorCode::kConfig, "unknown phase '" + std::string(name) + "'");
  return p;
}

PhaseSchedule::PhaseSchedule(std::vector<Phase> phases) : phases_(std::move(phases)) {
  if (phases_.empty()) fail(ErrorCode::kConfig, "phase schedule is empty");
  for (std::size_t i = 0; i + 1 < phases_.size(); ++i) {
    if (phases_[i].episodes <= 0) {
      fail(ErrorCode::kConfig, "only the last phase may omit its episode count");
    }
  }
}

PhaseSchedule PhaseSchedule::parse(std::string_view text) {
  std::vector<Phase> phases;
  while (true) {
    const auto comma = text.find(',');
    std::string_view item = text.substr(0, comma);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    const auto colon = item.find(':');
    Phase p = phase_preset(item.substr(0, colon));
    if (colon != std::string_view::npos) {
      const std::string_view num = item.substr(colon + 1);
      std::int64_t n = 0;
      const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), n);
      if (ec != std::errc() || ptr != num.data() + num.size() || n <= 0) {
        fail(ErrorCode::kConfig, "bad phase length in '" + std::string(item) + "'");
      }
      p.episodes = n;
    }
    phases.push_back(std::move(p));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return PhaseSchedule(std::move(phases));
}

const Phase& PhaseSchedule::at(std::int64_t episode) const {
  for (const Phase& p : phases_) {
    if (p.episodes < 0 || episode < p.episodes) return p;
    episode -= p.episodes;
  }
  return phases_.back();  // the schedule runs out: stay in the last phase
}

SynthTask::SynthTask(const TaskConfig& config, Rng& rng) : config_(config) {
  validate(config_);
  for (auto& bank : banks_) {
    bank.assign(config_.attributes, std::vector<double>(config_.feature_dim));
    for (auto& proto : bank) unit_vector(proto, config_.prototype_scale, rng);
  }
}

std::span<const double> SynthTask::prototype(int bank, int attribute) const {
  if (bank < 0 || bank > 1 || attribute < 0 || attribute >= config_.attributes) {
    fail(ErrorCode::kInvalidArgument, "prototype index out of range");
  }
  return banks_[bank][attribute];
}

std::string attribute_name(int attribute) {
  if (attribute == kClutter) return "clutter";
  if (attribute >= 0 && attribute < static_cast<int>(std::size(kAttributeNames))) {
    return std::string(kAttributeNames[attribute]);
  }
  return "attr" + std::to_string(attribute);
}

Scene SynthTask::generate_scene(const Phase& phase, Rng& rng,
                                std::optional<GoalPool> pool) const {
  int goal = 0;
  switch (pool.value_or(phase.goals)) {
    case GoalPool::kSeen: goal = uniform_int(rng, 0, config_.seen_attributes - 1); break;
    case GoalPool::kUnseen:
      if (config_.seen_attributes >= config_.attributes) {
        fail(ErrorCode::kConfig, "no unseen attributes configured");
      }
      goal = uniform_int(rng, config_.seen_attributes, config_.attributes - 1);
      break;
    case GoalPool::kAll: goal = uniform_int(rng, 0, config_.attributes - 1); break;
  }
  return generate_scene(phase, goal, rng);
}

Scene SynthTask::generate_scene(const Phase& phase, int goal, Rng& rng) const {
  if (goal < 0 || goal >= config_.attributes) fail(ErrorCode::kInvalidArgument, "goal out of range");
  const int C = config_.candidates;
  const int S = config_.seen_attributes;
  const int A = config_.attributes;
  Scene s;
  s.goal = goal;
  s.target = uniform_int(rng, 0, C - 1);
  s.attributes.assign(C, goal);
  for (int c = 0; c < C; ++c) {
    if (c == s.target) continue;
    const double r = uniform01(rng);
    int a;
    if (r < config_.clutter_rate) {
      a = kClutter;
    } else if (r < config_.clutter_rate + config_.unseen_distractor_rate) {
      a = draw_other(rng, S, A, goal);
      if (a == -2) a = draw_other(rng, 0, S, goal);
    } else {
      a = draw_other(rng, 0, S, goal);
      if (a == -2) a = draw_other(rng, S, A, goal);
    }
    s.attributes[c] = a;
  }

  s.observation = Observation(C, config_.feature_dim);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int c = 0; c < C; ++c) {
    auto block = s.observation.block(c);
    if (s.attributes[c] == kClutter) {
      unit_vector(block, config_.prototype_scale, rng);
    } else {
      const auto proto = prototype(phase.bank, s.attributes[c]);
      std::copy(proto.begin(), proto.end(), block.begin());
    }
    for (double& v : block) v += config_.noise * noise(rng);
  }
  return s;
}

SynthEnv::SynthEnv(const SynthTask& task, PhaseSchedule schedule, Rng rng)
    : task_(&task), schedule_(std::move(schedule)), rng_(rng) {
  phase_ = &schedule_.at(0);
  reset();
}

void SynthEnv::begin_episode(std::int64_t episode) { phase_ = &schedule_.at(episode); }

void SynthEnv::reset() {
  step_ = 0;
  scene_ = task_->generate_scene(*phase_, rng_);
}

bool SynthEnv::act(int action) {
  if (!scene_.observation.valid_action(action)) {
    fail(ErrorCode::kInvalidArgument, "action is not a candidate index");
  }
  if (++step_ >= task_->config().steps_per_episode) return true;
  // Sequential picks: a new scene under the same command.
  scene_ = task_->generate_scene(*phase_, scene_.goal, rng_);
  return false;
}

bool SynthEnv::achieves_goal(int action) const {
  return scene_.observation.valid_action(action) && scene_.attributes[action] == scene_.goal;
}

std::vector<std::string> SynthEnv::candidate_labels() const {
  std::vector<std::string> out;
  out.reserve(scene_.attributes.size());
  for (int a : scene_.attributes) out.push_back(task_->attribute_name(a));
  return out;
}

std::string SynthEnv::goal_label() const {
  return "pick the " + task_->attribute_name(scene_.goal) + " block";
}

OracleTeacher::OracleTeacher(const SynthEnv& env, int num_goals, double relabel_probability,
                             Rng rng)
    : env_(&env), num_goals_(num_goals), relabel_probability_(relabel_probability), rng_(rng) {}

fier::TeacherResponse OracleTeacher::respond(const fier::QueryPresentation& query) {
  const bool relabel = uniform01(rng_) < relabel_probability_;
  return answer(env_->scene().attributes, query.goal, query.planned_action, query.annotate_only,
                relabel, num_goals_);
}

fier::TeacherResponse OracleTeacher::answer(std::span<const int> attributes, int goal,
                                            int planned_action, bool annotate_only, bool relabel,
                                            int num_goals) {
  const auto it = std::find(attributes.begin(), attributes.end(), goal);
  if (it == attributes.end()) fail(ErrorCode::kInvalidArgument, "goal not present in scene");
  const int target = static_cast<int>(it - attributes.begin());

  fier::TeacherResponse r;
  if (!annotate_only && planned_action == target) return r;
  r.verdict = fier::Verdict::kReject;
  r.annotation_action = target;
  if (!annotate_only && relabel && planned_action >= 0 &&
      planned_action < static_cast<int>(attributes.size())) {
    const int picked = attributes[planned_action];
    if (picked >= 0 && picked < num_goals) r.relabel_goal = picked;
  }
  return r;
}

void RollingMetrics::Ring::push(std::uint8_t v) {
  if (capacity == 0) return;
  if (items.size() < capacity) {
    items.push_back(v);
  } else {
    sum -= items[next];
    items[next] = v;
  }
  next = (next + 1) % capacity;
  sum += v;
  count = items.size();
}

double RollingMetrics::Ring::mean() const {
  if (count == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(sum) / static_cast<double>(count);
}

RollingMetrics::RollingMetrics(int failure_window, int success_window, int decision_window)
    : failures_queried_(static_cast<std::size_t>(std::max(failure_window, 0))),
      successes_unqueried_(static_cast<std::size_t>(std::max(success_window, 0))),
      decisions_correct_(static_cast<std::size_t>(std::max(decision_window, 0))),
      decisions_system_(static_cast<std::size_t>(std::max(decision_window, 0))),
      decisions_queried_(static_cast<std::size_t>(std::max(decision_window, 0))) {}

void RollingMetrics::record(bool novice_correct, bool queried) {
  if (novice_correct) {
    successes_unqueried_.push(!queried);
  } else {
    failures_queried_.push(queried);
  }
  decisions_correct_.push(novice_correct);
  decisions_system_.push(novice_correct || queried);
  decisions_queried_.push(queried);
}

double RollingMetrics::sensitivity() const { return failures_queried_.mean(); }
double RollingMetrics::specificity() const { return successes_unqueried_.mean(); }
double RollingMetrics::novice_success() const { return decisions_correct_.mean(); }
double RollingMetrics::system_success() const { return decisions_system_.mean(); }
double RollingMetrics::query_rate() const { return decisions_queried_.mean(); }

std::string default_run_id(const ExperimentConfig& config, std::uint64_t seed) {
  const std::string base =
      config.run_id.empty() ? std::string(sag::to_string(config.gating.mode)) : config.run_id;
  return base + "_seed" + std::to_string(seed);
}

double evaluate(const novice::NoviceModel& model, const SynthTask& task, const Phase& phase,
                GoalPool pool, int scenes, Rng rng) {
  if (scenes <= 0) return std::numeric_limits<double>::quiet_NaN();
  int hits = 0;
  for (int i = 0; i < scenes; ++i) {
    const Scene s = task.generate_scene(phase, rng, pool);
    const int a = model.act(s.observation, s.goal);
    hits += s.attributes[a] == s.goal;
  }
  return static_cast<double>(hits) / scenes;
}

RunResult run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                         const RunHooks& hooks) {
  RunResult result;
  result.warnings = config.validate();
  result.run_id = default_run_id(config, seed);
  result.seed = seed;
  result.config_echo = config.echo();

  const RngStreams streams(seed);
  Rng task_rng = streams.stream("task");
  Rng init_rng = streams.stream("init");
  Rng gating_rng = streams.stream("gating");
  Rng imputation_rng = streams.stream("imputation");
  Rng dropout_rng = streams.stream("dropout");
  Rng sampling_rng = streams.stream("sampling");
  const Rng eval_rng = streams.stream("eval");

  const SynthTask task(config.task, task_rng);
  SynthEnv env(task, PhaseSchedule::parse(config.task.phases), streams.stream("env"));
  novice::NoviceModel model(config.novice_config(), init_rng);
  OracleTeacher oracle(env, task.num_goals(), config.relabel_probability,
                       streams.stream("teacher"));
  std::unique_ptr<fier::TeacherInterface> custom;
  if (hooks.make_teacher) custom = hooks.make_teacher(oracle);
  fier::TeacherInterface& teacher = custom ? *custom : oracle;

  const sag::GatingConfig gating = config.effective_gating();
  const pier::PierConfig pier_config = config.effective_pier();
  const fier::FierOptions options{!config.ablate.no_fier_validate,
                                  !config.ablate.no_fier_relabel};
  const novice::UpdateOptions update{config.grad_steps, config.batch_size,
                                     config.learning_rate};

  std::vector<FeedbackRecord> history;
  RollingMetrics metrics(config.sensitivity_window, config.specificity_window,
                         config.episode_window);
  std::int64_t queries = 0;
  std::int64_t next_eval = 0;
  int since_update = 0;

  auto checkpoint = [&](std::int64_t episode) {
    const Phase& phase = env.phase();
    Evaluation e;
    e.episode = episode;
    e.queries = queries;
    e.composition = result.dataset.composition_counts();
    e.seen_success = evaluate(model, task, phase, GoalPool::kSeen, config.eval_scenes, eval_rng);
    e.unseen_success = task.config().seen_attributes < task.num_goals()
                           ? evaluate(model, task, phase, GoalPool::kUnseen,
                                      config.eval_scenes, eval_rng)
                           : std::numeric_limits<double>::quiet_NaN();
    result.evaluations.push_back(e);
  };

  if (config.eval_every > 0) {
    checkpoint(-1);
    next_eval = config.eval_every;
  }

  for (std::int64_t ep = 0; ep < config.episodes; ++ep) {
    env.begin_episode(ep);
    env.reset();
    const std::string& phase_name = env.phase().name;
    const fier::EpisodeResult er =
        fier::run_episode(env, model, teacher, gating, options, history, ep,
                          {gating_rng, imputation_rng, dropout_rng});
    result.dataset.append_trajectory(er.trajectory, er.tuple_records);
    for (const fier::StepLog& log : er.steps) {
      metrics.record(log.novice_correct, log.queried);
      queries += log.queried;
      result.steps.push_back({phase_name, log});
      if (hooks.on_step) hooks.on_step(result.steps.back());
    }
    if (hooks.on_episode) hooks.on_episode(ep, er);

    since_update += static_cast<int>(er.steps.size());
    if (since_update >= config.update_every && !result.dataset.empty()) {
      const pier::PriorityTable table =
          pier::build_table(result.dataset, model.update_count(), pier_config);
      model.update(result.dataset, table, update, sampling_rng, dropout_rng);
      since_update = 0;
    }

    if (config.eval_every > 0 && queries >= next_eval) {
      checkpoint(ep);
      while (next_eval <= queries) next_eval += config.eval_every;
    }
    if (config.series_every > 0 && (ep + 1) % config.series_every == 0) {
      const MetricsPoint p{ep,
                           metrics.sensitivity(),
                           metrics.specificity(),
                           metrics.novice_success(),
                           metrics.system_success(),
                           metrics.query_rate()};
      result.series.push_back(p);
      if (hooks.on_metrics) hooks.on_metrics(p);
    }
  }
  if (result.evaluations.empty() || result.evaluations.back().episode != config.episodes - 1) {
    checkpoint(config.episodes - 1);
  }
  result.model.emplace(std::move(model));
  return result;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string steps_csv_row(const std::string& run_id, std::uint64_t seed, const StepRow& row) {
  const fier::StepLog& s = row.log;
  std::string out;
  out.reserve(128);
  auto col = [&out](std::string_view v) {
    out += v;
    out += ',';
  };
  col(run_id);
  col(std::to_string(seed));
  col(row.phase);
  col(std::to_string(s.episode));
  col(std::to_string(s.step));
  col(std::to_string(s.k));
  col(format_number(s.u));
  col(format_number(s.gamma));
  col(s.queried ? "1" : "0");
  col(sag::to_string(s.reason));
  col(std::to_string(to_int(s.reward)));
  col(s.kind_label());
  col(s.novice_correct ? "1" : "0");
  col(s.system_success ? "1" : "0");
  col(std::to_string(s.goal));
  out += std::to_string(s.action);
  return out;
}

void write_steps_csv(const RunResult& result, std::ostream& out) {
  out << kStepsHeader << '\n';
  for (const StepRow& row : result.steps) {
    out << steps_csv_row(result.run_id, result.seed, row) << '\n';
  }
}

namespace {

nlohmann::json composition_json(const CompositionCounts& c) {
  return {{"validation", c.validation},
          {"annotation", c.annotation},
          {"relabeled", c.relabeled},
          {"seed", c.seed},
          {"total", c.total()}};
}

// NaN becomes null.
nlohmann::json number(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

nlohmann::json summary_json(const RunResult& result) {
  std::int64_t queries = 0, active = 0, random = 0, correct = 0, system = 0;
  std::int64_t failures = 0, failures_queried = 0, successes = 0, successes_free = 0;
  for (const StepRow& row : result.steps) {
    const fier::StepLog& s = row.log;
    queries += s.queried;
    active += s.reason == sag::QueryReason::kActive;
    random += s.reason == sag::QueryReason::kRandom;
    correct += s.novice_correct;
    system += s.system_success;
    if (s.novice_correct) {
      ++successes;
      successes_free += !s.queried;
    } else {
      ++failures;
      failures_queried += s.queried;
    }
  }
  const double n = static_cast<double>(result.steps.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto ratio = [nan](double a, double b) { return b > 0 ? a / b : nan; };

  nlohmann::json j;
  j["schema"] = "askd.summary/1";
  j["run_id"] = result.run_id;
  j["seed"] = result.seed;
  j["composition"] = composition_json(result.dataset.composition_counts());
  j["totals"] = {{"decisions", result.steps.size()},
                 {"queries", queries},
                 {"active_queries", active},
                 {"random_queries", random},
                 {"query_rate", number(ratio(queries, n))},
                 {"novice_success", number(ratio(correct, n))},
                 {"system_success", number(ratio(system, n))},
                 {"sensitivity", number(ratio(failures_queried, failures))},
                 {"specificity", number(ratio(successes_free, successes))},
                 {"update_count", result.model ? result.model->update_count() : 0}};
  nlohmann::json series = nlohmann::json::array();
  for (const MetricsPoint& p : result.series) {
    series.push_back({{"episode", p.episode},
                      {"sensitivity", number(p.sensitivity)},
                      {"specificity", number(p.specificity)},
                      {"novice_success", number(p.novice_success)},
                      {"system_success", number(p.system_success)},
                      {"query_rate", number(p.query_rate)}});
  }
  j["series"] = std::move(series);
  nlohmann::json evals = nlohmann::json::array();
  for (const Evaluation& e : result.evaluations) {
    evals.push_back({{"episode", e.episode},
                     {"queries", e.queries},
                     {"composition", composition_json(e.composition)},
                     {"seen_success", number(e.seen_success)},
                     {"unseen_success", number(e.unseen_success)}});
  }
  j["evaluations"] = std::move(evals);
  if (!result.evaluations.empty()) {
    j["final"] = {{"seen_success", number(result.evaluations.back().seen_success)},
                  {"unseen_success", number(result.evaluations.back().unseen_success)}};
  }
  j["config"] = result.config_echo;
  j["warnings"] = result.warnings;
  return j;
}

void write_run(const RunResult& result, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir + ": " + ec.message());
  auto open = [&dir](const char* name) {
    const fs::path path = fs::path(dir) / name;
    std::ofstream f(path);
    if (!f) fail(ErrorCode::kIo, "cannot write " + path.string());
    return f;
  };
  {
    auto f = open("steps.csv");
    write_steps_csv(result, f);
  }
  {
    auto f = open("summary.json");
    f << summary_json(result).dump(2) << '\n';
  }
  {
    auto f = open("config.txt");
    f << result.config_echo;
  }
  {
    auto f = open("dataset.jsonl");
    result.dataset.write_jsonl(f);
  }
  if (result.model) {
    auto f = open("novice.json");
    result.model->save_json(f);
  }
}

}  // namespace askd::simbench
