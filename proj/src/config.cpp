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

#include "askd/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "askd/error.hpp"
#include "askd/simbench.hpp"

namespace askd {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(std::string_view key, std::string_view text) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    fail(ErrorCode::kConfig, std::string(key) + ": expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

template <typename Int>
Int parse_integer(std::string_view key, std::string_view text) {
  Int v{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    fail(ErrorCode::kConfig, std::string(key) + ": expected an integer, got '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  fail(ErrorCode::kConfig, std::string(key) + ": expected true or false, got '" + std::string(text) + "'");
}

std::vector<std::uint64_t> parse_seeds(std::string_view key, std::string_view text) {
  std::vector<std::uint64_t> out;
  std::string item;
  std::stringstream ss{std::string(text)};
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_integer<std::uint64_t>(key, item));
  }
  if (out.empty()) fail(ErrorCode::kConfig, std::string(key) + ": at least one seed is required");
  return out;
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(seeds[i]);
  }
  return s;
}

struct Entry {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

#define ASKD_DOUBLE(name, field)                                                   \
  Entry {                                                                          \
    name, [](const ExperimentConfig& c) { return fmt_double(c.field); },           \
        [](ExperimentConfig& c, std::string_view v) { c.field = parse_double(name, v); } \
  }
#define ASKD_INT(name, field)                                                      \
  Entry {                                                                          \
    name, [](const ExperimentConfig& c) { return std::to_string(c.field); },       \
        [](ExperimentConfig& c, std::string_view v) {                              \
          c.field = parse_integer<decltype(c.field)>(name, v);                     \
        }                                                                          \
  }
#define ASKD_BOOL(name, field)                                                     \
  Entry {                                                                          \
    name, [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); }, \
        [](ExperimentConfig& c, std::string_view v) { c.field = parse_bool(name, v); } \
  }
#define ASKD_STRING(name, field)                                                   \
  Entry {                                                                          \
    name, [](const ExperimentConfig& c) { return c.field; },                       \
        [](ExperimentConfig& c, std::string_view v) { c.field = std::string(v); }  \
  }

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      Entry{"gating.mode",
            [](const ExperimentConfig& c) { return std::string(sag::to_string(c.gating.mode)); },
            [](ExperimentConfig& c, std::string_view v) {
              c.gating.mode = sag::gating_mode_from_string(v);
            }},
      ASKD_DOUBLE("gating.sigma_des", gating.sigma_des),
      ASKD_DOUBLE("gating.p_rand", gating.p_rand),
      ASKD_INT("gating.n_min", gating.n_min),
      ASKD_INT("gating.n_rep", gating.n_rep),
      ASKD_BOOL("gating.normalize", gating.normalize),
      ASKD_BOOL("gating.impute", gating.impute),
      ASKD_DOUBLE("pier.alpha", pier.alpha),
      ASKD_DOUBLE("pier.beta", pier.beta),
      ASKD_DOUBLE("pier.lambda", pier.lambda),
      ASKD_DOUBLE("pier.base", pier.base),
      ASKD_INT("novice.hidden", hidden),
      ASKD_DOUBLE("novice.dropout", dropout),
      ASKD_INT("novice.passes", passes),
      ASKD_DOUBLE("novice.leaky_slope", leaky_slope),
      Entry{"novice.uncertainty",
            [](const ExperimentConfig& c) { return std::string(novice::to_string(c.uncertainty)); },
            [](ExperimentConfig& c, std::string_view v) {
              c.uncertainty = novice::uncertainty_score_from_string(v);
            }},
      ASKD_DOUBLE("novice.learning_rate", learning_rate),
      ASKD_INT("novice.batch_size", batch_size),
      ASKD_INT("novice.grad_steps", grad_steps),
      ASKD_INT("novice.update_every", update_every),
      ASKD_INT("task.attributes", task.attributes),
      ASKD_INT("task.seen_attributes", task.seen_attributes),
      ASKD_INT("task.candidates", task.candidates),
      ASKD_INT("task.feature_dim", task.feature_dim),
      ASKD_DOUBLE("task.noise", task.noise),
      ASKD_DOUBLE("task.prototype_scale", task.prototype_scale),
      ASKD_DOUBLE("task.unseen_distractor_rate", task.unseen_distractor_rate),
      ASKD_DOUBLE("task.clutter_rate", task.clutter_rate),
      ASKD_INT("task.steps_per_episode", task.steps_per_episode),
      ASKD_STRING("task.phases", task.phases),
      ASKD_DOUBLE("teacher.relabel_probability", relabel_probability),
      ASKD_DOUBLE("teacher.timeout", teacher_timeout),
      Entry{"teacher.fallback",
            [](const ExperimentConfig& c) { return std::string(to_string(c.fallback)); },
            [](ExperimentConfig& c, std::string_view v) {
              if (v == "block") c.fallback = TeacherFallback::kBlock;
              else if (v == "oracle_after_timeout") c.fallback = TeacherFallback::kOracleAfterTimeout;
              else fail(ErrorCode::kConfig, "teacher.fallback: expected block or oracle_after_timeout");
            }},
      ASKD_STRING("run.run_id", run_id),
      ASKD_INT("run.episodes", episodes),
      Entry{"run.seeds", [](const ExperimentConfig& c) { return join_seeds(c.seeds); },
            [](ExperimentConfig& c, std::string_view v) { c.seeds = parse_seeds("run.seeds", v); }},
      Entry{"run.ablate", [](const ExperimentConfig& c) { return c.ablate.to_string(); },
            [](ExperimentConfig& c, std::string_view v) { c.ablate = Ablations::parse(v); }},
      ASKD_INT("run.eval_every", eval_every),
      ASKD_INT("run.eval_scenes", eval_scenes),
      ASKD_INT("run.sensitivity_window", sensitivity_window),
      ASKD_INT("run.specificity_window", specificity_window),
      ASKD_INT("run.episode_window", episode_window),
      ASKD_INT("run.series_every", series_every),
      ASKD_STRING("run.out", out),
      ASKD_INT("run.jobs", jobs),
  };
  return entries;
}

#undef ASKD_DOUBLE
#undef ASKD_INT
#undef ASKD_BOOL
#undef ASKD_STRING

const Entry& find_entry(std::string_view key) {
  for (const auto& e : registry()) {
    if (e.key == key) return e;
  }
  fail(ErrorCode::kConfig, "unknown key '" + std::string(key) + "'");
}

}  // namespace

std::string_view to_string(TeacherFallback f) noexcept {
  return f == TeacherFallback::kBlock ? "block" : "oracle_after_timeout";
}

std::string Ablations::to_string() const {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += ',';
    s += name;
  };
  add(no_fier_relabel, "no_fier_relabel");
  add(no_fier_validate, "no_fier_validate");
  add(no_pier, "no_pier");
  add(no_sag_imputation, "no_sag_imputation");
  add(no_sag_normalization, "no_sag_normalization");
  return s.empty() ? "none" : s;
}

Ablations Ablations::parse(std::string_view list) {
  Ablations a;
  std::stringstream ss{std::string(list)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty() || item == "none") continue;
    if (item == "no_fier_relabel") a.no_fier_relabel = true;
    else if (item == "no_fier_validate") a.no_fier_validate = true;
    else if (item == "no_pier") a.no_pier = true;
    else if (item == "no_sag_imputation") a.no_sag_imputation = true;
    else if (item == "no_sag_normalization") a.no_sag_normalization = true;
    else fail(ErrorCode::kConfig, "unknown ablation '" + item + "'");
  }
  return a;
}

sag::GatingConfig ExperimentConfig::effective_gating() const {
  sag::GatingConfig g = gating;
  if (ablate.no_sag_imputation) g.impute = false;
  if (ablate.no_sag_normalization) g.normalize = false;
  return g;
}

pier::PierConfig ExperimentConfig::effective_pier() const {
  pier::PierConfig p = pier;
  if (ablate.no_pier) {
    p.alpha = 0.0;
    p.beta = 0.0;
  }
  return p;
}

novice::NoviceConfig ExperimentConfig::novice_config() const {
  novice::NoviceConfig n;
  n.feature_dim = task.feature_dim;
  n.num_goals = task.attributes;
  n.hidden = hidden;
  n.dropout = dropout;
  n.passes = passes;
  n.leaky_slope = leaky_slope;
  n.score = uncertainty;
  return n;
}

std::vector<std::string> ExperimentConfig::validate() const {
  auto warnings = sag::validate(gating);
  pier::validate(pier);
  novice::validate(novice_config());
  if (learning_rate < 0.0) fail(ErrorCode::kConfig, "novice.learning_rate must be >= 0");
  if (batch_size < 1 || grad_steps < 0 || update_every < 1) {
    fail(ErrorCode::kConfig, "novice batch_size and update_every must be >= 1, grad_steps >= 0");
  }
  simbench::validate(task);
  if (!(relabel_probability >= 0.0 && relabel_probability <= 1.0)) {
    fail(ErrorCode::kConfig, "teacher.relabel_probability must lie in [0, 1]");
  }
  if (!(teacher_timeout > 0.0)) fail(ErrorCode::kConfig, "teacher.timeout must be positive");
  if (episodes < 0) fail(ErrorCode::kConfig, "run.episodes must be >= 0");
  if (eval_every < 0 || eval_scenes < 1) {
    fail(ErrorCode::kConfig, "run.eval_every must be >= 0 and run.eval_scenes >= 1");
  }
  if (sensitivity_window < 1 || specificity_window < 1 || episode_window < 1 || series_every < 1) {
    fail(ErrorCode::kConfig, "metric windows must be >= 1");
  }
  if (jobs < 1) fail(ErrorCode::kConfig, "run.jobs must be >= 1");
  for (char ch : run_id) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && std::string_view("._-+=").find(ch) == std::string_view::npos) {
      fail(ErrorCode::kConfig, "run.run_id may only use letters, digits and ._-+=");
    }
  }
  if (ablate.no_sag_imputation && gating.mode != sag::GatingMode::kSensitivity &&
      gating.p_rand == 0.0) {
    warnings.push_back("no_sag_imputation with p_rand = 0 leaves only actively queried labels");
  }
  return warnings;
}

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  find_entry(key).set(*this, trim(value));
}

std::string ExperimentConfig::get(std::string_view key) const { return find_entry(key).get(*this); }

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& e : registry()) out.push_back(e.key);
    return out;
  }();
  return k;
}

std::string ExperimentConfig::echo() const {
  std::string out;
  std::string section;
  for (const auto& e : registry()) {
    const auto dot = e.key.find('.');
    const std::string sec = e.key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += '\n';
      out += '[' + sec + "]\n";
      section = sec;
    }
    out += e.key.substr(dot + 1) + " = " + e.get(*this) + '\n';
  }
  return out;
}

ExperimentConfig ExperimentConfig::parse(std::string_view text, std::string_view origin) {
  ExperimentConfig c;
  std::map<std::string, std::size_t> key_lines;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string prefix = std::string(origin) + ":" + std::to_string(line_no) + ": ";
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorCode::kConfig, prefix + "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kConfig, prefix + "expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (section.empty()) fail(ErrorCode::kConfig, prefix + "key '" + key + "' outside of a section");
    try {
      c.set(section + "." + key, value);
    } catch (const Error& e) {
      fail(ErrorCode::kConfig, prefix + e.what());
    }
    key_lines[section + "." + key] = line_no;
  }
  // Range checks need the whole config; anchor them at the line of the key
  // the message names, when there is one.
  try {
    c.validate();
  } catch (const Error& e) {
    const std::string msg = e.what();
    std::size_t best_line = 0, best_len = 0;
    for (const auto& [key, line] : key_lines) {
      const std::string name = key.substr(key.find('.') + 1);
      if (name.size() > best_len && msg.find(name) != std::string::npos) {
        best_line = line;
        best_len = name.size();
      }
    }
    std::string prefix(origin);
    if (best_line) prefix += ":" + std::to_string(best_line);
    fail(ErrorCode::kConfig, prefix + ": " + msg);
  }
  return c;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kConfig, path + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.echo() == b.echo();
}

}  // namespace askd
