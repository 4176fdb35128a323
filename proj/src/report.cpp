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

#include "askd/report.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "askd/error.hpp"
#include "askd/simbench.hpp"

namespace askd::report {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kMetrics[] = {"sensitivity", "specificity", "system_success",
                                    "novice_success", "query_rate"};

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string_view::npos ? comma : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

double ratio(double a, double b) { return b > 0 ? a / b : kNaN; }

}  // namespace

StepColumns read_steps(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kSchema, path + ": cannot open step log");
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kSchema, path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  auto column = [&](std::string_view name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    fail(ErrorCode::kSchema, path + ": missing column '" + std::string(name) + "'");
  };
  const std::size_t c_episode = column("episode");
  const std::size_t c_queried = column("queried");
  const std::size_t c_correct = column("novice_correct");
  const std::size_t c_system = column("system_success");

  StepColumns cols;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) {
      fail(ErrorCode::kSchema, path + ":" + std::to_string(lineno) + ": expected " +
                                   std::to_string(header.size()) + " fields");
    }
    auto integer = [&](std::size_t c) {
      std::int64_t v = 0;
      const auto f = fields[c];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        fail(ErrorCode::kSchema, path + ":" + std::to_string(lineno) + ": bad value in column '" +
                                     std::string(header[c]) + "'");
      }
      return v;
    };
    cols.episode.push_back(integer(c_episode));
    cols.queried.push_back(integer(c_queried) != 0);
    cols.novice_correct.push_back(integer(c_correct) != 0);
    cols.system_success.push_back(integer(c_system) != 0);
  }
  return cols;
}

std::string group_key(const ExperimentConfig& config) {
  std::string ablate = config.ablate.to_string();
  for (char& ch : ablate) {
    if (ch == ',') ch = '+';
  }
  return config.get("gating.mode") + "," + config.get("gating.sigma_des") + "," +
         config.get("gating.p_rand") + "," + ablate;
}

RunMetrics run_metrics(const StepColumns& steps, const ExperimentConfig& config,
                       const std::string& run_dir) {
  RunMetrics m;
  m.run_dir = run_dir;
  m.group = group_key(config);
  const std::size_t n = steps.episode.size();
  double failures = 0, failures_queried = 0, successes = 0, successes_free = 0;
  double system = 0, queried = 0;
  for (std::size_t i = n / 3; i < n; ++i) {
    if (steps.novice_correct[i]) {
      ++successes;
      successes_free += !steps.queried[i];
    } else {
      ++failures;
      failures_queried += steps.queried[i];
    }
    system += steps.system_success[i];
    queried += steps.queried[i];
  }
  const double late = static_cast<double>(n - n / 3);
  m.decisions = static_cast<std::int64_t>(late);
  m.sensitivity = ratio(failures_queried, failures);
  m.specificity = ratio(successes_free, successes);
  m.system_success = ratio(system, late);
  m.novice_success = ratio(successes, late);
  m.query_rate = ratio(queried, late);
  return m;
}

std::vector<SeriesPoint> run_series(const StepColumns& steps, const ExperimentConfig& config) {
  std::vector<SeriesPoint> out;
  if (config.series_every <= 0) return out;
  simbench::RollingMetrics rolling(config.sensitivity_window, config.specificity_window,
                                   config.episode_window);
  const std::size_t n = steps.episode.size();
  for (std::size_t i = 0; i < n; ++i) {
    rolling.record(steps.novice_correct[i], steps.queried[i]);
    const std::int64_t ep = steps.episode[i];
    const bool last_of_episode = i + 1 == n || steps.episode[i + 1] != ep;
    if (!last_of_episode || (ep + 1) % config.series_every != 0) continue;
    const double values[] = {rolling.sensitivity(), rolling.specificity(),
                             rolling.system_success(), rolling.novice_success(),
                             rolling.query_rate()};
    for (std::size_t k = 0; k < std::size(kMetrics); ++k) {
      out.push_back({"", ep, kMetrics[k], values[k], kNaN, 1});
    }
  }
  return out;
}

void mean_std(const std::vector<double>& values, double& mean, double& stdev, std::size_t& n) {
  n = 0;
  double sum = 0.0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  mean = n ? sum / static_cast<double>(n) : kNaN;
  if (n < 2) {
    stdev = kNaN;
    return;
  }
  double ss = 0.0;
  for (double v : values) {
    if (!std::isnan(v)) ss += (v - mean) * (v - mean);
  }
  stdev = std::sqrt(ss / static_cast<double>(n - 1));
}

Report build_report(const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) fail(ErrorCode::kInvalidArgument, "no run directories given");
  Report report;
  // group -> metric -> values; group -> (episode, metric) -> values
  std::map<std::string, std::map<std::string, std::vector<double>>> table;
  std::map<std::string, std::map<std::pair<std::int64_t, std::string>, std::vector<double>>>
      series;
  std::map<std::string, std::size_t> runs_per_group;

  for (const auto& dir : run_dirs) {
    const std::string config_path = (fs::path(dir) / "config.txt").string();
    if (!fs::exists(config_path)) fail(ErrorCode::kSchema, config_path + ": missing");
    const ExperimentConfig config = ExperimentConfig::load_file(config_path);
    const StepColumns steps = read_steps((fs::path(dir) / "steps.csv").string());
    RunMetrics m = run_metrics(steps, config, dir);
    auto& t = table[m.group];
    t["sensitivity"].push_back(m.sensitivity);
    t["specificity"].push_back(m.specificity);
    t["system_success"].push_back(m.system_success);
    t["novice_success"].push_back(m.novice_success);
    t["query_rate"].push_back(m.query_rate);
    ++runs_per_group[m.group];
    for (const SeriesPoint& p : run_series(steps, config)) {
      series[m.group][{p.episode, p.metric}].push_back(p.mean);
    }
    report.runs.push_back(std::move(m));
  }

  using simbench::format_number;
  std::ostringstream csv;
  csv << "mode,sigma_des,p_rand,ablate,n";
  for (const char* metric : kMetrics) csv << ',' << metric << "_mean," << metric << "_std";
  csv << '\n';
  for (const auto& [group, metrics] : table) {
    csv << group << ',' << runs_per_group[group];
    for (const char* metric : kMetrics) {
      double mean = 0, stdev = 0;
      std::size_t n = 0;
      mean_std(metrics.at(metric), mean, stdev, n);
      csv << ',' << format_number(mean) << ',' << format_number(stdev);
    }
    csv << '\n';
  }
  report.table_csv = csv.str();

  std::ostringstream long_csv, dat;
  long_csv << "mode,sigma_des,p_rand,ablate,episode,metric,mean,std,n\n";
  for (const auto& [group, points] : series) {
    for (const auto& [key, values] : points) {
      SeriesPoint p;
      p.group = group;
      p.episode = key.first;
      p.metric = key.second;
      mean_std(values, p.mean, p.std, p.n);
      long_csv << group << ',' << p.episode << ',' << p.metric << ',' << format_number(p.mean)
               << ',' << format_number(p.std) << ',' << p.n << '\n';
    }
    for (const char* metric : kMetrics) {
      dat << "# " << group << ' ' << metric << "\n# episode mean std n\n";
      for (const auto& [key, values] : points) {
        if (key.second != metric) continue;
        double mean = 0, stdev = 0;
        std::size_t n = 0;
        mean_std(values, mean, stdev, n);
        dat << key.first << ' ' << format_number(mean) << ' ' << format_number(stdev) << ' ' << n
            << '\n';
      }
      dat << "\n\n";
    }
  }
  report.series_csv = long_csv.str();
  report.series_dat = dat.str();
  return report;
}

void write_report(const Report& report, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + out_dir + ": " + ec.message());
  auto write = [&out_dir](const char* name, const std::string& text) {
    const fs::path path = fs::path(out_dir) / name;
    std::ofstream f(path);
    if (!f) fail(ErrorCode::kIo, "cannot write " + path.string());
    f << text;
  };
  write("report.csv", report.table_csv);
  write("series.csv", report.series_csv);
  write("series.dat", report.series_dat);
}

}  // namespace askd::report
