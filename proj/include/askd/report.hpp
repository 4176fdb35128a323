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
#include <vector>

#include "askd/config.hpp"

namespace askd::report {

// Per-run aggregates over the final two-thirds of the step log.
struct RunMetrics {
  std::string run_dir;
  std::string group;  // mode,sigma_des,p_rand,ablate
  std::int64_t decisions = 0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double system_success = 0.0;
  double novice_success = 0.0;
  double query_rate = 0.0;
};

struct SeriesPoint {
  std::string group;
  std::int64_t episode = 0;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

struct StepColumns {
  std::vector<std::int64_t> episode;
  std::vector<bool> queried;
  std::vector<bool> novice_correct;
  std::vector<bool> system_success;
};

// Reads the columns the report needs. Throws kSchema naming the file when a
// column is missing or a value does not parse.
StepColumns read_steps(const std::string& path);

RunMetrics run_metrics(const StepColumns& steps, const ExperimentConfig& config,
                       const std::string& run_dir);

// Rolling sensitivity, specificity, novice/system success and query rate at
// every series tick, recomputed from the step log.
std::vector<SeriesPoint> run_series(const StepColumns& steps, const ExperimentConfig& config);

std::string group_key(const ExperimentConfig& config);

struct Report {
  std::vector<RunMetrics> runs;
  std::string table_csv;   // one row per group: mean, std, n per metric
  std::string series_csv;  // long format: group columns, episode, metric, mean, std, n
  std::string series_dat;  // gnuplot blocks, one per group and metric
};

Report build_report(const std::vector<std::string>& run_dirs);

// Writes report.csv, series.csv and series.dat into out_dir.
void write_report(const Report& report, const std::string& out_dir);

// Sample mean and standard deviation (n - 1), skipping NaN. std is NaN
// when fewer than two values remain.
void mean_std(const std::vector<double>& values, double& mean, double& stdev, std::size_t& n);

}  // namespace askd::report
