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

// askd: run experiments, aggregate reports and serve teacher sessions.

#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "askdagger/askdagger.h"

namespace {

int exit_code(askd_status s) {
  if (s == ASKD_OK) return 0;
  return (s == ASKD_ERR_CONFIG || s == ASKD_ERR_INVALID_ARGUMENT) ? 2 : 1;
}

struct Failed {
  int code;
};

void check(askd_status s) {
  if (s == ASKD_OK) return;
  std::cerr << "askd: " << askd_last_error() << "\n";
  throw Failed{exit_code(s)};
}

struct ConfigHandle {
  askd_config* p = nullptr;
  ConfigHandle() = default;
  explicit ConfigHandle(askd_config* c) : p(c) {}
  ConfigHandle(ConfigHandle&& o) noexcept : p(o.p) { o.p = nullptr; }
  ~ConfigHandle() { askd_config_destroy(p); }
};

std::string take(char* s) {
  std::string out = s ? s : "";
  askd_free(s);
  return out;
}

std::string get(const ConfigHandle& c, const char* key) {
  char* v = nullptr;
  check(askd_config_get(c.p, key, &v));
  return take(v);
}

// Flag name -> config key, shared by overrides and --sweep.
const std::vector<std::pair<std::string, std::string>> kFlagKeys = {
    {"mode", "gating.mode"},        {"sigma-des", "gating.sigma_des"},
    {"p-rand", "gating.p_rand"},    {"n-min", "gating.n_min"},
    {"n-rep", "gating.n_rep"},      {"alpha", "pier.alpha"},
    {"beta", "pier.beta"},          {"lambda", "pier.lambda"},
    {"base", "pier.base"},          {"episodes", "run.episodes"},
    {"ablate", "run.ablate"},       {"phases", "task.phases"},
    {"out", "run.out"},             {"jobs", "run.jobs"},
    {"run-id", "run.run_id"},       {"timeout", "teacher.timeout"},
    {"fallback", "teacher.fallback"}};

std::string key_for(const std::string& flag) {
  for (const auto& [f, k] : kFlagKeys) {
    if (f == flag) return k;
  }
  if (flag.find('.') != std::string::npos) return flag;  // raw section.key
  throw CLI::ValidationError("--sweep", "unknown parameter '" + flag + "'");
}

struct CommonOptions {
  std::string config_path;
  std::map<std::string, std::string> flags;  // flag -> value
  std::vector<std::string> sets;             // key=value
  std::optional<std::uint64_t> seed;
  std::string seeds;

  void add(CLI::App* app, bool with_jobs) {
    app->add_option("--config,-c", config_path, "config file (key = value sections)");
    for (const auto& [flag, key] : kFlagKeys) {
      if (!with_jobs && flag == "jobs") continue;
      app->add_option_function<std::string>(
          "--" + flag, [this, f = flag](const std::string& v) { flags[f] = v; },
          "sets " + key);
    }
    app->add_option("--set", sets, "override any key: section.key=value")->take_all();
    app->add_option("--seed", seed, "single seed");
    app->add_option("--seeds", seeds, "N (seeds 0..N-1) or a comma list");
  }

  ConfigHandle load() const {
    askd_config* c = nullptr;
    if (config_path.empty()) check(askd_config_create(&c));
    else check(askd_config_load(config_path.c_str(), &c));
    ConfigHandle h(c);
    for (const auto& [flag, value] : flags) check(askd_config_set(h.p, key_for(flag).c_str(), value.c_str()));
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got '" + kv + "'");
      check(askd_config_set(h.p, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
    }
    if (seed) {
      check(askd_config_set(h.p, "run.seeds", std::to_string(*seed).c_str()));
    } else if (!seeds.empty()) {
      std::string list = seeds;
      if (seeds.find(',') == std::string::npos) {
        const long n = std::stol(seeds);
        if (n < 1) throw CLI::ValidationError("--seeds", "count must be >= 1");
        list.clear();
        for (long i = 0; i < n; ++i) list += (i ? "," : "") + std::to_string(i);
      }
      check(askd_config_set(h.p, "run.seeds", list.c_str()));
    }
    if (const char* env = std::getenv("ASKD_OUT"); env && *env) {
      check(askd_config_set(h.p, "run.out", env));
    }
    char* warnings = nullptr;
    check(askd_config_validate(h.p, &warnings));
    std::istringstream w(take(warnings));
    for (std::string line; std::getline(w, line);) std::cerr << "askd: warning: " << line << "\n";
    return h;
  }
};

std::vector<std::uint64_t> seed_list(const ConfigHandle& c) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(get(c, "run.seeds"));
  for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stoull(item));
  return out;
}

// "a:b:step" (inclusive) or "v1,v2,...".
std::vector<std::string> sweep_values(const std::string& spec) {
  std::vector<std::string> out;
  if (spec.find(':') == std::string::npos) {
    std::stringstream ss(spec);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(item);
    return out;
  }
  double lo = 0, hi = 0, step = 0;
  char c1 = 0, c2 = 0;
  std::istringstream in(spec);
  if (!(in >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || !(step > 0) || hi < lo) {
    throw CLI::ValidationError("--sweep", "range must be lo:hi:step with step > 0");
  }
  const long n = std::lround(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= n; ++i) {
    // Round to the step's precision so 0.1 * 3 prints as 0.3.
    const double v = std::round((lo + i * step) * 1e9) / 1e9;
    std::ostringstream os;
    os << v;
    out.push_back(os.str());
  }
  return out;
}

struct Job {
  ConfigHandle config;
  std::uint64_t seed;
};

int cmd_run(const CommonOptions& common, const std::vector<std::string>& sweep) {
  ConfigHandle base = common.load();
  const std::string out = get(base, "run.out");
  const int jobs = std::stoi(get(base, "run.jobs"));

  std::vector<Job> queue;
  auto add_seeds = [&](const ConfigHandle& c) {
    for (auto seed : seed_list(c)) {
      askd_config* copy = nullptr;
      check(askd_config_clone(c.p, &copy));
      queue.push_back({ConfigHandle(copy), seed});
    }
  };
  if (sweep.empty()) {
    add_seeds(base);
  } else {
    const std::string key = key_for(sweep[0]);
    std::string prefix = get(base, "run.run_id");
    if (prefix.empty()) prefix = get(base, "gating.mode");
    for (const auto& value : sweep_values(sweep[1])) {
      askd_config* copy = nullptr;
      check(askd_config_clone(base.p, &copy));
      ConfigHandle c(copy);
      check(askd_config_set(c.p, key.c_str(), value.c_str()));
      std::string tag = key.substr(key.find('.') + 1) + "=" + value;
      check(askd_config_set(c.p, "run.run_id", (prefix + "_" + tag).c_str()));
      char* warnings = nullptr;
      check(askd_config_validate(c.p, &warnings));
      askd_free(warnings);
      add_seeds(c);
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex io;
  int worst = 0;
  auto worker = [&] {
    for (std::size_t i = next++; i < queue.size(); i = next++) {
      char* dir = nullptr;
      const askd_status s = askd_run(queue[i].config.p, queue[i].seed, out.c_str(), &dir);
      std::lock_guard lk(io);
      if (s == ASKD_OK) {
        std::cout << take(dir) << "\n";
      } else {
        std::cerr << "askd: seed " << queue[i].seed << ": " << askd_last_error() << "\n";
        worst = std::max(worst, exit_code(s));
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(queue.size())));
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return worst;
}

// A directory holding steps.csv is a run; otherwise its run subdirectories
// are used.
std::vector<std::string> expand_runs(const std::vector<std::string>& args) {
  namespace fs = std::filesystem;
  std::vector<std::string> out;
  for (const auto& a : args) {
    if (fs::exists(fs::path(a) / "steps.csv") || !fs::is_directory(a)) {
      out.push_back(a);
      continue;
    }
    std::vector<std::string> found;
    for (const auto& e : fs::directory_iterator(a)) {
      if (e.is_directory() && fs::exists(e.path() / "steps.csv")) found.push_back(e.path().string());
    }
    if (found.empty()) out.push_back(a);  // let the report name the missing file
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

int cmd_report(const std::vector<std::string>& runs, std::string out) {
  if (const char* env = std::getenv("ASKD_OUT"); env && *env) out = env;
  const auto dirs = expand_runs(runs);
  std::vector<const char*> ptrs;
  for (const auto& d : dirs) ptrs.push_back(d.c_str());
  check(askd_report(ptrs.data(), ptrs.size(), out.c_str()));
  std::cout << out << "/report.csv\n" << out << "/series.csv\n" << out << "/series.dat\n";
  return 0;
}

std::atomic<bool> interrupted{false};

extern "C" void on_signal(int) { interrupted = true; }

int cmd_serve(const CommonOptions& common, const std::string& host, int port, bool exit_when_done) {
  ConfigHandle c = common.load();
  const auto seeds = seed_list(c);
  const std::string out = get(c, "run.out");
  askd_server* server = nullptr;
  check(askd_server_create(c.p, seeds.front(), host.c_str(), port, out.c_str(), &server));
  struct Guard {
    askd_server* s;
    ~Guard() { askd_server_destroy(s); }
  } guard{server};
  check(askd_server_start(server));
  std::cout << "askd: serving session " << askd_server_session_id(server) << " on http://" << host
            << ":" << askd_server_port(server) << std::endl;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  bool reported = false;
  while (!interrupted) {
    if (askd_server_done(server) && !reported) {
      reported = true;
      std::cout << "askd: run ended" << std::endl;
      if (exit_when_done) break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  check(askd_server_stop(server));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"askd: interactive imitation learning with uncertainty-gated queries"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(askd_version()));

  CommonOptions run_opts;
  std::vector<std::string> sweep;
  auto* run = app.add_subcommand("run", "run experiments and write per-run artifacts");
  run_opts.add(run, true);
  run->add_option("--sweep", sweep, "parameter and range, e.g. --sweep sigma-des 0.1:0.9:0.1")
      ->expected(2);

  std::vector<std::string> report_runs;
  std::string report_out = "report";
  auto* report = app.add_subcommand("report", "aggregate run directories into tables and series");
  report->add_option("runs", report_runs, "run directories (or their parent)")->required();
  report->add_option("--out", report_out, "output directory");

  CommonOptions serve_opts;
  std::string host = "127.0.0.1";
  int port = 8089;
  bool exit_when_done = false;
  auto* serve = app.add_subcommand("serve", "serve one run to a remote teacher over HTTP/WebSocket");
  serve_opts.add(serve, false);
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_flag("--exit-when-done", exit_when_done, "exit once the run ends");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(run_opts, sweep);
    if (*report) return cmd_report(report_runs, report_out);
    if (*serve) return cmd_serve(serve_opts, host, port, exit_when_done);
  } catch (const Failed& f) {
    return f.code;
  } catch (const CLI::Error& e) {
    std::cerr << "askd: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "askd: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
