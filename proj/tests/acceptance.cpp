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

// Acceptance runner: one PASS/FAIL line per criterion, oracle teacher only.
// Exit status is the number of failed criteria.
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "askd/config.hpp"
#include "askd/pier.hpp"
#include "askd/sag.hpp"
#include "askd/simbench.hpp"
#include "oracles.hpp"

using namespace askd;

namespace {

constexpr int kSeeds = 10;
constexpr double kInf = std::numeric_limits<double>::infinity();

// What the criteria need from one run; the full result is dropped.
struct RunStats {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  double late_sensitivity = 0, late_specificity = 0;  // final two-thirds
  double early_sensitivity = 0;                       // first third
  double qrate_first = 0, qrate_last = 0;             // first / final third
  double novice_last = 0;                             // final third
  double late_system = 0;
  std::vector<std::pair<std::int64_t, double>> system_series;  // rolling
  std::vector<simbench::Evaluation> evals;
  double shift_window_success = std::nan("");  // episodes 2000..2199
};

double ratio(double a, double b) { return b > 0 ? a / b : std::nan(""); }

RunStats summarize(const simbench::RunResult& r) {
  RunStats s;
  s.seed = r.seed;
  const auto& st = r.steps;
  s.n = st.size();
  const std::size_t third = s.n / 3, two = s.n - s.n / 3;
  auto range = [&](std::size_t lo, std::size_t hi, auto&& f) {
    for (std::size_t i = lo; i < hi; ++i) f(st[i].log);
  };
  double fq = 0, fa = 0, sf = 0, sa = 0, sys = 0;
  range(third, s.n, [&](const fier::StepLog& l) {
    if (l.novice_correct) {
      ++sa;
      sf += !l.queried;
    } else {
      ++fa;
      fq += l.queried;
    }
    sys += l.queried || l.novice_correct;
  });
  s.late_sensitivity = ratio(fq, fa);
  s.late_specificity = ratio(sf, sa);
  s.late_system = ratio(sys, static_cast<double>(s.n - third));

  double efq = 0, efa = 0, q1 = 0;
  range(0, third, [&](const fier::StepLog& l) {
    if (!l.novice_correct) {
      ++efa;
      efq += l.queried;
    }
    q1 += l.queried;
  });
  s.early_sensitivity = ratio(efq, efa);
  s.qrate_first = ratio(q1, static_cast<double>(third));

  double q3 = 0, c3 = 0;
  range(two, s.n, [&](const fier::StepLog& l) {
    q3 += l.queried;
    c3 += l.novice_correct;
  });
  s.qrate_last = ratio(q3, static_cast<double>(s.n - two));
  s.novice_last = ratio(c3, static_cast<double>(s.n - two));

  for (const auto& p : r.series) s.system_series.emplace_back(p.episode, p.system_success);
  s.evals = r.evaluations;

  double hit = 0, cnt = 0;
  for (const auto& row : st) {
    if (row.log.episode >= 2000 && row.log.episode < 2200) {
      ++cnt;
      hit += row.log.novice_correct;
    }
  }
  if (cnt > 0) s.shift_window_success = hit / cnt;
  return s;
}

std::vector<RunStats> run_seeds(const ExperimentConfig& c) {
  std::vector<RunStats> out(kSeeds);
  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::future<void>> jobs;
  std::atomic<int> next{0};
  for (unsigned w = 0; w < workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&] {
      for (int i = next++; i < kSeeds; i = next++) {
        out[static_cast<std::size_t>(i)] =
            summarize(simbench::run_experiment(c, static_cast<std::uint64_t>(i)));
      }
    }));
  }
  for (auto& j : jobs) j.get();
  return out;
}

double mean_of(const std::vector<RunStats>& runs, double RunStats::*field) {
  double sum = 0;
  int n = 0;
  for (const auto& r : runs) {
    const double v = r.*field;
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  return n ? sum / n : std::nan("");
}

// One-sided sign test: P(Binom(n, 1/2) >= wins).
double sign_test(int wins, int n) {
  double p = 0;
  for (int k = wins; k <= n; ++k) {
    double c = 1;
    for (int j = 0; j < k; ++j) c = c * (n - j) / (j + 1);
    p += c;
  }
  return p / std::pow(2.0, n);
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string fmt(double v, int prec = 3) {
  if (std::isinf(v)) return "inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("%s %2d %s | %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

ExperimentConfig base() {
  ExperimentConfig c;  // p_rand 0.1, n_min 15, n_rep 25, 3000 single-step episodes
  return c;
}

ExperimentConfig gated(sag::GatingMode mode, double sigma, double p_rand = 0.1) {
  ExperimentConfig c = base();
  c.gating.mode = mode;
  c.gating.sigma_des = sigma;
  c.gating.p_rand = p_rand;
  return c;
}

// Cache keyed by the config echo so shared settings run once.
std::map<std::string, std::vector<RunStats>> cache;
const std::vector<RunStats>& runs_for(const ExperimentConfig& c) {
  const std::string key = c.echo();
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, run_seeds(c)).first;
  return it->second;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

void tracking(int id, const char* name, sag::GatingMode mode, double RunStats::*field) {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  std::ostringstream d;
  for (double sigma : {0.3, 0.6, 0.9}) {
    const auto& runs = runs_for(gated(mode, sigma));
    const double m = mean_of(runs, field);
    const bool ok = std::abs(m - sigma) <= 0.07;
    pass &= ok;
    d << "sigma " << sigma << ": " << fmt(m) << (ok ? "" : " (out of band)") << "; ";
  }
  const double secs = seconds_since(t0);
  if (id == 1) {
    pass &= secs < 900.0;
    d << "runtime " << fmt(secs, 1) << " s (limit 900)";
  } else {
    d << "runtime " << fmt(secs, 1) << " s";
  }
  report(id, name, pass, d.str());
}

void success_floor() {
  const double sigma = 0.8;
  const auto& runs = runs_for(gated(sag::GatingMode::kSuccess, sigma));
  // Seed-mean rolling system success at each tick in the final two-thirds.
  const std::int64_t episodes = base().episodes;
  std::map<std::int64_t, std::pair<double, int>> ticks;
  for (const auto& r : runs) {
    for (const auto& [ep, v] : r.system_series) {
      if (ep < episodes / 3 || std::isnan(v)) continue;
      ticks[ep].first += v;
      ++ticks[ep].second;
    }
  }
  double worst = kInf;
  for (const auto& [ep, acc] : ticks) worst = std::min(worst, acc.first / acc.second);
  const bool floor_ok = !ticks.empty() && worst >= 0.75;

  int eligible = 0, monotone = 0;
  for (const auto& r : runs) {
    if (!(r.novice_last > sigma)) continue;
    ++eligible;
    monotone += r.qrate_last <= r.qrate_first;
  }
  const bool pressure_ok = monotone == eligible;
  std::ostringstream d;
  d << "min rolling system success (seed mean, final 2/3) " << fmt(worst)
    << ", aggregate " << fmt(mean_of(runs, &RunStats::late_system))
    << "; query rate first->final third " << fmt(mean_of(runs, &RunStats::qrate_first)) << " -> "
    << fmt(mean_of(runs, &RunStats::qrate_last)) << "; seeds with novice > sigma: " << eligible
    << ", non-increasing: " << monotone;
  report(3, "success-mode floor", floor_ok && pressure_ok, d.str());
}

void p_rand_floor() {
  const auto& high = runs_for(gated(sag::GatingMode::kSensitivity, 0.1, 0.2));
  const auto& low = runs_for(gated(sag::GatingMode::kSensitivity, 0.1, 0.05));
  const double mh = mean_of(high, &RunStats::late_sensitivity);
  const double ml = mean_of(low, &RunStats::late_sensitivity);
  const bool ok = mh >= 0.15 && std::abs(ml - 0.1) <= 0.07;
  report(4, "p_rand floor", ok,
         "p_rand 0.2: " + fmt(mh) + " (>= 0.15); p_rand 0.05: " + fmt(ml) + " (0.1 +- 0.07)");
}

void ablation_direction() {
  const auto sag_cfg = gated(sag::GatingMode::kSensitivity, 0.9);
  auto no_imp = sag_cfg;
  no_imp.ablate.no_sag_imputation = true;
  auto no_norm = sag_cfg;
  no_norm.ablate.no_sag_normalization = true;
  const auto& full = runs_for(sag_cfg);
  const double sag_late = mean_of(full, &RunStats::late_sensitivity);
  const double imp_late = mean_of(runs_for(no_imp), &RunStats::late_sensitivity);
  const double sag_early = mean_of(full, &RunStats::early_sensitivity);
  const double norm_early = mean_of(runs_for(no_norm), &RunStats::early_sensitivity);
  const bool ok = sag_late - imp_late >= 0.05 && norm_early < sag_early;
  report(5, "ablation directionality", ok,
         "SAG " + fmt(sag_late) + " vs no-imputation " + fmt(imp_late) + " (gap " +
             fmt(sag_late - imp_late) + ", need >= 0.05); first third SAG " + fmt(sag_early) +
             " vs no-normalization " + fmt(norm_early));
}

void threshold_oracle() {
  Rng rng(606);
  const auto audit = oracles::audit_thresholds(rng, 500);
  report(6, "threshold oracle equivalence", audit.mismatches == 0 && audit.straddle_violations == 0,
         std::to_string(audit.windows) + " windows, " + std::to_string(audit.mismatches) +
             " mismatches vs exhaustive sweep, " + std::to_string(audit.straddle_violations) +
             " straddle violations");
}

void pier_distribution() {
  Rng rng(707);
  double worst_tv = 0, worst_p = 0;
  for (int t = 0; t < 5; ++t) {
    std::vector<double> pr(100);
    for (auto& v : pr) v = 2.0 * uniform01(rng) + 1e-3;
    const double alpha = 0.5 + 1.5 * uniform01(rng);
    const auto table = pier::table_from_priorities(pr, alpha, 0.5);
    // Independent P = p^alpha / sum p^alpha.
    double z = 0;
    for (double v : pr) z += std::pow(v, alpha);
    for (std::size_t i = 0; i < pr.size(); ++i) {
      worst_p = std::max(worst_p, std::abs(table.probs[i] - std::pow(pr[i], alpha) / z));
    }
    const std::size_t draws = 1000000;
    std::vector<std::size_t> counts(pr.size(), 0);
    for (auto i : pier::sample(table, draws, rng)) ++counts[i];
    worst_tv = std::max(worst_tv, oracles::tv_distance(table.probs, counts, draws));
  }
  // Worked example: priorities [2, 1, 1], alpha = beta = 1.
  const auto w = pier::table_from_priorities({2.0, 1.0, 1.0}, 1.0, 1.0);
  const double raw[] = {1.0 / (3 * 0.5), 1.0 / (3 * 0.25), 1.0 / (3 * 0.25)};
  const double mx = *std::max_element(raw, raw + 3);
  double worst_w = 0;
  for (int i = 0; i < 3; ++i) {
    worst_w = std::max(worst_w, std::abs(w.weights[static_cast<std::size_t>(i)] - raw[i] / mx));
  }
  const bool ok = worst_tv < 0.005 && worst_p < 1e-12 && worst_w < 1e-12;
  report(7, "PIER distribution fidelity", ok,
         "max TV over 5 size-100 tables x 1e6 draws " + fmt(worst_tv, 5) + " (< 0.005); |P - P_hand| " +
             sci(worst_p) + "; worked weights [" + fmt(w.weights[0]) + ", " +
             fmt(w.weights[1]) + ", " + fmt(w.weights[2]) + "]");
}

void pier_ordering() {
  Rng rng(808);
  const int v = oracles::ordering_violations(rng, 100000);
  report(8, "PIER ordering property", v == 0, "100000 cases, " + std::to_string(v) + " violations");
}

void annotation_reduction() {
  const auto fier_cfg = base();
  auto ann_only = base();
  ann_only.ablate.no_fier_validate = true;
  ann_only.ablate.no_fier_relabel = true;
  const auto& a = runs_for(fier_cfg);
  const auto& b = runs_for(ann_only);
  auto at_match = [](const RunStats& r) {
    for (const auto& e : r.evals) {
      if (e.seen_success >= 0.7) return static_cast<double>(e.composition.annotation);
    }
    return kInf;  // never reached
  };
  int wins = 0;
  std::ostringstream pairs;
  for (int i = 0; i < kSeeds; ++i) {
    const double x = at_match(a[static_cast<std::size_t>(i)]);
    const double y = at_match(b[static_cast<std::size_t>(i)]);
    wins += x < y;
    pairs << (i ? " " : "") << fmt(x, 0) << "/" << fmt(y, 0);
  }
  const double p = sign_test(wins, kSeeds);
  report(9, "FIER annotation reduction", p < 0.05,
         "annotations at seen success >= 0.7, FIER/annotation-only per seed: " + pairs.str() +
             "; wins " + std::to_string(wins) + "/10, sign test p = " + fmt(p, 4));
}

void generalization() {
  const auto full = base();  // relabel_probability 1
  auto no_relabel = base();
  no_relabel.ablate.no_fier_relabel = true;
  auto final_unseen = [](const std::vector<RunStats>& runs) {
    double s = 0;
    for (const auto& r : runs) s += r.evals.back().unseen_success;
    return s / static_cast<double>(runs.size());
  };
  const double x = final_unseen(runs_for(full));
  const double y = final_unseen(runs_for(no_relabel));
  report(10, "FIER generalization", x - y >= 0.1,
         "final unseen success " + fmt(x) + " vs no-relabel " + fmt(y) + " (gap " + fmt(x - y) +
             ", need >= 0.1)");
}

void domain_shift() {
  auto with_pier = base();
  with_pier.task.phases = "seen:1000,unseen:1000,shifted_all";
  with_pier.episodes = 2200;
  auto uniform = with_pier;
  uniform.ablate.no_pier = true;
  const auto& a = runs_for(with_pier);
  const auto& b = runs_for(uniform);
  int wins = 0;
  for (int i = 0; i < kSeeds; ++i) {
    wins += a[static_cast<std::size_t>(i)].shift_window_success >
            b[static_cast<std::size_t>(i)].shift_window_success;
  }
  const double p = sign_test(wins, kSeeds);
  report(11, "PIER under domain shift", p < 0.05,
         "novice success in the 200 episodes after the second shift: PIER " +
             fmt(mean_of(a, &RunStats::shift_window_success)) + " vs uniform " +
             fmt(mean_of(b, &RunStats::shift_window_success)) + "; wins " +
             std::to_string(wins) + "/10, sign test p = " + fmt(p, 4));
}

void numerical_oracles() {
  novice::NoviceConfig cfg;
  cfg.feature_dim = 4;
  cfg.num_goals = 3;
  cfg.hidden = 8;
  cfg.passes = 1;
  double grad = 0;
  for (double dropout : {0.0, 0.4}) {
    cfg.dropout = dropout;
    grad = std::max(grad, oracles::gradient_error(cfg, 1));
  }
  Rng rng(912);
  const double ols = oracles::normalization_error(rng, 500);
  std::vector<double> u;
  std::vector<oracles::FL> f;
  oracles::planted_logistic(rng, 10000, u, f);
  const auto fit = sag::fit_logistic(u, f);
  const bool logit_ok = fit.w >= 8.0 && fit.w <= 12.0 && std::abs(fit.b + 5.0) <= 1.0;
  const bool ok = grad < 1e-4 && ols < 1e-10 && logit_ok;
  report(12, "numerical oracles", ok,
         "gradient rel err " + sci(grad) + " (< 1e-4); OLS err " + sci(ols) +
             " (< 1e-10); planted logistic w = " + fmt(fit.w) + " in [8, 12], b = " + fmt(fit.b) +
             " in [-6, -4]");
}

void determinism() {
  namespace fs = std::filesystem;
  const auto root = fs::temp_directory_path() / "askd_acceptance_det";
  fs::remove_all(root);
  const char* lists[] = {"none", "no_fier_relabel", "no_fier_validate", "no_pier",
                         "no_sag_imputation", "no_sag_normalization"};
  int identical = 0, total = 0;
  for (const char* list : lists) {
    ExperimentConfig c = base();
    c.episodes = 300;
    c.ablate = Ablations::parse(list);
    const auto a = simbench::run_experiment(c, 11);
    const auto b = simbench::run_experiment(c, 11);
    const auto da = root / (std::string(list) + "_a"), db = root / (std::string(list) + "_b");
    simbench::write_run(a, da.string());
    simbench::write_run(b, db.string());
    for (const char* file : {"steps.csv", "summary.json", "dataset.jsonl"}) {
      ++total;
      std::ifstream fa(da / file, std::ios::binary), fb(db / file, std::ios::binary);
      std::stringstream sa, sb;
      sa << fa.rdbuf();
      sb << fb.rdbuf();
      identical += !sa.str().empty() && sa.str() == sb.str();
    }
  }
  fs::remove_all(root);
  report(13, "determinism", identical == total,
         std::to_string(identical) + "/" + std::to_string(total) +
             " artifact pairs byte-identical (none + 5 ablations, 300 episodes)");
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig c = base();
  std::printf("uncertainty score: %s; %d seeds x %d episodes; workers %u\n",
              std::string(novice::to_string(c.uncertainty)).c_str(), kSeeds, c.episodes,
              std::max(1u, std::thread::hardware_concurrency()));
  tracking(1, "sensitivity tracking", sag::GatingMode::kSensitivity, &RunStats::late_sensitivity);
  tracking(2, "specificity tracking", sag::GatingMode::kSpecificity, &RunStats::late_specificity);
  success_floor();
  p_rand_floor();
  ablation_direction();
  threshold_oracle();
  pier_distribution();
  pier_ordering();
  annotation_reduction();
  generalization();
  domain_shift();
  numerical_oracles();
  determinism();
  std::printf("%d of 13 criteria failed; total %.1f s\n", failures, seconds_since(t0));
  return failures;
}
