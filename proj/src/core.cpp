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

#include "askd/core.hpp"

#include <istream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "askd/error.hpp"

namespace askd {

using nlohmann::json;

Reward reward_from_int(int value) {
  if (value < -1 || value > 1) {
    fail(ErrorCode::kInvalidArgument,
         "reward must be -1, 0 or +1, got " + std::to_string(value));
  }
  return static_cast<Reward>(value);
}

std::string_view to_string(DemoKind kind) noexcept {
  switch (kind) {
    case DemoKind::kValidation: return "validation";
    case DemoKind::kAnnotation: return "annotation";
    case DemoKind::kRelabeled: return "relabeled";
    case DemoKind::kSeed: return "seed";
  }
  return "seed";
}

DemoKind demo_kind_from_string(std::string_view name) {
  if (name == "validation") return DemoKind::kValidation;
  if (name == "annotation") return DemoKind::kAnnotation;
  if (name == "relabeled") return DemoKind::kRelabeled;
  if (name == "seed") return DemoKind::kSeed;
  fail(ErrorCode::kSchema, "unknown demonstration kind '" + std::string(name) + "'");
}

Reward expected_reward(DemoKind kind) noexcept {
  switch (kind) {
    case DemoKind::kValidation: return Reward::kSuccess;
    case DemoKind::kAnnotation: return Reward::kFailure;
    default: return Reward::kNeutral;
  }
}

Observation::Observation(int num_candidates, int block_dim)
    : Observation(num_candidates, block_dim,
                  std::vector<double>(static_cast<std::size_t>(
                      num_candidates > 0 && block_dim > 0 ? num_candidates * block_dim : 0))) {}

Observation::Observation(int num_candidates, int block_dim,
                         std::vector<double> data)
    : num_candidates_(num_candidates), block_dim_(block_dim), data_(std::move(data)) {
  if (num_candidates <= 0 || block_dim <= 0) {
    fail(ErrorCode::kInvalidArgument, "observation needs at least one candidate and one feature");
  }
  if (data_.size() != static_cast<std::size_t>(num_candidates) * block_dim) {
    fail(ErrorCode::kInvalidArgument, "observation data does not match its block layout");
  }
}

std::span<const double> Observation::block(int candidate) const {
  if (!valid_action(candidate)) {
    fail(ErrorCode::kInvalidArgument, "candidate index out of range");
  }
  return std::span<const double>(data_).subspan(
      static_cast<std::size_t>(candidate) * block_dim_, block_dim_);
}

std::span<double> Observation::block(int candidate) {
  if (!valid_action(candidate)) {
    fail(ErrorCode::kInvalidArgument, "candidate index out of range");
  }
  return std::span<double>(data_).subspan(
      static_cast<std::size_t>(candidate) * block_dim_, block_dim_);
}

void check_demo(const DemoTuple& tuple) {
  if (tuple.reward != expected_reward(tuple.kind)) {
    fail(ErrorCode::kInvalidArgument,
         std::string(to_string(tuple.kind)) + " tuple carries reward " +
             std::to_string(to_int(tuple.reward)));
  }
  if (!tuple.observation.valid_action(tuple.action)) {
    fail(ErrorCode::kInvalidArgument,
         "action " + std::to_string(tuple.action) + " is not a candidate of the observation");
  }
  if (tuple.goal < 0) fail(ErrorCode::kInvalidArgument, "goal id must be non-negative");
}

DemoTuple make_demo(Observation observation, int action, int goal, DemoKind kind) {
  DemoTuple t{std::move(observation), action, goal, expected_reward(kind), kind};
  check_demo(t);
  return t;
}

void check_record(const FeedbackRecord& record) {
  if (!(record.u >= 0.0 && record.u <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "uncertainty outside [0, 1]");
  }
  if (!record.queried && record.r != Reward::kNeutral) {
    fail(ErrorCode::kInvalidArgument, "unqueried record carries a teacher reward");
  }
  if (record.k < 0) fail(ErrorCode::kInvalidArgument, "negative update count");
}

void DemoDataset::add_seed(DemoTuple tuple) {
  if (tuple.kind != DemoKind::kSeed) {
    fail(ErrorCode::kInvalidArgument, "add_seed expects a seed tuple");
  }
  check_demo(tuple);
  tuples_.push_back(std::move(tuple));
  records_.push_back(FeedbackRecord{});
}

void DemoDataset::append_trajectory(std::span<const DemoTuple> trajectory,
                                    std::span<const FeedbackRecord> records) {
  if (trajectory.size() != records.size()) {
    fail(ErrorCode::kAlignment,
         "trajectory has " + std::to_string(trajectory.size()) + " tuples but " +
             std::to_string(records.size()) + " records");
  }
  std::int64_t last_k = records_.empty() ? 0 : records_.back().k;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    check_demo(trajectory[i]);
    check_record(records[i]);
    if (records[i].k < last_k) {
      fail(ErrorCode::kAlignment, "update counts must be non-decreasing");
    }
    last_k = records[i].k;
  }
  tuples_.insert(tuples_.end(), trajectory.begin(), trajectory.end());
  records_.insert(records_.end(), records.begin(), records.end());
}

CompositionCounts DemoDataset::composition_counts() const noexcept {
  CompositionCounts c;
  for (const auto& t : tuples_) {
    switch (t.kind) {
      case DemoKind::kValidation: ++c.validation; break;
      case DemoKind::kAnnotation: ++c.annotation; break;
      case DemoKind::kRelabeled: ++c.relabeled; break;
      case DemoKind::kSeed: ++c.seed; break;
    }
  }
  return c;
}

void DemoDataset::write_jsonl(std::ostream& out) const {
  for (std::size_t i = 0; i < tuples_.size(); ++i) {
    const auto& t = tuples_[i];
    const auto& rec = records_[i];
    json obs = json::array();
    for (int c = 0; c < t.observation.num_candidates(); ++c) {
      auto b = t.observation.block(c);
      obs.push_back(std::vector<double>(b.begin(), b.end()));
    }
    json line = {{"obs", std::move(obs)},
                 {"action", t.action},
                 {"goal", t.goal},
                 {"reward", to_int(t.reward)},
                 {"kind", to_string(t.kind)},
                 {"u", rec.u},
                 {"r", to_int(rec.r)},
                 {"k", rec.k},
                 {"episode", rec.episode},
                 {"step", rec.step}};
    out << line.dump() << '\n';
  }
}

DemoDataset DemoDataset::read_jsonl(std::istream& in) {
  DemoDataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      const auto& obs = j.at("obs");
      if (!obs.is_array() || obs.empty()) fail(ErrorCode::kSchema, "obs must be a non-empty array");
      const int candidates = static_cast<int>(obs.size());
      const int dim = static_cast<int>(obs.at(0).size());
      std::vector<double> data;
      data.reserve(static_cast<std::size_t>(candidates) * dim);
      for (const auto& block : obs) {
        if (static_cast<int>(block.size()) != dim) fail(ErrorCode::kSchema, "ragged obs blocks");
        for (const auto& v : block) data.push_back(v.get<double>());
      }
      DemoTuple t{Observation(candidates, dim, std::move(data)), j.at("action").get<int>(),
                  j.at("goal").get<int>(), reward_from_int(j.at("reward").get<int>()),
                  demo_kind_from_string(j.at("kind").get<std::string>())};
      check_demo(t);
      FeedbackRecord rec{j.at("u").get<double>(), reward_from_int(j.at("r").get<int>()),
                         j.at("k").get<std::int64_t>(), false, j.at("episode").get<std::int64_t>(),
                         j.at("step").get<std::int64_t>()};
      rec.queried = t.kind == DemoKind::kValidation || t.kind == DemoKind::kAnnotation;
      check_record(rec);
      ds.tuples_.push_back(std::move(t));
      ds.records_.push_back(rec);
    } catch (const json::exception& e) {
      fail(ErrorCode::kSchema, "dataset line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorCode::kSchema, "dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return ds;
}

}  // namespace askd
