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

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace askd {

// Teacher feedback attached to a decision: +1 validated, -1 rejected and
// annotated, 0 for anything the teacher did not judge.
enum class Reward : std::int8_t { kFailure = -1, kNeutral = 0, kSuccess = 1 };

inline int to_int(Reward r) noexcept { return static_cast<int>(r); }
Reward reward_from_int(int value);

enum class DemoKind { kValidation, kAnnotation, kRelabeled, kSeed };

std::string_view to_string(DemoKind kind) noexcept;
DemoKind demo_kind_from_string(std::string_view name);

// The reward a tuple of the given kind must carry.
Reward expected_reward(DemoKind kind) noexcept;

// A scene as a row of candidate feature blocks. Actions index the blocks.
class Observation {
 public:
  Observation() = default;
  Observation(int num_candidates, int block_dim);
  Observation(int num_candidates, int block_dim, std::vector<double> data);

  int num_candidates() const noexcept { return num_candidates_; }
  int block_dim() const noexcept { return block_dim_; }

  std::span<const double> block(int candidate) const;
  std::span<double> block(int candidate);
  std::span<const double> data() const noexcept { return data_; }

  bool valid_action(int action) const noexcept {
    return action >= 0 && action < num_candidates_;
  }

  friend bool operator==(const Observation&, const Observation&) = default;

 private:
  int num_candidates_ = 0;
  int block_dim_ = 0;
  std::vector<double> data_;
};

struct DemoTuple {
  Observation observation;
  int action = 0;
  int goal = 0;
  Reward reward = Reward::kNeutral;
  DemoKind kind = DemoKind::kSeed;

  friend bool operator==(const DemoTuple&, const DemoTuple&) = default;
};

// Builds a tuple and enforces the kind/reward pairing and the action range.
DemoTuple make_demo(Observation observation, int action, int goal,
                    DemoKind kind);

// Throws kInvalidArgument when the tuple breaks a construction invariant.
void check_demo(const DemoTuple& tuple);

struct FeedbackRecord {
  double u = 0.0;
  Reward r = Reward::kNeutral;
  std::int64_t k = 0;
  bool queried = false;
  std::int64_t episode = 0;
  std::int64_t step = 0;

  friend bool operator==(const FeedbackRecord&, const FeedbackRecord&) = default;
};

void check_record(const FeedbackRecord& record);

struct CompositionCounts {
  std::size_t validation = 0;
  std::size_t annotation = 0;
  std::size_t relabeled = 0;
  std::size_t seed = 0;

  std::size_t total() const noexcept {
    return validation + annotation + relabeled + seed;
  }
  friend bool operator==(const CompositionCounts&,
                         const CompositionCounts&) = default;
};

// Append-only demonstration store. Position i pairs tuples()[i] with
// records()[i]; that position is the identity replay uses.
class DemoDataset {
 public:
  std::size_t size() const noexcept { return tuples_.size(); }
  bool empty() const noexcept { return tuples_.empty(); }

  const std::vector<DemoTuple>& tuples() const noexcept { return tuples_; }
  const std::vector<FeedbackRecord>& records() const noexcept {
    return records_;
  }

  // Offline tuple with the neutral record (u=0, r=0, k=0).
  void add_seed(DemoTuple tuple);

  void append_trajectory(std::span<const DemoTuple> trajectory,
                         std::span<const FeedbackRecord> records);

  CompositionCounts composition_counts() const noexcept;

  void write_jsonl(std::ostream& out) const;
  static DemoDataset read_jsonl(std::istream& in);

  friend bool operator==(const DemoDataset&, const DemoDataset&) = default;

 private:
  std::vector<DemoTuple> tuples_;
  std::vector<FeedbackRecord> records_;
};

}  // namespace askd
