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
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "askd/config.hpp"
#include "askd/fier.hpp"
#include "askd/simbench.hpp"

namespace askd::serve {

// Every payload carries this in its "schema" field.
inline constexpr std::string_view kWireSchema = "askd.wire/1";
// Events kept for replay; a client reconnecting to
// /session/<id>/events?since=<seq> gets the buffered events after seq first.
inline constexpr std::size_t kEventBufferLimit = 1000;

struct FieldError {
  std::string field;
  std::string message;
};

struct Feedback {
  std::int64_t query_id = 0;
  fier::TeacherResponse response;
};

// Shape check of a feedback body. Returns nullopt and fills `errors` when a
// field is missing or has the wrong type.
std::optional<Feedback> parse_feedback(const nlohmann::json& body,
                                       std::vector<FieldError>& errors);

// Content rules against the pending query: validate carries nothing else,
// reject needs an annotation indexing a candidate, relabel_goal lies in
// [0, num_goals), annotate-only queries cannot be validated.
std::vector<FieldError> check_feedback(const Feedback& feedback,
                                       const fier::QueryPresentation& query, int num_goals);

nlohmann::json feedback_json(const Feedback& feedback);

nlohmann::json query_json(const fier::QueryPresentation& query, std::int64_t query_id,
                          const std::vector<std::string>& goal_names);

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8089;  // 0 picks a free port
  std::uint64_t seed = 0;
  std::string out_dir;  // run artifacts land in out_dir/<run_id> when set
};

// One session = one experiment run, driven on a background thread, with the
// teacher role served over HTTP and the event stream over WebSocket on the
// same port.
class Server {
 public:
  Server(ExperimentConfig config, ServeOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and starts serving and the run. Throws kIo when binding fails.
  void start();
  unsigned short port() const;
  const std::string& session_id() const;

  // Blocks until the run finishes or is stopped; true when it finished.
  bool wait_finished();
  bool finished() const;
  bool done() const;  // finished, failed or stopped
  // Error text when the run thread failed, empty otherwise.
  std::string run_error() const;
  // Available once finished.
  const simbench::RunResult& result() const;

  void stop();

  struct Impl;  // defined in serve.cpp

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace askd::serve
