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

#include "askd/serve.hpp"

#include <charconv>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "askd/error.hpp"

namespace askd::serve {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

json number_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace

std::optional<Feedback> parse_feedback(const json& body, std::vector<FieldError>& errors) {
  const std::size_t before = errors.size();
  if (!body.is_object()) {
    errors.push_back({"body", "must be a JSON object"});
    return std::nullopt;
  }
  Feedback fb;
  if (!body.contains("query_id") || !body["query_id"].is_number_integer()) {
    errors.push_back({"query_id", "required integer"});
  } else {
    fb.query_id = body["query_id"].get<std::int64_t>();
  }
  if (!body.contains("verdict") || !body["verdict"].is_string()) {
    errors.push_back({"verdict", "required: \"validate\" or \"reject\""});
  } else {
    const auto v = body["verdict"].get<std::string>();
    if (v == "validate") fb.response.verdict = fier::Verdict::kValidate;
    else if (v == "reject") fb.response.verdict = fier::Verdict::kReject;
    else errors.push_back({"verdict", "must be \"validate\" or \"reject\""});
  }
  for (const char* key : {"relabel_goal", "annotation_action"}) {
    if (!body.contains(key) || body[key].is_null()) continue;
    if (!body[key].is_number_integer()) {
      errors.push_back({key, "must be an integer or null"});
      continue;
    }
    const int v = body[key].get<int>();
    (std::string_view(key) == "relabel_goal" ? fb.response.relabel_goal
                                             : fb.response.annotation_action) = v;
  }
  if (errors.size() != before) return std::nullopt;
  return fb;
}

std::vector<FieldError> check_feedback(const Feedback& fb, const fier::QueryPresentation& query,
                                       int num_goals) {
  std::vector<FieldError> errors;
  const auto& r = fb.response;
  if (r.verdict == fier::Verdict::kValidate) {
    if (query.annotate_only) errors.push_back({"verdict", "this query needs an annotation"});
    if (r.annotation_action) errors.push_back({"annotation_action", "not allowed with validate"});
    if (r.relabel_goal) errors.push_back({"relabel_goal", "not allowed with validate"});
    return errors;
  }
  if (!r.annotation_action) {
    errors.push_back({"annotation_action", "required with reject"});
  } else if (!query.observation.valid_action(*r.annotation_action)) {
    errors.push_back({"annotation_action", "must index a candidate"});
  }
  if (r.relabel_goal && (*r.relabel_goal < 0 || *r.relabel_goal >= num_goals)) {
    errors.push_back({"relabel_goal", "not a goal of this task"});
  }
  return errors;
}

json feedback_json(const Feedback& fb) {
  json j{{"query_id", fb.query_id}, {"verdict", fier::to_string(fb.response.verdict)}};
  if (fb.response.relabel_goal) j["relabel_goal"] = *fb.response.relabel_goal;
  if (fb.response.annotation_action) j["annotation_action"] = *fb.response.annotation_action;
  return j;
}

json query_json(const fier::QueryPresentation& q, std::int64_t query_id,
                const std::vector<std::string>& goal_names) {
  json candidates = json::array();
  for (int i = 0; i < q.observation.num_candidates(); ++i) {
    json c{{"index", i}};
    c["label"] = i < static_cast<int>(q.candidate_labels.size()) ? json(q.candidate_labels[i])
                                                                 : json(nullptr);
    candidates.push_back(std::move(c));
  }
  return {{"query_id", query_id},
          {"episode", q.episode},
          {"step", q.step},
          {"goal", q.goal},
          {"goal_label", q.goal_label},
          {"goals", goal_names},
          {"candidates", std::move(candidates)},
          {"planned_action", q.planned_action},
          {"u", q.u},
          {"gamma", number_or_null(q.gamma)},
          {"annotate_only", q.annotate_only}};
}

class WsSession;

struct Server::Impl {
  ExperimentConfig config;
  ServeOptions options;
  std::string session_id;
  std::vector<std::string> goal_names;

  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::thread io_thread;
  std::thread run_thread;

  mutable std::mutex m;
  std::condition_variable cv;  // answers and run completion
  struct Pending {
    std::int64_t id;
    fier::QueryPresentation query;
  };
  std::optional<Pending> pending;
  std::optional<fier::TeacherResponse> answer;
  std::int64_t last_query_id = 0;
  bool stopping = false;
  std::string status = "idle";
  std::string error;
  simbench::RollingMetrics metrics;
  std::int64_t episodes_done = 0;
  std::int64_t decisions = 0;
  std::int64_t queries = 0;
  CompositionCounts composition;
  std::string dataset_jsonl;
  std::optional<simbench::RunResult> result;

  std::int64_t next_seq = 0;
  std::deque<std::pair<std::int64_t, std::string>> history;  // last kEventBufferLimit events
  std::vector<std::shared_ptr<WsSession>> subscribers;

  Impl(ExperimentConfig c, ServeOptions o)
      : config(std::move(c)),
        options(std::move(o)),
        metrics(config.sensitivity_window, config.specificity_window, config.episode_window) {}

  // Caller holds m.
  void publish(std::string_view type, json data);
  // Replays buffered events with seq > since, then streams live ones.
  void subscribe(const std::shared_ptr<WsSession>& ws, std::int64_t since);
  void unsubscribe(const WsSession* ws);

  json state_json() const;
  http::response<http::string_body> handle(const http::request<http::string_body>& req);
  std::pair<http::status, json> submit(const std::string& body);
  void accept();
  void run_session();
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, Server::Impl* owner, std::int64_t since)
      : ws_(std::move(socket)), owner_(owner), since_(since) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

  // io thread only
  void send(std::string msg) {
    queue_.push_back(std::move(msg));
    if (!writing_) write_next();
  }

  void close() {
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    owner_->subscribe(shared_from_this(), since_);
    read();
  }

  void read() {
    ws_.async_read(in_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      owner_->unsubscribe(this);
      return;
    }
    in_.consume(in_.size());  // client messages are ignored
    read();
  }

  void write_next() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()),
                    beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      writing_ = false;
      owner_->unsubscribe(this);
      return;
    }
    queue_.pop_front();
    if (queue_.empty()) writing_ = false;
    else write_next();
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer in_;
  std::deque<std::string> queue_;
  bool writing_ = false;
  Server::Impl* owner_;
  std::int64_t since_;
};

void Server::Impl::publish(std::string_view type, json data) {
  const std::int64_t seq = next_seq++;
  json event{{"schema", kWireSchema}, {"seq", seq}, {"type", type}, {"data", std::move(data)}};
  std::string msg = event.dump();
  for (const auto& ws : subscribers) {
    net::post(ioc, [ws, msg] { ws->send(msg); });
  }
  history.emplace_back(seq, std::move(msg));
  if (history.size() > kEventBufferLimit) history.pop_front();
}

void Server::Impl::subscribe(const std::shared_ptr<WsSession>& ws, std::int64_t since) {
  std::lock_guard lk(m);
  for (const auto& [seq, msg] : history) {
    if (seq > since) ws->send(msg);
  }
  subscribers.push_back(ws);
}

void Server::Impl::unsubscribe(const WsSession* ws) {
  std::lock_guard lk(m);
  std::erase_if(subscribers, [ws](const auto& s) { return s.get() == ws; });
}

json Server::Impl::state_json() const {
  json stats{{"sensitivity", number_or_null(metrics.sensitivity())},
             {"specificity", number_or_null(metrics.specificity())},
             {"novice_success", number_or_null(metrics.novice_success())},
             {"system_success", number_or_null(metrics.system_success())},
             {"query_rate", number_or_null(metrics.query_rate())},
             {"episodes", episodes_done},
             {"decisions", decisions},
             {"queries", queries},
             {"composition",
              {{"validation", composition.validation},
               {"annotation", composition.annotation},
               {"relabeled", composition.relabeled},
               {"seed", composition.seed}}}};
  return {{"schema", kWireSchema},
          {"session_id", session_id},
          {"status", status},
          {"pending_query", pending ? query_json(pending->query, pending->id, goal_names)
                                    : json(nullptr)},
          {"stats", std::move(stats)}};
}

std::pair<http::status, json> Server::Impl::submit(const std::string& body) {
  auto errors_json = [](const std::vector<FieldError>& errors) {
    json list = json::array();
    for (const auto& e : errors) list.push_back({{"field", e.field}, {"message", e.message}});
    return json{{"schema", kWireSchema}, {"errors", std::move(list)}};
  };
  const json parsed = json::parse(body, nullptr, false);
  if (parsed.is_discarded()) {
    return {http::status::unprocessable_entity, errors_json({{"body", "invalid JSON"}})};
  }
  std::vector<FieldError> errors;
  const auto fb = parse_feedback(parsed, errors);
  if (!fb) return {http::status::unprocessable_entity, errors_json(errors)};

  std::lock_guard lk(m);
  if (!pending || answer || fb->query_id != pending->id) {
    return {http::status::conflict,
            {{"schema", kWireSchema},
             {"error", "query_id is not the pending query"},
             {"pending_query_id", pending && !answer ? json(pending->id) : json(nullptr)}}};
  }
  errors = check_feedback(*fb, pending->query, config.task.attributes);
  if (!errors.empty()) return {http::status::unprocessable_entity, errors_json(errors)};
  answer = fb->response;
  cv.notify_all();
  return {http::status::ok,
          {{"schema", kWireSchema}, {"status", "accepted"}, {"query_id", fb->query_id}}};
}

http::response<http::string_body> Server::Impl::handle(
    const http::request<http::string_body>& req) {
  auto reply = [&req](http::status status, std::string body,
                      std::string_view type = "application/json") {
    http::response<http::string_body> res{status, req.version()};
    res.set(http::field::server, "askd");
    res.set(http::field::content_type, beast::string_view(type.data(), type.size()));
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(req.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  };
  auto reply_json = [&reply](http::status status, const json& j) {
    return reply(status, j.dump());
  };
  auto error = [&reply_json](http::status status, std::string_view what) {
    return reply_json(status, {{"schema", kWireSchema}, {"error", what}});
  };

  if (req.method() == http::verb::options) {
    auto res = reply(http::status::no_content, "");
    res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    res.set(http::field::access_control_allow_headers, "Content-Type");
    return res;
  }

  std::string_view target(req.target().data(), req.target().size());
  target = target.substr(0, target.find('?'));
  std::vector<std::string_view> parts;
  for (std::size_t pos = 0; pos < target.size();) {
    const auto next = target.find('/', pos);
    const auto part = target.substr(pos, next == std::string_view::npos ? next : next - pos);
    if (!part.empty()) parts.push_back(part);
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }

  if (parts.size() == 1 && parts[0] == "health") {
    if (req.method() != http::verb::get) return error(http::status::method_not_allowed, "GET only");
    std::lock_guard lk(m);
    return reply_json(http::status::ok, {{"schema", kWireSchema},
                                         {"status", "ok"},
                                         {"session_id", session_id},
                                         {"run_status", status},
                                         {"config", config.echo()}});
  }
  if (parts.size() != 3 || parts[0] != "session") return error(http::status::not_found, "no such endpoint");
  if (parts[1] != session_id) return error(http::status::not_found, "unknown session");

  const std::string_view what = parts[2];
  if (what == "state") {
    if (req.method() != http::verb::get) return error(http::status::method_not_allowed, "GET only");
    std::lock_guard lk(m);
    return reply_json(http::status::ok, state_json());
  }
  if (what == "feedback") {
    if (req.method() != http::verb::post) return error(http::status::method_not_allowed, "POST only");
    auto [status_code, body] = submit(req.body());
    return reply_json(status_code, body);
  }
  if (what == "dataset") {
    if (req.method() != http::verb::get) return error(http::status::method_not_allowed, "GET only");
    std::lock_guard lk(m);
    return reply(http::status::ok, dataset_jsonl, "application/x-ndjson");
  }
  if (what == "events") return error(http::status::upgrade_required, "WebSocket endpoint");
  return error(http::status::not_found, "no such endpoint");
}

namespace {

// ?since=<seq> on the events URL; -1 (replay everything buffered) otherwise.
std::int64_t since_param(beast::string_view target) {
  const std::string_view t(target.data(), target.size());
  const auto q = t.find('?');
  if (q == std::string_view::npos) return -1;
  std::string_view query = t.substr(q + 1);
  while (!query.empty()) {
    const auto amp = query.find('&');
    const std::string_view item = query.substr(0, amp);
    if (item.starts_with("since=")) {
      const std::string_view num = item.substr(6);
      std::int64_t v = -1;
      const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
      if (ec == std::errc() && ptr == num.data() + num.size()) return v;
      return -1;
    }
    if (amp == std::string_view::npos) break;
    query.remove_prefix(amp + 1);
  }
  return -1;
}

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, Server::Impl* owner)
      : stream_(std::move(socket)), owner_(owner) {}

  void run() {
    net::dispatch(stream_.get_executor(),
                  beast::bind_front_handler(&HttpSession::read, shared_from_this()));
  }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, req_,
                     beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      std::string_view target(req_.target().data(), req_.target().size());
      target = target.substr(0, target.find('?'));
      if (target == "/session/" + owner_->session_id + "/events") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), owner_, since_param(req_.target()))
            ->run(std::move(req_));
        return;
      }
    }
    auto res = std::make_shared<http::response<http::string_body>>(owner_->handle(req_));
    res_ = res;
    http::async_write(stream_, *res,
                      beast::bind_front_handler(&HttpSession::on_write, shared_from_this(),
                                                res->keep_alive()));
  }

  void on_write(bool keep_alive, beast::error_code ec, std::size_t) {
    if (ec) return;
    res_.reset();
    if (!keep_alive) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    read();
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::shared_ptr<void> res_;
  Server::Impl* owner_;
};

// Blocks the engine on the pending query until the client answers, the
// timeout hands the query to the oracle, or the session stops.
class RemoteTeacher : public fier::TeacherInterface {
 public:
  RemoteTeacher(Server::Impl* owner, fier::TeacherInterface& oracle)
      : owner_(owner), oracle_(&oracle) {}

  fier::TeacherResponse respond(const fier::QueryPresentation& query) override {
    auto& s = *owner_;
    std::unique_lock lk(s.m);
    if (s.stopping) fail(ErrorCode::kProtocol, "session stopped");
    const std::int64_t id = ++s.last_query_id;
    s.pending = Server::Impl::Pending{id, query};
    s.answer.reset();
    s.publish("query_posted", query_json(query, id, s.goal_names));

    auto ready = [&s] { return s.answer.has_value() || s.stopping; };
    if (s.config.fallback == TeacherFallback::kOracleAfterTimeout) {
      s.cv.wait_for(lk, std::chrono::duration<double>(s.config.teacher_timeout), ready);
    } else {
      s.cv.wait(lk, ready);
    }
    fier::TeacherResponse response;
    std::string by = "teacher";
    if (s.answer) {
      response = *s.answer;
    } else if (s.stopping) {
      s.pending.reset();
      fail(ErrorCode::kProtocol, "session stopped while a query was pending");
    } else {
      response = oracle_->respond(query);
      by = "oracle";
    }
    s.pending.reset();
    s.answer.reset();
    Feedback fb{id, response};
    json data = feedback_json(fb);
    data["answered_by"] = by;
    s.publish("query_answered", std::move(data));
    return response;
  }

 private:
  Server::Impl* owner_;
  fier::TeacherInterface* oracle_;
};

}  // namespace

void Server::Impl::accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec == net::error::operation_aborted) return;
    if (!ec) std::make_shared<HttpSession>(std::move(socket), this)->run();
    accept();
  });
}

void Server::Impl::run_session() {
  simbench::RunHooks hooks;
  hooks.make_teacher = [this](fier::TeacherInterface& oracle) {
    return std::make_unique<RemoteTeacher>(this, oracle);
  };
  hooks.on_step = [this](const simbench::StepRow& row) {
    std::lock_guard lk(m);
    metrics.record(row.log.novice_correct, row.log.queried);
    ++decisions;
    queries += row.log.queried;
  };
  hooks.on_episode = [this](std::int64_t episode, const fier::EpisodeResult& er) {
    DemoDataset chunk;
    chunk.append_trajectory(er.trajectory, er.tuple_records);
    std::ostringstream lines;
    chunk.write_jsonl(lines);
    const CompositionCounts c = chunk.composition_counts();
    std::int64_t asked = 0, correct = 0;
    for (const auto& s : er.steps) {
      asked += s.queried;
      correct += s.novice_correct;
    }
    std::lock_guard lk(m);
    if (stopping) fail(ErrorCode::kProtocol, "session stopped");
    dataset_jsonl += lines.str();
    composition.validation += c.validation;
    composition.annotation += c.annotation;
    composition.relabeled += c.relabeled;
    composition.seed += c.seed;
    ++episodes_done;
    publish("episode_done", {{"episode", episode},
                             {"steps", er.steps.size()},
                             {"queries", asked},
                             {"novice_correct", correct},
                             {"aborted", er.aborted}});
  };
  hooks.on_metrics = [this](const simbench::MetricsPoint& p) {
    std::lock_guard lk(m);
    publish("metrics_update", {{"episode", p.episode},
                               {"sensitivity", number_or_null(p.sensitivity)},
                               {"specificity", number_or_null(p.specificity)},
                               {"novice_success", number_or_null(p.novice_success)},
                               {"system_success", number_or_null(p.system_success)},
                               {"query_rate", number_or_null(p.query_rate)}});
  };

  try {
    simbench::RunResult r = simbench::run_experiment(config, options.seed, hooks);
    if (!options.out_dir.empty()) {
      simbench::write_run(r, (std::filesystem::path(options.out_dir) / r.run_id).string());
    }
    std::lock_guard lk(m);
    result.emplace(std::move(r));
    status = "finished";
  } catch (const std::exception& e) {
    std::lock_guard lk(m);
    error = e.what();
    status = stopping ? "stopped" : "failed";
  }
  cv.notify_all();
}

Server::Server(ExperimentConfig config, ServeOptions options)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(options))) {
  if (impl_->options.port < 0 || impl_->options.port > 65535) {
    fail(ErrorCode::kConfig, "port must lie in [0, 65535]");
  }
  impl_->config.validate();
  impl_->session_id = simbench::default_run_id(impl_->config, impl_->options.seed);
  for (int g = 0; g < impl_->config.task.attributes; ++g) {
    impl_->goal_names.push_back(simbench::attribute_name(g));
  }
}

Server::~Server() { stop(); }

void Server::start() {
  auto& s = *impl_;
  beast::error_code ec;
  const auto address = net::ip::make_address(s.options.host, ec);
  if (ec) fail(ErrorCode::kConfig, "bad host address '" + s.options.host + "'");
  const tcp::endpoint endpoint(address, static_cast<unsigned short>(s.options.port));
  s.acceptor.open(endpoint.protocol(), ec);
  if (!ec) s.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) s.acceptor.bind(endpoint, ec);
  if (!ec) s.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) fail(ErrorCode::kIo, "cannot listen on " + s.options.host + ":" +
                                   std::to_string(s.options.port) + ": " + ec.message());
  s.accept();
  s.io_thread = std::thread([&s] { s.ioc.run(); });
  {
    std::lock_guard lk(s.m);
    s.status = "running";
  }
  s.run_thread = std::thread([&s] { s.run_session(); });
}

unsigned short Server::port() const {
  beast::error_code ec;
  const auto ep = impl_->acceptor.local_endpoint(ec);
  return ec ? 0 : ep.port();
}

const std::string& Server::session_id() const { return impl_->session_id; }

bool Server::wait_finished() {
  std::unique_lock lk(impl_->m);
  impl_->cv.wait(lk, [this] { return impl_->status != "running"; });
  return impl_->status == "finished";
}

bool Server::finished() const {
  std::lock_guard lk(impl_->m);
  return impl_->status == "finished";
}

bool Server::done() const {
  std::lock_guard lk(impl_->m);
  return impl_->status != "running" && impl_->status != "idle";
}

std::string Server::run_error() const {
  std::lock_guard lk(impl_->m);
  return impl_->error;
}

const simbench::RunResult& Server::result() const {
  std::lock_guard lk(impl_->m);
  if (!impl_->result) fail(ErrorCode::kInvalidArgument, "run has not finished");
  return *impl_->result;
}

void Server::stop() {
  if (!impl_) return;
  auto& s = *impl_;
  {
    std::lock_guard lk(s.m);
    s.stopping = true;
  }
  s.cv.notify_all();
  if (s.run_thread.joinable()) s.run_thread.join();
  s.ioc.stop();
  if (s.io_thread.joinable()) s.io_thread.join();
  beast::error_code ec;
  s.acceptor.close(ec);
  for (auto& ws : s.subscribers) ws->close();
  s.subscribers.clear();
}

}  // namespace askd::serve
