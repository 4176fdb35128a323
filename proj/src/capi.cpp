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

#include "askdagger/askdagger.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include "askd/config.hpp"
#include "askd/error.hpp"
#include "askd/report.hpp"
#include "askd/serve.hpp"
#include "askd/simbench.hpp"

struct askd_config {
  askd::ExperimentConfig config;
};

struct askd_server {
  std::unique_ptr<askd::serve::Server> server;
};

namespace {

thread_local std::string last_error;

askd_status status_of(askd::ErrorCode code) { return static_cast<askd_status>(code); }

template <class F>
askd_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return ASKD_OK;
  } catch (const askd::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return ASKD_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return ASKD_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void require(bool ok, const char* what) {
  if (!ok) askd::fail(askd::ErrorCode::kInvalidArgument, what);
}

}  // namespace

extern "C" {

const char* askd_last_error(void) { return last_error.c_str(); }

const char* askd_version(void) { return "0.1.0"; }

void askd_free(void* p) { std::free(p); }

askd_status askd_config_create(askd_config** out) {
  return guarded([&] {
    require(out, "out is null");
    *out = new askd_config{};
  });
}

askd_status askd_config_load(const char* path, askd_config** out) {
  return guarded([&] {
    require(path && out, "null argument");
    auto c = std::make_unique<askd_config>();
    c->config = askd::ExperimentConfig::load_file(path);
    *out = c.release();
  });
}

askd_status askd_config_parse(const char* text, askd_config** out) {
  return guarded([&] {
    require(text && out, "null argument");
    auto c = std::make_unique<askd_config>();
    c->config = askd::ExperimentConfig::parse(text);
    *out = c.release();
  });
}

askd_status askd_config_clone(const askd_config* config, askd_config** out) {
  return guarded([&] {
    require(config && out, "null argument");
    *out = new askd_config{config->config};
  });
}

void askd_config_destroy(askd_config* config) { delete config; }

askd_status askd_config_set(askd_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config && key && value, "null argument");
    config->config.set(key, value);
  });
}

askd_status askd_config_get(const askd_config* config, const char* key, char** value) {
  return guarded([&] {
    require(config && key && value, "null argument");
    *value = dup_string(config->config.get(key));
  });
}

askd_status askd_config_echo(const askd_config* config, char** text) {
  return guarded([&] {
    require(config && text, "null argument");
    *text = dup_string(config->config.echo());
  });
}

askd_status askd_config_validate(const askd_config* config, char** warnings) {
  return guarded([&] {
    require(config, "config is null");
    std::string joined;
    for (const auto& w : config->config.validate()) joined += w + "\n";
    if (warnings) *warnings = dup_string(joined);
  });
}

askd_status askd_run(const askd_config* config, uint64_t seed, const char* out_dir,
                     char** run_dir) {
  return guarded([&] {
    require(config && out_dir, "null argument");
    const auto result = askd::simbench::run_experiment(config->config, seed);
    const std::string dir = (std::filesystem::path(out_dir) / result.run_id).string();
    askd::simbench::write_run(result, dir);
    if (run_dir) *run_dir = dup_string(dir);
  });
}

askd_status askd_report(const char* const* run_dirs, size_t count, const char* out_dir) {
  return guarded([&] {
    require(run_dirs && out_dir, "null argument");
    std::vector<std::string> dirs;
    for (size_t i = 0; i < count; ++i) {
      require(run_dirs[i], "null run directory");
      dirs.emplace_back(run_dirs[i]);
    }
    askd::report::write_report(askd::report::build_report(dirs), out_dir);
  });
}

askd_status askd_server_create(const askd_config* config, uint64_t seed, const char* host,
                               int port, const char* out_dir, askd_server** out) {
  return guarded([&] {
    require(config && out, "null argument");
    askd::serve::ServeOptions options;
    if (host) options.host = host;
    options.port = port;
    options.seed = seed;
    if (out_dir) options.out_dir = out_dir;
    auto s = std::make_unique<askd_server>();
    s->server = std::make_unique<askd::serve::Server>(config->config, options);
    *out = s.release();
  });
}

askd_status askd_server_start(askd_server* server) {
  return guarded([&] {
    require(server, "server is null");
    server->server->start();
  });
}

int askd_server_port(const askd_server* server) {
  return server ? server->server->port() : -1;
}

const char* askd_server_session_id(const askd_server* server) {
  return server ? server->server->session_id().c_str() : "";
}

int askd_server_done(const askd_server* server) {
  return server && server->server->done() ? 1 : 0;
}

askd_status askd_server_wait(askd_server* server) {
  return guarded([&] {
    require(server, "server is null");
    if (!server->server->wait_finished()) {
      askd::fail(askd::ErrorCode::kProtocol, "run did not finish: " + server->server->run_error());
    }
  });
}

askd_status askd_server_stop(askd_server* server) {
  return guarded([&] {
    require(server, "server is null");
    server->server->stop();
  });
}

void askd_server_destroy(askd_server* server) { delete server; }

}  // extern "C"
