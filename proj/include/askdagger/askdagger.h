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

#ifndef ASKDAGGER_ASKDAGGER_H_
#define ASKDAGGER_ASKDAGGER_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ASKD_API __declspec(dllexport)
#else
#define ASKD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum askd_status {
  ASKD_OK = 0,
  ASKD_ERR_INVALID_ARGUMENT = 1,
  ASKD_ERR_CONFIG = 2,
  ASKD_ERR_IO = 3,
  ASKD_ERR_SCHEMA = 4,
  ASKD_ERR_ALIGNMENT = 5,
  ASKD_ERR_PROTOCOL = 6,
  ASKD_ERR_INTERNAL = 7
} askd_status;

typedef struct askd_config askd_config;
typedef struct askd_server askd_server;

/* Message of the last failed call on this thread; "" when none. */
ASKD_API const char* askd_last_error(void);
ASKD_API const char* askd_version(void);

/* Strings returned through char** outputs are released with askd_free. */
ASKD_API void askd_free(void* p);

ASKD_API askd_status askd_config_create(askd_config** out);
ASKD_API askd_status askd_config_load(const char* path, askd_config** out);
ASKD_API askd_status askd_config_parse(const char* text, askd_config** out);
ASKD_API askd_status askd_config_clone(const askd_config* config, askd_config** out);
ASKD_API void askd_config_destroy(askd_config* config);

/* Keys are "section.key", e.g. "gating.sigma_des". */
ASKD_API askd_status askd_config_set(askd_config* config, const char* key, const char* value);
ASKD_API askd_status askd_config_get(const askd_config* config, const char* key, char** value);
/* Full effective configuration in the file format. */
ASKD_API askd_status askd_config_echo(const askd_config* config, char** text);
/* Hard errors fail with ASKD_ERR_CONFIG; soft warnings come back one per
   line (empty string when none). */
ASKD_API askd_status askd_config_validate(const askd_config* config, char** warnings);

/* Runs one seed and writes its artifacts into out_dir/<run_id>. The run
   directory path is returned through run_dir when non-null. */
ASKD_API askd_status askd_run(const askd_config* config, uint64_t seed, const char* out_dir,
                              char** run_dir);

/* Aggregates run directories into report.csv, series.csv and series.dat. */
ASKD_API askd_status askd_report(const char* const* run_dirs, size_t count,
                                 const char* out_dir);

/* Session service for one run with a remote teacher. port 0 picks a free
   port; out_dir may be NULL to skip artifacts. */
ASKD_API askd_status askd_server_create(const askd_config* config, uint64_t seed,
                                        const char* host, int port, const char* out_dir,
                                        askd_server** out);
ASKD_API askd_status askd_server_start(askd_server* server);
ASKD_API int askd_server_port(const askd_server* server);
ASKD_API const char* askd_server_session_id(const askd_server* server);
/* Non-zero once the run has finished or failed. */
ASKD_API int askd_server_done(const askd_server* server);
/* Blocks until the run ends; fails when the run did not finish. */
ASKD_API askd_status askd_server_wait(askd_server* server);
ASKD_API askd_status askd_server_stop(askd_server* server);
ASKD_API void askd_server_destroy(askd_server* server);

#ifdef __cplusplus
}
#endif

#endif  // ASKDAGGER_ASKDAGGER_H_
