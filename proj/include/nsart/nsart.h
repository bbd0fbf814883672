// Copyright 2026 The nsart Authors
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

/* C interface to the nsart library.
 *
 * Every fallible call returns an nsart_status. On failure the message is
 * available from nsart_last_error() on the same thread until the next call.
 * Strings handed out through char** parameters are owned by the caller and
 * released with nsart_string_free(). Objects are opaque and freed with their
 * matching *_free function; passing NULL to any *_free is a no-op.
 */
#ifndef NSART_NSART_H
#define NSART_NSART_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define NSART_API __declspec(dllexport)
#else
#define NSART_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nsart_status {
  NSART_OK = 0,
  NSART_ERR_PARAMETER = 1, /* out-of-range or malformed argument */
  NSART_ERR_SHAPE = 2,
  NSART_ERR_IO = 3,
  NSART_ERR_FORMAT = 4, /* file exists but cannot be decoded */
  NSART_ERR_NUMERIC = 5, /* NaN or Inf during training */
  NSART_ERR_DATA = 6, /* cross-file references do not resolve */
  NSART_ERR_STATE = 7,
  NSART_ERR_INTERNAL = 8
} nsart_status;

NSART_API const char* nsart_version(void);
NSART_API const char* nsart_status_name(nsart_status status);
/* Message for the last failed call on this thread, "" if none. */
NSART_API const char* nsart_last_error(void);
NSART_API void nsart_string_free(char* s);

/* Receives one JSON object per line, without the trailing newline. */
typedef void (*nsart_log_fn)(const char* json_line, void* user);

/* ---- palettes and symbolic pieces ---------------------------------------- */

typedef struct nsart_palettes nsart_palettes;

NSART_API nsart_status nsart_palettes_default(nsart_palettes** out);
NSART_API nsart_status nsart_palettes_load(const char* path, nsart_palettes** out);
NSART_API int nsart_palettes_count(const nsart_palettes* palettes);
NSART_API nsart_status nsart_palettes_to_json(const nsart_palettes* palettes, char** out_json);
NSART_API void nsart_palettes_free(nsart_palettes* palettes);

/* layout_json may be NULL for the default layout. */
NSART_API nsart_status nsart_symbolic_render_png(const nsart_palettes* palettes, const char* layout_json,
                                                 int palette_id, int num_colors, uint64_t seed, int canvas_px,
                                                 const char* out_png);

/* Renders every palette x colour-count cell samples_per_cell times into
 * out_dir. workers = 0 uses all cores. out_summary_json (optional) receives
 * {"images": n, "manifest": path}. */
NSART_API nsart_status nsart_dataset_build(const nsart_palettes* palettes, const char* layout_json,
                                           int samples_per_cell, int canvas_px, unsigned workers,
                                           const char* out_dir, char** out_summary_json);

/* ---- generator model ---------------------------------------------------- */

typedef struct nsart_model nsart_model;

/* overrides_json (may be NULL) is merged over the desk configuration, or
 * over the large configuration when paper_scale != 0. nsart_config_resolve
 * only reports the result: {"config": {...}, "schedule": [{"stage",
 * "first_iteration", "resolution", "batch"}]}; nsart_model_create also
 * draws fresh weights. */
NSART_API nsart_status nsart_config_resolve(const char* overrides_json, int paper_scale, char** out_json);
NSART_API nsart_status nsart_model_create(const char* overrides_json, int paper_scale, nsart_model** out);
NSART_API nsart_status nsart_model_load(const char* checkpoint, nsart_model** out);
NSART_API nsart_status nsart_model_save(const nsart_model* model, const char* checkpoint);
NSART_API void nsart_model_free(nsart_model* model);

/* {"config": {...}, "iteration": n, "parameters": n, "resolution": r} */
NSART_API nsart_status nsart_model_info(const nsart_model* model, char** out_json);
NSART_API int nsart_model_resolution(const nsart_model* model);
NSART_API int64_t nsart_model_iteration(const nsart_model* model);
NSART_API nsart_status nsart_model_set_total_iters(nsart_model* model, int64_t total_iters);

/* Trains until the configured total iteration count on an evenly spaced
 * subset of `limit` manifest entries (0 = all). checkpoint and sample_dir may
 * be NULL. */
NSART_API nsart_status nsart_model_train(nsart_model* model, const char* manifest, size_t limit,
                                         const char* checkpoint, int64_t checkpoint_every, const char* sample_dir,
                                         int64_t sample_every, nsart_log_fn log, void* user);

/* Raw RGB output: rgb must hold resolution * resolution * 3 bytes. */
NSART_API nsart_status nsart_model_sample(const nsart_model* model, uint64_t seed, uint8_t* rgb, size_t rgb_size);
NSART_API nsart_status nsart_model_interpolate(const nsart_model* model, uint64_t seed1, uint64_t seed2, float alpha,
                                               uint8_t* rgb, size_t rgb_size);
NSART_API nsart_status nsart_model_sample_png(const nsart_model* model, uint64_t seed, const char* out_png);
NSART_API nsart_status nsart_model_interpolate_png(const nsart_model* model, uint64_t seed1, uint64_t seed2,
                                                   float alpha, const char* out_png);
NSART_API nsart_status nsart_model_grid_png(const nsart_model* model, uint64_t first_seed, int side,
                                            const char* out_png);

/* ---- evaluation --------------------------------------------------------- */

/* Each writes out_dir/pool.jsonl (plus images for the generated kinds) and
 * optionally returns {"kind": k, "count": n, "pool": path}. */
NSART_API nsart_status nsart_pool_build_symbolic(const char* manifest, size_t limit, const char* out_dir,
                                                 char** out_summary_json);
NSART_API nsart_status nsart_pool_build_nsg(const nsart_model* model, size_t n, uint64_t seed, const char* out_dir,
                                            char** out_summary_json);
NSART_API nsart_status nsart_pool_build_nsi(const nsart_model* model, size_t n, uint64_t seed, const char* out_dir,
                                            char** out_summary_json);

/* Nearest-neighbour pairs between two pools, written as a PairSet JSON file. */
NSART_API nsart_status nsart_pairs_build(const char* pool_a, const char* pool_b, size_t n_pairs, uint64_t seed,
                                         const char* out_json);

/* per_kind_pair pairs for each of the three kind pairings, exported as a
 * study bundle (pair images, pairs.json, answer_key.json) under out_dir. */
NSART_API nsart_status nsart_study_export(const char* symbolic_pool, const char* nsg_pool, const char* nsi_pool,
                                          size_t per_kind_pair, uint64_t seed, const char* out_dir);

/* Colour-count check of every response. passed_jsonl (may be NULL) receives
 * the responses that pass. out_json: {"total", "passed", "failed",
 * "results": [{"line", "pair", "worker", "result"}]}. */
NSART_API nsart_status nsart_qc(const char* answer_key, const char* responses, const char* passed_jsonl,
                                char** out_json);

/* Win-ratio report. Either output pointer may be NULL. */
NSART_API nsart_status nsart_stats_report(const char* answer_key, const char* responses, char** out_json,
                                          char** out_table);

NSART_API nsart_status nsart_significance_band(uint64_t n, double confidence, double* lo, double* hi);

/* ---- server ------------------------------------------------------------- */

typedef struct nsart_server nsart_server;

/* config_json keys (all optional): host, port, checkpoint, palettes,
 * data_dir, static_dir, cache_size, canvas_px. log receives one line per
 * request when non-NULL. */
NSART_API nsart_status nsart_server_create(const char* config_json, nsart_log_fn log, void* user,
                                           nsart_server** out);
/* Binds the listening socket; *port receives the bound port. */
NSART_API nsart_status nsart_server_bind(nsart_server* server, int* port);
/* Blocks until nsart_server_stop is called from another thread. */
NSART_API nsart_status nsart_server_serve(nsart_server* server);
NSART_API void nsart_server_stop(nsart_server* server);
NSART_API void nsart_server_free(nsart_server* server);

#ifdef __cplusplus
}
#endif

#endif /* NSART_NSART_H */
