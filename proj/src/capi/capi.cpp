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

#include <cstdlib>
#include <cstring>
#include <memory>
#include <set>
#include <mutex>
#include <ostream>
#include <sstream>
#include <streambuf>

#include "common/fs.hpp"
#include "evalkit/evalkit.hpp"
#include "json.hpp"
#include "nsart/nsart.h"
#include "progan/progan.hpp"
#include "server/server.hpp"
#include "symgen/symgen.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

struct nsart_palettes {
  nsart::symgen::PaletteTable table;
};

struct nsart_model {
  nsart::progan::GanState state;
};

namespace {

// Forwards each complete line to a log callback.
class LineBuf : public std::streambuf {
 public:
  LineBuf(nsart_log_fn fn, void* user) : fn_(fn), user_(user) {}
  ~LineBuf() override { flush_line(); }

 protected:
  int_type overflow(int_type ch) override {
    if (ch == traits_type::eof()) return traits_type::not_eof(ch);
    std::lock_guard lock(mutex_);
    if (ch == '\n') {
      flush_line();
    } else {
      line_.push_back(static_cast<char>(ch));
    }
    return ch;
  }

 private:
  void flush_line() {
    if (!line_.empty() && fn_) fn_(line_.c_str(), user_);
    line_.clear();
  }
  nsart_log_fn fn_;
  void* user_;
  std::string line_;
  std::mutex mutex_;
};

}  // namespace

struct nsart_server {
  std::unique_ptr<LineBuf> buf;
  std::unique_ptr<std::ostream> log;
  std::unique_ptr<nsart::server::StudioServer> server;
};

namespace {

thread_local std::string g_last_error;

nsart_status status_of(nsart::ErrorKind kind) {
  switch (kind) {
    case nsart::ErrorKind::Parameter: return NSART_ERR_PARAMETER;
    case nsart::ErrorKind::Shape: return NSART_ERR_SHAPE;
    case nsart::ErrorKind::Io: return NSART_ERR_IO;
    case nsart::ErrorKind::Format: return NSART_ERR_FORMAT;
    case nsart::ErrorKind::Numeric: return NSART_ERR_NUMERIC;
    case nsart::ErrorKind::Data: return NSART_ERR_DATA;
    case nsart::ErrorKind::State: return NSART_ERR_STATE;
  }
  return NSART_ERR_INTERNAL;
}

template <typename F>
nsart_status guard(F&& fn) noexcept {
  g_last_error.clear();
  try {
    fn();
    return NSART_OK;
  } catch (const nsart::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return NSART_ERR_FORMAT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return NSART_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NSART_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return NSART_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) nsart::fail(nsart::ErrorKind::Parameter, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void give(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

json parse_json(const char* text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    nsart::fail(nsart::ErrorKind::Format, std::string(what) + ": " + e.what());
  }
}

nsart::symgen::LayoutParams layout_of(const char* layout_json) {
  if (!layout_json) return nsart::symgen::LayoutParams::defaults();
  return nsart::symgen::LayoutParams::from_json(parse_json(layout_json, "layout"));
}

nsart::progan::GanConfig resolve_config(const char* overrides_json, int paper_scale) {
  using nsart::progan::GanConfig;
  json base = (paper_scale ? GanConfig::paper_scale() : GanConfig::desk()).to_json();
  if (overrides_json) {
    const json patch = parse_json(overrides_json, "config");
    nsart::require(patch.is_object(), nsart::ErrorKind::Format, "config overrides must be a JSON object");
    // Whole-value replacement per key: a partial batch_schedule is not merged.
    for (const auto& [k, v] : patch.items()) base[k] = v;
  }
  return GanConfig::from_json(base);
}

json schedule_json(const nsart::progan::GanConfig& c) {
  json out = json::array();
  for (int s = 0; s <= c.max_stage(); ++s) {
    const int res = c.resolution(s);
    out.push_back({{"stage", s},
                   {"first_iteration", static_cast<std::int64_t>(s) * c.iters_per_stage},
                   {"resolution", res},
                   {"batch", c.batch_size(s)}});
  }
  return out;
}

fs::path pool_file(const char* path) {
  need(path, "pool path");
  fs::path p(path);
  if (fs::is_directory(p)) p /= "pool.jsonl";
  return p;
}

json pool_summary(const nsart::evalkit::Pool& pool, const fs::path& file) {
  return {{"kind", nsart::evalkit::kind_name(pool.kind())}, {"count", pool.size()}, {"pool", file.string()}};
}

nsart::evalkit::PairSet load_pairs(const char* path) {
  need(path, "answer key");
  return nsart::evalkit::PairSet::from_json(parse_json(nsart::read_text(path).c_str(), path));
}

void copy_rgb(const nsart::ImageBuffer& img, uint8_t* rgb, size_t size) {
  need(rgb, "rgb");
  const std::size_t want = static_cast<std::size_t>(img.width()) * img.height() * 3;
  nsart::require(size >= want, nsart::ErrorKind::Parameter,
                 "rgb buffer holds " + std::to_string(size) + " bytes, need " + std::to_string(want));
  std::memcpy(rgb, img.bytes().data(), want);
}

}  // namespace

extern "C" {

const char* nsart_version(void) { return NSART_VERSION_STRING; }

const char* nsart_status_name(nsart_status status) {
  switch (status) {
    case NSART_OK: return "ok";
    case NSART_ERR_PARAMETER: return "parameter";
    case NSART_ERR_SHAPE: return "shape";
    case NSART_ERR_IO: return "io";
    case NSART_ERR_FORMAT: return "format";
    case NSART_ERR_NUMERIC: return "numeric";
    case NSART_ERR_DATA: return "data";
    case NSART_ERR_STATE: return "state";
    case NSART_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* nsart_last_error(void) { return g_last_error.c_str(); }

void nsart_string_free(char* s) { std::free(s); }

// ---- palettes ----------------------------------------------------------------

nsart_status nsart_palettes_default(nsart_palettes** out) {
  return guard([&] {
    need(out, "out");
    *out = new nsart_palettes{nsart::symgen::PaletteTable::defaults()};
  });
}

nsart_status nsart_palettes_load(const char* path, nsart_palettes** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new nsart_palettes{nsart::symgen::PaletteTable::load(path)};
  });
}

int nsart_palettes_count(const nsart_palettes* palettes) { return palettes ? palettes->table.size() : 0; }

nsart_status nsart_palettes_to_json(const nsart_palettes* palettes, char** out_json) {
  return guard([&] {
    need(palettes, "palettes");
    need(out_json, "out_json");
    give(out_json, palettes->table.to_json().dump());
  });
}

void nsart_palettes_free(nsart_palettes* palettes) { delete palettes; }

nsart_status nsart_symbolic_render_png(const nsart_palettes* palettes, const char* layout_json, int palette_id,
                                       int num_colors, uint64_t seed, int canvas_px, const char* out_png) {
  return guard([&] {
    need(palettes, "palettes");
    need(out_png, "out_png");
    nsart::symgen::SymbolicSpec spec;
    spec.palette_id = palette_id;
    spec.num_colors = num_colors;
    spec.seed = seed;
    spec.layout = layout_of(layout_json);
    spec.canvas_px = canvas_px;
    nsart::write_png(out_png, nsart::symgen::generate_piece(spec, palettes->table));
  });
}

nsart_status nsart_dataset_build(const nsart_palettes* palettes, const char* layout_json, int samples_per_cell,
                                 int canvas_px, unsigned workers, const char* out_dir, char** out_summary_json) {
  return guard([&] {
    need(palettes, "palettes");
    need(out_dir, "out_dir");
    const auto m = nsart::symgen::build_dataset(palettes->table, layout_of(layout_json), samples_per_cell, canvas_px,
                                                out_dir, workers);
    give(out_summary_json,
         json{{"images", m.entries.size()}, {"manifest", (fs::path(out_dir) / "manifest.jsonl").string()}}.dump());
  });
}

// ---- model -------------------------------------------------------------------

nsart_status nsart_config_resolve(const char* overrides_json, int paper_scale, char** out_json) {
  return guard([&] {
    need(out_json, "out_json");
    const auto c = resolve_config(overrides_json, paper_scale);
    give(out_json, json{{"config", c.to_json()}, {"schedule", schedule_json(c)}}.dump());
  });
}

nsart_status nsart_model_create(const char* overrides_json, int paper_scale, nsart_model** out) {
  return guard([&] {
    need(out, "out");
    *out = new nsart_model{nsart::progan::GanState::initialize(resolve_config(overrides_json, paper_scale))};
  });
}

nsart_status nsart_model_load(const char* checkpoint, nsart_model** out) {
  return guard([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    *out = new nsart_model{nsart::progan::load_checkpoint(checkpoint)};
  });
}

nsart_status nsart_model_save(const nsart_model* model, const char* checkpoint) {
  return guard([&] {
    need(model, "model");
    need(checkpoint, "checkpoint");
    nsart::progan::save_checkpoint(checkpoint, model->state);
  });
}

void nsart_model_free(nsart_model* model) { delete model; }

nsart_status nsart_model_info(const nsart_model* model, char** out_json) {
  return guard([&] {
    need(model, "model");
    need(out_json, "out_json");
    const auto& s = model->state;
    give(out_json, json{{"config", s.config.to_json()},
                        {"iteration", s.iteration},
                        {"parameters", s.generator.params().scalar_count() + s.discriminator.params().scalar_count()},
                        {"resolution", s.config.final_resolution}}
                       .dump());
  });
}

int nsart_model_resolution(const nsart_model* model) { return model ? model->state.config.final_resolution : 0; }

int64_t nsart_model_iteration(const nsart_model* model) { return model ? model->state.iteration : 0; }

nsart_status nsart_model_set_total_iters(nsart_model* model, int64_t total_iters) {
  return guard([&] {
    need(model, "model");
    nsart::require(total_iters >= 0, nsart::ErrorKind::Parameter, "total_iters must be non-negative");
    model->state.config.total_iters = total_iters;
  });
}

nsart_status nsart_model_train(nsart_model* model, const char* manifest, size_t limit, const char* checkpoint,
                               int64_t checkpoint_every, const char* sample_dir, int64_t sample_every,
                               nsart_log_fn log, void* user) {
  return guard([&] {
    need(model, "model");
    need(manifest, "manifest");
    const auto data = nsart::progan::TrainingSet::from_manifest(manifest, limit, model->state.config);
    LineBuf buf(log, user);
    std::ostream os(&buf);
    nsart::progan::TrainOptions opts;
    opts.checkpoint_every = checkpoint_every;
    opts.sample_every = sample_every;
    if (checkpoint) opts.checkpoint_path = checkpoint;
    if (sample_dir) opts.sample_dir = sample_dir;
    if (log) opts.log = &os;
    nsart::progan::train(model->state, data, opts);
  });
}

nsart_status nsart_model_sample(const nsart_model* model, uint64_t seed, uint8_t* rgb, size_t rgb_size) {
  return guard([&] {
    need(model, "model");
    copy_rgb(nsart::progan::sample(model->state, seed), rgb, rgb_size);
  });
}

nsart_status nsart_model_interpolate(const nsart_model* model, uint64_t seed1, uint64_t seed2, float alpha,
                                     uint8_t* rgb, size_t rgb_size) {
  return guard([&] {
    need(model, "model");
    copy_rgb(nsart::progan::interpolate(model->state, seed1, seed2, alpha), rgb, rgb_size);
  });
}

nsart_status nsart_model_sample_png(const nsart_model* model, uint64_t seed, const char* out_png) {
  return guard([&] {
    need(model, "model");
    need(out_png, "out_png");
    nsart::write_png(out_png, nsart::progan::sample(model->state, seed));
  });
}

nsart_status nsart_model_interpolate_png(const nsart_model* model, uint64_t seed1, uint64_t seed2, float alpha,
                                         const char* out_png) {
  return guard([&] {
    need(model, "model");
    need(out_png, "out_png");
    nsart::write_png(out_png, nsart::progan::interpolate(model->state, seed1, seed2, alpha));
  });
}

nsart_status nsart_model_grid_png(const nsart_model* model, uint64_t first_seed, int side, const char* out_png) {
  return guard([&] {
    need(model, "model");
    need(out_png, "out_png");
    nsart::write_png(out_png, nsart::progan::sample_grid(model->state, first_seed, side));
  });
}

// ---- evaluation --------------------------------------------------------------

nsart_status nsart_pool_build_symbolic(const char* manifest, size_t limit, const char* out_dir,
                                       char** out_summary_json) {
  return guard([&] {
    need(manifest, "manifest");
    need(out_dir, "out_dir");
    const auto pool = nsart::evalkit::symbolic_pool(manifest, limit);
    fs::create_directories(out_dir);
    const fs::path file = fs::path(out_dir) / "pool.jsonl";
    pool.save(file);
    give(out_summary_json, pool_summary(pool, file).dump());
  });
}

nsart_status nsart_pool_build_nsg(const nsart_model* model, size_t n, uint64_t seed, const char* out_dir,
                                  char** out_summary_json) {
  return guard([&] {
    need(model, "model");
    need(out_dir, "out_dir");
    const auto pool = nsart::evalkit::build_nsg_pool(model->state, n, seed, out_dir);
    give(out_summary_json, pool_summary(pool, fs::path(out_dir) / "pool.jsonl").dump());
  });
}

nsart_status nsart_pool_build_nsi(const nsart_model* model, size_t n, uint64_t seed, const char* out_dir,
                                  char** out_summary_json) {
  return guard([&] {
    need(model, "model");
    need(out_dir, "out_dir");
    const auto pool = nsart::evalkit::build_nsi_pool(model->state, n, seed, out_dir);
    give(out_summary_json, pool_summary(pool, fs::path(out_dir) / "pool.jsonl").dump());
  });
}

nsart_status nsart_pairs_build(const char* pool_a, const char* pool_b, size_t n_pairs, uint64_t seed,
                               const char* out_json) {
  return guard([&] {
    need(out_json, "out_json");
    const auto a = nsart::evalkit::Pool::load(pool_file(pool_a));
    const auto b = nsart::evalkit::Pool::load(pool_file(pool_b));
    const auto pairs = nsart::evalkit::build_pairs(a, b, n_pairs, seed);
    nsart::write_text_atomic(out_json, pairs.to_json().dump(2) + "\n");
  });
}

nsart_status nsart_study_export(const char* symbolic_pool, const char* nsg_pool, const char* nsi_pool,
                                size_t per_kind_pair, uint64_t seed, const char* out_dir) {
  return guard([&] {
    need(out_dir, "out_dir");
    const auto sym = nsart::evalkit::Pool::load(pool_file(symbolic_pool));
    const auto nsg = nsart::evalkit::Pool::load(pool_file(nsg_pool));
    const auto nsi = nsart::evalkit::Pool::load(pool_file(nsi_pool));
    const auto pairs = nsart::evalkit::build_study(sym, nsg, nsi, per_kind_pair, seed);
    nsart::evalkit::export_study(pairs, out_dir, sym, nsg, nsi);
  });
}

nsart_status nsart_qc(const char* answer_key, const char* responses, const char* passed_jsonl, char** out_json) {
  return guard([&] {
    need(responses, "responses");
    const auto pairs = load_pairs(answer_key);
    const auto records = nsart::evalkit::load_responses(responses);
    json results = json::array();
    std::string kept;
    std::size_t passed = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const bool ok = nsart::evalkit::qc_check(records[i], pairs) == nsart::evalkit::QcResult::Pass;
      results.push_back(
          {{"index", i}, {"pair", records[i].pair}, {"worker", records[i].worker}, {"result", ok ? "pass" : "fail"}});
      if (ok) {
        ++passed;
        kept += records[i].to_json().dump() + "\n";
      }
    }
    if (passed_jsonl) nsart::write_text_atomic(passed_jsonl, kept);
    give(out_json, json{{"total", records.size()},
                        {"passed", passed},
                        {"failed", records.size() - passed},
                        {"results", results}}
                       .dump());
  });
}

nsart_status nsart_stats_report(const char* answer_key, const char* responses, char** out_json, char** out_table) {
  return guard([&] {
    need(responses, "responses");
    const auto pairs = load_pairs(answer_key);
    const auto records = nsart::evalkit::load_responses(responses);
    const auto report = nsart::evalkit::win_ratio_report(records, pairs);
    give(out_json, report.to_json().dump());
    give(out_table, report.to_table());
  });
}

nsart_status nsart_significance_band(uint64_t n, double confidence, double* lo, double* hi) {
  return guard([&] {
    need(lo, "lo");
    need(hi, "hi");
    const auto band = nsart::evalkit::significance_band(n, confidence);
    *lo = band.lo;
    *hi = band.hi;
  });
}

// ---- server ------------------------------------------------------------------

nsart_status nsart_server_create(const char* config_json, nsart_log_fn log, void* user, nsart_server** out) {
  return guard([&] {
    need(out, "out");
    nsart::server::ServerConfig cfg;
    if (config_json) {
      const json j = parse_json(config_json, "server config");
      nsart::require(j.is_object(), nsart::ErrorKind::Format, "server config must be a JSON object");
      static const std::set<std::string> known = {"host",       "port",       "checkpoint", "palettes",
                                                  "data_dir",   "static_dir", "cache_size", "canvas_px"};
      for (const auto& [k, v] : j.items())
        nsart::require(known.count(k) > 0, nsart::ErrorKind::Parameter, "unknown server setting '" + k + "'");
      cfg.host = j.value("host", cfg.host);
      cfg.port = j.value("port", cfg.port);
      cfg.checkpoint = j.value("checkpoint", std::string());
      cfg.palettes = j.value("palettes", std::string());
      cfg.data_dir = j.value("data_dir", cfg.data_dir.string());
      cfg.static_dir = j.value("static_dir", std::string());
      cfg.cache_size = j.value("cache_size", cfg.cache_size);
      cfg.canvas_px = j.value("canvas_px", cfg.canvas_px);
      nsart::require(cfg.port >= 0 && cfg.port <= 65535, nsart::ErrorKind::Parameter, "port must be 0..65535");
    }
    auto s = std::make_unique<nsart_server>();
    if (log) {
      s->buf = std::make_unique<LineBuf>(log, user);
      s->log = std::make_unique<std::ostream>(s->buf.get());
      cfg.log = s->log.get();
    }
    s->server = std::make_unique<nsart::server::StudioServer>(cfg);
    *out = s.release();
  });
}

nsart_status nsart_server_bind(nsart_server* server, int* port) {
  return guard([&] {
    need(server, "server");
    const int p = server->server->bind();
    if (port) *port = p;
  });
}

nsart_status nsart_server_serve(nsart_server* server) {
  return guard([&] {
    need(server, "server");
    server->server->serve();
  });
}

void nsart_server_stop(nsart_server* server) {
  if (server) server->server->stop();
}

void nsart_server_free(nsart_server* server) { delete server; }

}  // extern "C"
