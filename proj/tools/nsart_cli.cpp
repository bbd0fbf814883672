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

// Command-line front end. Talks to the library through the C interface only.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nsart/nsart.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitModule = 1;
constexpr int kExitUsage = 2;

// Reads --config files: top-level keys are global flags, nested objects are
// subcommand sections ({"pool": {"nsg": {"n": 100}}}).
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConfigError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConfigError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    walk(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

  static void walk(const json& obj, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) {
        auto p = parents;
        p.push_back(key);
        walk(value, p, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      out.push_back(std::move(item));
    }
  }
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModuleError : std::runtime_error {
  ModuleError(nsart_status s, const std::string& what) : std::runtime_error(what), status(s) {}
  nsart_status status;
};

void log_line(const json& j) {
  std::cerr << j.dump() << '\n';
  std::cerr.flush();
}

void log_event(const std::string& event, json fields = json::object()) {
  fields["level"] = "info";
  fields["event"] = event;
  log_line(fields);
}

void check(nsart_status s) {
  if (s != NSART_OK) throw ModuleError(s, nsart_last_error());
}

std::string take(char* s) {
  std::string out = s ? s : "";
  nsart_string_free(s);
  return out;
}

void print_json(const json& j) { std::cout << j.dump() << std::endl; }

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};
using Palettes = Handle<nsart_palettes, nsart_palettes_free>;
using Model = Handle<nsart_model, nsart_model_free>;
using Server = Handle<nsart_server, nsart_server_free>;

std::string read_file_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModuleError(NSART_ERR_IO, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  CLI::Option* seed_opt = nullptr;
};

const std::string& need_out(const Globals& g) {
  if (g.out.empty()) throw UsageError("--out is required");
  return g.out;
}

void load_palettes(Palettes& p, const std::string& path) {
  check(path.empty() ? nsart_palettes_default(&p.p) : nsart_palettes_load(path.c_str(), &p.p));
}

void load_model(Model& m, const std::string& checkpoint) {
  if (checkpoint.empty()) throw UsageError("--checkpoint is required");
  check(nsart_model_load(checkpoint.c_str(), &m.p));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symbolic and neural generative art toolkit", "nsart"};
  app.set_version_flag("--version", std::string(nsart_version()));
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with flag defaults; nested objects configure subcommands");
  app.allow_config_extras(false);
  app.option_defaults()->always_capture_default();

  Globals g;
  g.seed_opt = app.add_option("--seed", g.seed, "Seed for the operation");
  app.add_option("--out", g.out, "Output file or directory");

  std::function<void()> run;

  // dataset build
  auto* dataset = app.add_subcommand("dataset", "Symbolic training data");
  dataset->require_subcommand(1);
  auto* ds_build = dataset->add_subcommand("build", "Render the palette x colour-count grid");
  int per_cell = 400, canvas = 512;
  unsigned workers = 0;
  std::string palettes_path, layout_path;
  ds_build->add_option("--per-cell", per_cell, "Images per grid cell")->check(CLI::PositiveNumber);
  ds_build->add_option("--canvas", canvas, "Canvas size in pixels")->check(CLI::Range(32, 8192));
  ds_build->add_option("--workers", workers, "Worker threads (0 = all cores)");
  ds_build->add_option("--palettes", palettes_path, "Palette table JSON")->check(CLI::ExistingFile);
  ds_build->add_option("--layout", layout_path, "Layout parameter JSON")->check(CLI::ExistingFile);
  ds_build->callback([&] {
    run = [&] {
      const std::string out = need_out(g);
      Palettes p;
      load_palettes(p, palettes_path);
      const std::string layout = layout_path.empty() ? std::string() : read_file_text(layout_path);
      char* summary = nullptr;
      log_event("dataset_start", {{"per_cell", per_cell}, {"canvas", canvas}, {"out", out}});
      check(nsart_dataset_build(p.p, layout.empty() ? nullptr : layout.c_str(), per_cell, canvas, workers,
                                out.c_str(), &summary));
      print_json(json::parse(take(summary)));
    };
  });

  // train
  auto* train = app.add_subcommand("train", "Train the progressive generator");
  std::string manifest, gan_config, resume;
  std::size_t limit = 2000;
  std::int64_t iters = -1, checkpoint_every = 1000, sample_every = 1000;
  bool paper_scale = false, dry_run = false;
  train->add_option("--data", manifest, "Dataset manifest.jsonl");
  train->add_option("--limit", limit, "Train on an evenly spaced subset of this many images (0 = all)");
  train->add_option("--gan-config", gan_config, "JSON overrides of the training hyperparameters")
      ->check(CLI::ExistingFile);
  train->add_flag("--paper-scale", paper_scale, "Start from the full-size hyperparameters");
  train->add_option("--iters", iters, "Total iterations")->check(CLI::NonNegativeNumber);
  train->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--checkpoint-every", checkpoint_every, "Iterations between checkpoints (0 = end only)");
  train->add_option("--sample-every", sample_every, "Iterations between sample grids (0 = none)");
  train->add_flag("--dry-run", dry_run, "Print the resolved configuration and schedule, then exit");
  train->callback([&] {
    run = [&] {
      if (!resume.empty() && (paper_scale || !gan_config.empty()))
        throw UsageError("--resume takes its configuration from the checkpoint");
      json overrides = json::object();
      if (!gan_config.empty()) {
        try {
          overrides = json::parse(read_file_text(gan_config));
        } catch (const json::exception& e) {
          throw ModuleError(NSART_ERR_FORMAT, gan_config + ": " + e.what());
        }
      }
      if (iters >= 0) overrides["total_iters"] = iters;
      if (g.seed_opt->count() > 0) overrides["seed"] = g.seed;
      const std::string overrides_text = overrides.dump();
      if (dry_run) {
        char* resolved = nullptr;
        check(nsart_config_resolve(overrides_text.c_str(), paper_scale, &resolved));
        print_json(json::parse(take(resolved)));
        return;
      }
      if (manifest.empty()) throw UsageError("--data is required");
      const fs::path out = need_out(g);
      fs::create_directories(out);
      Model m;
      if (resume.empty()) {
        check(nsart_model_create(overrides_text.c_str(), paper_scale, &m.p));
      } else {
        load_model(m, resume);
        if (iters >= 0) check(nsart_model_set_total_iters(m.p, iters));
      }
      char* info = nullptr;
      check(nsart_model_info(m.p, &info));
      const json model_info = json::parse(take(info));
      std::ofstream(out / "config.json") << model_info["config"].dump(2) << "\n";
      log_event("train_start", {{"iteration", model_info["iteration"]}, {"parameters", model_info["parameters"]}});
      std::ofstream train_log(out / "train.jsonl", std::ios::app);
      auto forward = [](const char* line, void* user) {
        std::cerr << line << '\n';
        *static_cast<std::ofstream*>(user) << line << '\n';
      };
      const std::string ckpt = (out / "model.nsga").string();
      const std::string samples = (out / "samples").string();
      check(nsart_model_train(m.p, manifest.c_str(), limit, ckpt.c_str(), checkpoint_every,
                              sample_every > 0 ? samples.c_str() : nullptr, sample_every, forward, &train_log));
      print_json({{"checkpoint", ckpt}, {"iteration", nsart_model_iteration(m.p)}});
    };
  });

  // sample / interpolate
  auto* sample = app.add_subcommand("sample", "Render a generator sample from a seed");
  std::string checkpoint;
  int grid = 0;
  sample->add_option("--checkpoint", checkpoint, "Trained model")->check(CLI::ExistingFile);
  sample->add_option("--grid", grid, "Render a grid x grid sheet from consecutive seeds")->check(CLI::Range(1, 64));
  sample->callback([&] {
    run = [&] {
      Model m;
      load_model(m, checkpoint);
      const std::string out = need_out(g);
      check(grid > 0 ? nsart_model_grid_png(m.p, g.seed, grid, out.c_str())
                     : nsart_model_sample_png(m.p, g.seed, out.c_str()));
      print_json({{"out", out}, {"seed", g.seed}});
    };
  });

  auto* interp = app.add_subcommand("interpolate", "Render a blend of two seeds' latents");
  std::uint64_t seed1 = 0, seed2 = 0;
  float alpha = 0.5f;
  interp->add_option("--checkpoint", checkpoint, "Trained model")->check(CLI::ExistingFile);
  interp->add_option("--seed1", seed1, "First seed")->required();
  interp->add_option("--seed2", seed2, "Second seed")->required();
  interp->add_option("--alpha", alpha, "Blend weight of the second seed")->check(CLI::Range(0.0f, 1.0f));
  interp->callback([&] {
    run = [&] {
      Model m;
      load_model(m, checkpoint);
      const std::string out = need_out(g);
      check(nsart_model_interpolate_png(m.p, seed1, seed2, alpha, out.c_str()));
      print_json({{"out", out}, {"seed1", seed1}, {"seed2", seed2}, {"alpha", alpha}});
    };
  });

  // pool symbolic | nsg | nsi
  auto* pool = app.add_subcommand("pool", "Build an evaluation pool");
  pool->require_subcommand(1);
  std::size_t pool_n = 10000, pool_limit = 0;
  auto* pool_sym = pool->add_subcommand("symbolic", "Pool over a dataset manifest");
  pool_sym->add_option("--data", manifest, "Dataset manifest.jsonl")->required()->check(CLI::ExistingFile);
  pool_sym->add_option("--limit", pool_limit, "Evenly spaced subset size (0 = all)");
  pool_sym->callback([&] {
    run = [&] {
      char* s = nullptr;
      check(nsart_pool_build_symbolic(manifest.c_str(), pool_limit, need_out(g).c_str(), &s));
      print_json(json::parse(take(s)));
    };
  });
  for (const char* kind : {"nsg", "nsi"}) {
    const bool nsg = std::string(kind) == "nsg";
    auto* sub = pool->add_subcommand(kind, nsg ? "Pool of generator samples" : "Pool of midpoint interpolations");
    sub->add_option("--checkpoint", checkpoint, "Trained model")->check(CLI::ExistingFile);
    sub->add_option("--n", pool_n, "Pool size");
    sub->callback([&, nsg] {
      run = [&, nsg] {
        Model m;
        load_model(m, checkpoint);
        const std::string out = need_out(g);
        char* s = nullptr;
        log_event("pool_start", {{"kind", nsg ? "nsg" : "nsi"}, {"n", pool_n}, {"seed", g.seed}});
        check(nsg ? nsart_pool_build_nsg(m.p, pool_n, g.seed, out.c_str(), &s)
                  : nsart_pool_build_nsi(m.p, pool_n, g.seed, out.c_str(), &s));
        print_json(json::parse(take(s)));
      };
    });
  }

  // pairs build
  auto* pairs = app.add_subcommand("pairs", "Nearest-neighbour comparison pairs");
  pairs->require_subcommand(1);
  auto* pairs_build = pairs->add_subcommand("build", "Pair items of two pools");
  std::string pool_a, pool_b;
  std::size_t n_pairs = 20;
  pairs_build->add_option("--a", pool_a, "First pool (directory or pool.jsonl)")->required();
  pairs_build->add_option("--b", pool_b, "Second pool")->required();
  pairs_build->add_option("--n", n_pairs, "Number of pairs");
  pairs_build->callback([&] {
    run = [&] {
      const std::string out = need_out(g);
      check(nsart_pairs_build(pool_a.c_str(), pool_b.c_str(), n_pairs, g.seed, out.c_str()));
      print_json({{"out", out}, {"pairs", n_pairs}});
    };
  });

  // study export
  auto* study = app.add_subcommand("study", "Crowd study bundles");
  study->require_subcommand(1);
  auto* study_export = study->add_subcommand("export", "Build and export the three-way pair study");
  std::string sym_pool, nsg_pool, nsi_pool;
  std::size_t per_kind_pair = 20;
  study_export->add_option("--symbolic", sym_pool, "Symbolic pool")->required();
  study_export->add_option("--nsg", nsg_pool, "Generator sample pool")->required();
  study_export->add_option("--nsi", nsi_pool, "Interpolation pool")->required();
  study_export->add_option("--per-kind-pair", per_kind_pair, "Pairs per kind pairing");
  study_export->callback([&] {
    run = [&] {
      const std::string out = need_out(g);
      check(nsart_study_export(sym_pool.c_str(), nsg_pool.c_str(), nsi_pool.c_str(), per_kind_pair, g.seed,
                               out.c_str()));
      print_json({{"out", out}, {"pairs", 3 * per_kind_pair}});
    };
  });

  // stats report / qc
  std::string key, responses;
  auto* stats = app.add_subcommand("stats", "Study statistics");
  stats->require_subcommand(1);
  auto* report = stats->add_subcommand("report", "Win ratios per question and kind pairing");
  std::string format = "json";
  report->add_option("--key", key, "answer_key.json or a pairs file")->required()->check(CLI::ExistingFile);
  report->add_option("--responses", responses, "responses.jsonl")->required()->check(CLI::ExistingFile);
  report->add_option("--format", format, "json or table")->check(CLI::IsMember({"json", "table"}));
  report->callback([&] {
    run = [&] {
      char* js = nullptr;
      char* table = nullptr;
      check(nsart_stats_report(key.c_str(), responses.c_str(), &js, &table));
      const std::string text = format == "json" ? json::parse(take(js)).dump(2) + "\n" : take(table);
      if (format == "json") nsart_string_free(table); else nsart_string_free(js);
      if (g.out.empty()) {
        std::cout << text;
      } else {
        std::ofstream(g.out) << text;
      }
    };
  });

  auto* qc = app.add_subcommand("qc", "Colour-count quality control of responses");
  qc->add_option("--key", key, "answer_key.json or a pairs file")->required()->check(CLI::ExistingFile);
  qc->add_option("--responses", responses, "responses.jsonl")->required()->check(CLI::ExistingFile);
  qc->callback([&] {
    run = [&] {
      char* js = nullptr;
      check(nsart_qc(key.c_str(), responses.c_str(), g.out.empty() ? nullptr : g.out.c_str(), &js));
      print_json(json::parse(take(js)));
    };
  });

  // serve
  auto* serve = app.add_subcommand("serve", "Run the studio HTTP server");
  std::string host = "127.0.0.1", data_dir = "nsart-data", static_dir;
  int port = 8080, serve_canvas = 512;
  std::size_t cache_size = 256;
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--port", port, "Listen port (0 = any free port)")->check(CLI::Range(0, 65535));
  serve->add_option("--checkpoint", checkpoint, "Trained model for the neural endpoints")
      ->check(CLI::ExistingFile);
  serve->add_option("--palettes", palettes_path, "Palette table JSON")->check(CLI::ExistingFile);
  serve->add_option("--data-dir", data_dir, "Where galleries are stored");
  serve->add_option("--static", static_dir, "Directory served under /")->check(CLI::ExistingDirectory);
  serve->add_option("--cache", cache_size, "Rendered images kept in memory");
  serve->add_option("--canvas", serve_canvas, "Symbolic canvas size in pixels")->check(CLI::Range(32, 4096));
  serve->callback([&] {
    run = [&] {
      json cfg = {{"host", host}, {"port", port}, {"data_dir", data_dir}, {"cache_size", cache_size},
                  {"canvas_px", serve_canvas}};
      if (!checkpoint.empty()) cfg["checkpoint"] = checkpoint;
      if (!palettes_path.empty()) cfg["palettes"] = palettes_path;
      if (!static_dir.empty()) cfg["static_dir"] = static_dir;

      // Signals are taken synchronously by a watcher thread; block them
      // before the server spawns its workers.
      sigset_t stop_signals;
      sigemptyset(&stop_signals);
      sigaddset(&stop_signals, SIGINT);
      sigaddset(&stop_signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

      Server s;
      auto forward = [](const char* line, void*) {
        std::cerr << line << '\n';
        std::cerr.flush();
      };
      check(nsart_server_create(cfg.dump().c_str(), forward, nullptr, &s.p));
      int bound = 0;
      check(nsart_server_bind(s.p, &bound));
      log_event("listening", {{"host", host}, {"port", bound}});
      print_json({{"url", "http://" + host + ":" + std::to_string(bound) + "/"}});
      std::thread watcher([&] {
        int sig = 0;
        sigwait(&stop_signals, &sig);
        log_event("shutdown", {{"signal", sig}});
        nsart_server_stop(s.p);
      });
      const nsart_status st = nsart_server_serve(s.p);
      if (watcher.joinable()) {
        // Wake the watcher if the server stopped on its own.
        pthread_kill(watcher.native_handle(), SIGTERM);
        watcher.join();
      }
      check(st);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (run) run();
    return 0;
  } catch (const UsageError& e) {
    log_line({{"level", "error"}, {"kind", "usage"}, {"message", e.what()}});
    return kExitUsage;
  } catch (const ModuleError& e) {
    log_line({{"level", "error"}, {"kind", nsart_status_name(e.status)}, {"message", e.what()}});
    return kExitModule;
  } catch (const std::exception& e) {
    log_line({{"level", "error"}, {"kind", "internal"}, {"message", e.what()}});
    return kExitModule;
  }
}
