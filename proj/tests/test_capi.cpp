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

// Exercises the shared library through its C header only.

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "nsart/nsart.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Scratch {
  Scratch() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("nsart-capi-" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
  fs::path path;
};

// Takes ownership of a library string.
std::string take(char* s) {
  std::string out = s ? s : "";
  nsart_string_free(s);
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

constexpr const char* kTiny =
    R"({"latent_dim":8,"final_resolution":8,"channels":[8,6],"batch_schedule":{"4":4,"8":4},)"
    R"("iters_per_stage":4,"total_iters":6,"seed":3})";

}  // namespace

TEST_CASE("status reporting") {
  CHECK(std::string(nsart_version()) == "0.1.0");
  CHECK(std::string(nsart_status_name(NSART_ERR_IO)) == "io");
  nsart_palettes* p = nullptr;
  CHECK(nsart_palettes_load("/nonexistent/palettes.json", &p) == NSART_ERR_IO);
  CHECK(p == nullptr);
  CHECK(std::string(nsart_last_error()).find("/nonexistent/palettes.json") != std::string::npos);
  CHECK(nsart_palettes_default(nullptr) == NSART_ERR_PARAMETER);
  REQUIRE(nsart_palettes_default(&p) == NSART_OK);
  CHECK(std::string(nsart_last_error()).empty());
  CHECK(nsart_palettes_count(p) == 5);
  char* js = nullptr;
  REQUIRE(nsart_palettes_to_json(p, &js) == NSART_OK);
  CHECK(json::parse(take(js)).is_array() == false);
  nsart_palettes_free(p);
  nsart_palettes_free(nullptr);
  nsart_model_free(nullptr);
  nsart_server_free(nullptr);
}

TEST_CASE("symbolic rendering and dataset") {
  Scratch dir;
  nsart_palettes* p = nullptr;
  REQUIRE(nsart_palettes_default(&p) == NSART_OK);
  REQUIRE(nsart_symbolic_render_png(p, nullptr, 1, 3, 42, 64, (dir / "a.png").c_str()) == NSART_OK);
  REQUIRE(nsart_symbolic_render_png(p, nullptr, 1, 3, 42, 64, (dir / "b.png").c_str()) == NSART_OK);
  CHECK(slurp(dir / "a.png") == slurp(dir / "b.png"));
  CHECK(nsart_symbolic_render_png(p, nullptr, 1, 9, 42, 64, (dir / "c.png").c_str()) == NSART_ERR_PARAMETER);
  CHECK(nsart_symbolic_render_png(p, "{\"gap_fraction\":", 1, 3, 42, 64, (dir / "c.png").c_str()) ==
        NSART_ERR_FORMAT);

  char* summary = nullptr;
  REQUIRE(nsart_dataset_build(p, nullptr, 1, 48, 0, (dir / "ds").c_str(), &summary) == NSART_OK);
  const json s = json::parse(take(summary));
  CHECK(s["images"] == 25);
  CHECK(fs::exists(s["manifest"].get<std::string>()));
  nsart_palettes_free(p);
}

TEST_CASE("config resolution") {
  char* out = nullptr;
  REQUIRE_MESSAGE(nsart_config_resolve(nullptr, 1, &out) == NSART_OK, std::string(nsart_last_error()));
  const json paper = json::parse(take(out));
  std::vector<int> batches;
  for (const auto& st : paper["schedule"]) batches.push_back(st["batch"]);
  CHECK(batches == std::vector<int>{128, 128, 128, 64, 32, 16, 8, 4});
  CHECK(paper["schedule"].back()["resolution"] == 512);

  REQUIRE(nsart_config_resolve(R"({"total_iters": 77})", 0, &out) == NSART_OK);
  const json desk = json::parse(take(out));
  CHECK(desk["config"]["total_iters"] == 77);
  CHECK(desk["config"]["final_resolution"] == 32);
  CHECK(nsart_config_resolve(R"({"channels": [8]})", 0, &out) == NSART_ERR_PARAMETER);
  CHECK(nsart_config_resolve("[1]", 0, &out) == NSART_ERR_FORMAT);
}

TEST_CASE("model lifecycle") {
  Scratch dir;
  nsart_model* m = nullptr;
  REQUIRE(nsart_model_create(kTiny, 0, &m) == NSART_OK);
  CHECK(nsart_model_resolution(m) == 8);
  CHECK(nsart_model_iteration(m) == 0);

  std::vector<uint8_t> a(8 * 8 * 3), b(8 * 8 * 3);
  REQUIRE(nsart_model_sample(m, 5, a.data(), a.size()) == NSART_OK);
  REQUIRE(nsart_model_interpolate(m, 5, 6, 0.0f, b.data(), b.size()) == NSART_OK);
  CHECK(a == b);
  CHECK(nsart_model_sample(m, 5, a.data(), a.size() - 1) == NSART_ERR_PARAMETER);
  CHECK(nsart_model_interpolate(m, 5, 6, 1.5f, b.data(), b.size()) == NSART_ERR_PARAMETER);

  REQUIRE(nsart_model_sample_png(m, 5, (dir / "s.png").c_str()) == NSART_OK);
  REQUIRE(nsart_model_interpolate_png(m, 6, 5, 1.0f, (dir / "i.png").c_str()) == NSART_OK);
  CHECK(slurp(dir / "s.png") == slurp(dir / "i.png"));
  REQUIRE(nsart_model_grid_png(m, 0, 2, (dir / "g.png").c_str()) == NSART_OK);

  // Train a few steps on a tiny dataset and round-trip the checkpoint.
  nsart_palettes* p = nullptr;
  REQUIRE(nsart_palettes_default(&p) == NSART_OK);
  REQUIRE(nsart_dataset_build(p, nullptr, 1, 32, 1, (dir / "ds").c_str(), nullptr) == NSART_OK);
  nsart_palettes_free(p);
  std::vector<std::string> lines;
  auto collect = [](const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(line); };
  REQUIRE(nsart_model_train(m, (dir / "ds/manifest.jsonl").c_str(), 10, (dir / "m.nsga").c_str(), 0, nullptr, 0,
                            collect, &lines) == NSART_OK);
  CHECK(nsart_model_iteration(m) == 6);
  REQUIRE(lines.size() >= 6);
  CHECK(json::parse(lines.front()).contains("d_loss"));

  nsart_model* back = nullptr;
  REQUIRE(nsart_model_load((dir / "m.nsga").c_str(), &back) == NSART_OK);
  char* info = nullptr;
  REQUIRE(nsart_model_info(back, &info) == NSART_OK);
  CHECK(json::parse(take(info))["iteration"] == 6);
  REQUIRE(nsart_model_sample(m, 9, a.data(), a.size()) == NSART_OK);
  REQUIRE(nsart_model_sample(back, 9, b.data(), b.size()) == NSART_OK);
  CHECK(a == b);

  CHECK(nsart_model_set_total_iters(back, -1) == NSART_ERR_PARAMETER);
  REQUIRE(nsart_model_set_total_iters(back, 8) == NSART_OK);
  REQUIRE(nsart_model_train(back, (dir / "ds/manifest.jsonl").c_str(), 10, nullptr, 0, nullptr, 0, nullptr,
                            nullptr) == NSART_OK);
  CHECK(nsart_model_iteration(back) == 8);

  std::ofstream(dir / "bad.nsga") << "NSGA";
  nsart_model* bad = nullptr;
  CHECK(nsart_model_load((dir / "bad.nsga").c_str(), &bad) == NSART_ERR_FORMAT);
  nsart_model_free(back);
  nsart_model_free(m);
}

TEST_CASE("evaluation pipeline") {
  Scratch dir;
  nsart_palettes* p = nullptr;
  REQUIRE(nsart_palettes_default(&p) == NSART_OK);
  REQUIRE(nsart_dataset_build(p, nullptr, 2, 32, 0, (dir / "ds").c_str(), nullptr) == NSART_OK);
  nsart_palettes_free(p);
  nsart_model* m = nullptr;
  REQUIRE(nsart_model_create(kTiny, 0, &m) == NSART_OK);

  char* s = nullptr;
  REQUIRE(nsart_pool_build_symbolic((dir / "ds/manifest.jsonl").c_str(), 0, (dir / "sym").c_str(), &s) == NSART_OK);
  CHECK(json::parse(take(s))["count"] == 50);
  REQUIRE(nsart_pool_build_nsg(m, 12, 1, (dir / "nsg").c_str(), &s) == NSART_OK);
  CHECK(json::parse(take(s))["kind"] == "NSG");
  REQUIRE(nsart_pool_build_nsi(m, 12, 2, (dir / "nsi").c_str(), nullptr) == NSART_OK);
  nsart_model_free(m);

  REQUIRE(nsart_pairs_build((dir / "nsg").c_str(), (dir / "sym/pool.jsonl").c_str(), 7, 4,
                            (dir / "pairs.json").c_str()) == NSART_OK);
  CHECK(nsart_pairs_build((dir / "nsg").c_str(), (dir / "missing").c_str(), 7, 4, (dir / "x.json").c_str()) ==
        NSART_ERR_IO);

  REQUIRE(nsart_study_export((dir / "sym").c_str(), (dir / "nsg").c_str(), (dir / "nsi").c_str(), 4, 9,
                             (dir / "study").c_str()) == NSART_OK);
  const json key = json::parse(slurp(dir / "study/answer_key.json"));
  REQUIRE(key["pairs"].size() == 12);

  // One correct and one wrong colour answer per Symbolic pair.
  std::ofstream out(dir / "responses.jsonl");
  std::size_t symbolic = 0;
  for (const auto& pair : key["pairs"]) {
    json r = {{"pair", pair["id"]}, {"answers", {"left", "left", "left", "left", "left"}}, {"worker", "w"}};
    if (pair.contains("gt_colors") && !pair["gt_colors"].is_null()) {
      ++symbolic;
      const int gt = pair["gt_colors"];
      r["colors"] = gt;
      out << r.dump() << "\n";
      r["colors"] = gt == 5 ? 4 : gt + 1;
    } else {
      r["colors"] = "shaded";
    }
    out << r.dump() << "\n";
  }
  out.close();
  REQUIRE(symbolic == 8);

  char* qc = nullptr;
  REQUIRE(nsart_qc((dir / "study/answer_key.json").c_str(), (dir / "responses.jsonl").c_str(),
                   (dir / "passed.jsonl").c_str(), &qc) == NSART_OK);
  const json q = json::parse(take(qc));
  CHECK(q["total"] == 20);
  CHECK(q["failed"] == 8);
  CHECK(q["passed"] == 12);

  char* report = nullptr;
  char* table = nullptr;
  REQUIRE(nsart_stats_report((dir / "study/answer_key.json").c_str(), (dir / "passed.jsonl").c_str(), &report,
                             &table) == NSART_OK);
  CHECK(json::parse(take(report)).contains("cells"));
  CHECK_FALSE(take(table).empty());

  double lo = 0, hi = 0;
  REQUIRE(nsart_significance_band(400, 0.95, &lo, &hi) == NSART_OK);
  CHECK(hi == doctest::Approx(0.549).epsilon(0.002));
  CHECK(nsart_significance_band(0, 0.95, &lo, &hi) == NSART_ERR_PARAMETER);
}

TEST_CASE("server through the C interface") {
  Scratch dir;
  std::vector<std::string> log;
  const std::string cfg = json{{"port", 0}, {"data_dir", dir / "data"}, {"canvas_px", 48}}.dump();
  nsart_server* srv = nullptr;
  CHECK(nsart_server_create(R"({"colour":1})", nullptr, nullptr, &srv) == NSART_ERR_PARAMETER);
  REQUIRE(nsart_server_create(
              cfg.c_str(), [](const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(line); },
              &log, &srv) == NSART_OK);
  int port = 0;
  REQUIRE(nsart_server_bind(srv, &port) == NSART_OK);
  CHECK(port > 0);
  std::thread t([srv] { nsart_server_serve(srv); });
  {
    httplib::Client c("127.0.0.1", port);
    auto r = c.Get("/api/symbolic?palette=0&colors=2&seed=5");
    REQUIRE(r);
    CHECK(r->status == 200);
  }
  nsart_server_stop(srv);
  t.join();
  nsart_server_free(srv);
  REQUIRE(log.size() == 1);
  CHECK(json::parse(log[0])["status"] == 200);
}
