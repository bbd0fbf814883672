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

#include <atomic>
#include <cstdio>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "common/error.hpp"
#include "common/fs.hpp"
#include "symgen/symgen.hpp"

namespace nsart::symgen {

using nlohmann::json;

std::string DatasetManifest::to_jsonl() const {
  std::string out;
  for (const auto& e : entries) {
    json j = {{"file", e.file},
              {"palette_id", e.palette_id},
              {"num_colors", e.num_colors},
              {"seed", e.seed},
              {"num_circles", e.num_circles},
              {"colors_used", e.colors_used},
              {"canvas_px", canvas_px},
              {"generator_version", generator_version}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

DatasetManifest DatasetManifest::from_jsonl(const std::string& text) {
  DatasetManifest m;
  m.canvas_px = 0;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> files;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ManifestEntry e;
      e.file = j.at("file").get<std::string>();
      e.palette_id = j.at("palette_id").get<int>();
      e.num_colors = j.at("num_colors").get<int>();
      e.seed = j.at("seed").get<std::uint64_t>();
      e.num_circles = j.value("num_circles", 0);
      e.colors_used = j.value("colors_used", e.num_colors);
      const int canvas = j.value("canvas_px", 0);
      if (m.entries.empty()) {
        m.canvas_px = canvas;
        m.generator_version = j.value("generator_version", std::string(kGeneratorVersion));
      }
      require(files.insert(e.file).second, ErrorKind::Format, "duplicate manifest file " + e.file);
      m.entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      fail(ErrorKind::Format, "manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return m;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) { return from_jsonl(read_text(path)); }

namespace {

std::string image_name(int palette, int colors, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "images/p%d-c%d-%07llu.png", palette, colors, static_cast<unsigned long long>(seed));
  return buf;
}

}  // namespace

DatasetManifest build_dataset(const PaletteTable& palettes, const LayoutParams& layout, int samples_per_cell,
                              int canvas_px, const std::filesystem::path& out_dir, unsigned workers) {
  require(samples_per_cell >= 1, ErrorKind::Parameter, "samples_per_cell must be at least 1");
  require(canvas_px >= 32, ErrorKind::Parameter, "canvas_px must be at least 32");
  layout.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  require(!ec, ErrorKind::Io, "cannot create " + (out_dir / "images").string() + ": " + ec.message());

  const int cells = kPaletteCount * kPaletteSize;
  const std::size_t total = static_cast<std::size_t>(cells) * static_cast<std::size_t>(samples_per_cell);
  DatasetManifest manifest;
  manifest.canvas_px = canvas_px;
  manifest.entries.resize(total);

  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> written{0};
  std::mutex err_mu;
  std::string first_error;

  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < total; i = next.fetch_add(1)) {
      {
        std::lock_guard lock(err_mu);
        if (!first_error.empty()) return;
      }
      const int cell = static_cast<int>(i / static_cast<std::size_t>(samples_per_cell));
      const int sample = static_cast<int>(i % static_cast<std::size_t>(samples_per_cell));
      SymbolicSpec spec;
      spec.palette_id = cell / kPaletteSize;
      spec.num_colors = cell % kPaletteSize + 1;
      spec.seed = dataset_seed(cell, samples_per_cell, sample);
      spec.layout = layout;
      spec.canvas_px = canvas_px;
      try {
        const Piece piece = compose_piece(spec, palettes);
        ManifestEntry& e = manifest.entries[i];
        e.file = image_name(spec.palette_id, spec.num_colors, spec.seed);
        e.palette_id = spec.palette_id;
        e.num_colors = spec.num_colors;
        e.seed = spec.seed;
        e.num_circles = static_cast<int>(piece.circles.size());
        e.colors_used = piece.colors_used;
        write_png(out_dir / e.file, piece.image);
        written.fetch_add(1);
      } catch (const std::exception& ex) {
        std::lock_guard lock(err_mu);
        if (first_error.empty()) first_error = ex.what();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  if (!first_error.empty())
    fail(ErrorKind::Io, "dataset build aborted after writing " + std::to_string(written.load()) + " of " +
                            std::to_string(total) + " images: " + first_error);

  write_text_atomic(out_dir / kManifestName, manifest.to_jsonl());
  write_text_atomic(out_dir / "palettes.json", palettes.to_json().dump(2) + "\n");
  write_text_atomic(out_dir / "layout.json", layout.to_json().dump(2) + "\n");
  return manifest;
}

}  // namespace nsart::symgen
