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

// Circle-packing art: palettes, layout, packing, coloring, rasterization and
// the 5x5 palette/colour-count dataset grid.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "common/image.hpp"
#include "common/rng.hpp"

namespace nsart::symgen {

inline constexpr int kPaletteCount = 5;
inline constexpr int kPaletteSize = 5;
inline constexpr const char* kGeneratorVersion = "nsart-symgen/1";

struct Palette {
  int id = 0;
  std::string name;
  std::vector<Rgb> colors;  // exactly kPaletteSize entries
};

class PaletteTable {
 public:
  explicit PaletteTable(std::vector<Palette> palettes);
  static PaletteTable defaults();
  static PaletteTable from_json(const nlohmann::json& j);
  static PaletteTable load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const Palette& at(int id) const;
  int size() const noexcept { return static_cast<int>(palettes_.size()); }
  const std::vector<Palette>& palettes() const noexcept { return palettes_; }

 private:
  std::vector<Palette> palettes_;
};

struct RadiusTier {
  double radius_fraction = 0.0;  // of the canvas side
  int max_count = 0;
};

struct LayoutParams {
  std::vector<RadiusTier> radius_tiers;
  double gap_fraction = 0.0;
  int max_attempts_per_circle = 1;
  Rgb background{0, 0, 0};

  static LayoutParams defaults();
  static LayoutParams from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// Throws ErrorKind::Parameter naming the broken invariant.
  void validate() const;
};

struct PlacedCircle {
  double cx = 0.0;
  double cy = 0.0;
  double r = 0.0;
  Rgb color{0, 0, 0};
};

/// The single non-overlap predicate used by the packer and by every checker.
inline bool circles_clear(const PlacedCircle& a, const PlacedCircle& b, double gap) noexcept;

struct SymbolicSpec {
  int palette_id = 0;
  int num_colors = 1;
  std::uint64_t seed = 0;
  LayoutParams layout = LayoutParams::defaults();
  int canvas_px = 512;
};

/// Largest-first rejection-sampling placement. Circles come back uncoloured,
/// in placement order.
std::vector<PlacedCircle> pack_circles(const LayoutParams& layout, int canvas_px, Rng& rng);

/// Picks `num_colors` distinct palette entries without replacement, then gives
/// every circle a uniform pick from that subset.
std::vector<PlacedCircle> assign_colors(std::vector<PlacedCircle> circles, const Palette& palette, int num_colors,
                                        Rng& rng);

/// Background fill, then circles in order with 4x4 supersampled coverage.
ImageBuffer rasterize(const std::vector<PlacedCircle>& circles, int canvas_px, Rgb background);

struct Piece {
  std::vector<PlacedCircle> circles;
  ImageBuffer image;
  int colors_used = 0;  // distinct colours actually drawn
};

Piece compose_piece(const SymbolicSpec& spec, const PaletteTable& palettes);
ImageBuffer generate_piece(const SymbolicSpec& spec, const PaletteTable& palettes);
ImageBuffer generate_piece(const SymbolicSpec& spec);

struct ManifestEntry {
  std::string file;  // relative to the manifest directory
  int palette_id = 0;
  int num_colors = 0;
  std::uint64_t seed = 0;
  int num_circles = 0;
  int colors_used = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::string generator_version = kGeneratorVersion;
  int canvas_px = 0;

  /// JSON lines, one object per image.
  std::string to_jsonl() const;
  static DatasetManifest from_jsonl(const std::string& text);
  static DatasetManifest load(const std::filesystem::path& path);
};

inline constexpr const char* kManifestName = "manifest.jsonl";

/// Seed of sample `sample` in grid cell `cell` (cell = palette * 5 + colors - 1).
inline std::uint64_t dataset_seed(int cell, int samples_per_cell, int sample) {
  return static_cast<std::uint64_t>(cell) * static_cast<std::uint64_t>(samples_per_cell) +
         static_cast<std::uint64_t>(sample);
}

/// Renders the full palette x colour-count grid into `out_dir` (PNG files
/// under images/, plus manifest.jsonl, palettes.json and layout.json).
DatasetManifest build_dataset(const PaletteTable& palettes, const LayoutParams& layout, int samples_per_cell,
                              int canvas_px, const std::filesystem::path& out_dir, unsigned workers = 0);

// ---------------------------------------------------------------------------

inline bool circles_clear(const PlacedCircle& a, const PlacedCircle& b, double gap) noexcept {
  const double dx = a.cx - b.cx;
  const double dy = a.cy - b.cy;
  return std::sqrt(dx * dx + dy * dy) >= a.r + b.r + gap;
}

}  // namespace nsart::symgen
