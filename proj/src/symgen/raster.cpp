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

#include <algorithm>
#include <cmath>
#include <set>

#include "common/error.hpp"
#include "symgen/symgen.hpp"

namespace nsart::symgen {

namespace {

constexpr int kSub = 4;  // samples per pixel side
constexpr int kSamples = kSub * kSub;

int coverage(double px, double py, const PlacedCircle& c) {
  const double r2 = c.r * c.r;
  // Nearest and farthest points of the pixel square relative to the centre.
  const double nx = std::clamp(c.cx, px, px + 1.0) - c.cx;
  const double ny = std::clamp(c.cy, py, py + 1.0) - c.cy;
  if (nx * nx + ny * ny > r2) return 0;
  const double fx = std::max(std::abs(px - c.cx), std::abs(px + 1.0 - c.cx));
  const double fy = std::max(std::abs(py - c.cy), std::abs(py + 1.0 - c.cy));
  if (fx * fx + fy * fy <= r2) return kSamples;
  int hits = 0;
  for (int j = 0; j < kSub; ++j) {
    const double dy = py + (j + 0.5) / kSub - c.cy;
    for (int i = 0; i < kSub; ++i) {
      const double dx = px + (i + 0.5) / kSub - c.cx;
      if (dx * dx + dy * dy <= r2) ++hits;
    }
  }
  return hits;
}

}  // namespace

ImageBuffer rasterize(const std::vector<PlacedCircle>& circles, int canvas_px, Rgb background) {
  require(canvas_px > 0, ErrorKind::Parameter, "canvas_px must be positive");
  ImageBuffer img(canvas_px, canvas_px, background);
  for (const auto& c : circles) {
    const int x0 = std::max(0, static_cast<int>(std::floor(c.cx - c.r)));
    const int x1 = std::min(canvas_px - 1, static_cast<int>(std::ceil(c.cx + c.r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(c.cy - c.r)));
    const int y1 = std::min(canvas_px - 1, static_cast<int>(std::ceil(c.cy + c.r)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const int n = coverage(x, y, c);
        if (n == 0) continue;
        if (n == kSamples) {
          img.set(x, y, c.color);
          continue;
        }
        const Rgb prev = img.at(x, y);
        Rgb out;
        for (int k = 0; k < 3; ++k)
          out[k] = static_cast<std::uint8_t>((prev[k] * (kSamples - n) + c.color[k] * n + kSamples / 2) / kSamples);
        img.set(x, y, out);
      }
    }
  }
  return img;
}

Piece compose_piece(const SymbolicSpec& spec, const PaletteTable& palettes) {
  const Palette& palette = palettes.at(spec.palette_id);
  require(spec.num_colors >= 1 && spec.num_colors <= static_cast<int>(palette.colors.size()), ErrorKind::Parameter,
          "num_colors must lie in 1..5, got " + std::to_string(spec.num_colors));
  require(spec.canvas_px >= 32, ErrorKind::Parameter, "canvas_px must be at least 32");
  Rng rng(spec.seed);
  Piece piece;
  piece.circles = assign_colors(pack_circles(spec.layout, spec.canvas_px, rng), palette, spec.num_colors, rng);
  piece.image = rasterize(piece.circles, spec.canvas_px, spec.layout.background);
  std::set<Rgb> used;
  for (const auto& c : piece.circles) used.insert(c.color);
  piece.colors_used = static_cast<int>(used.size());
  return piece;
}

ImageBuffer generate_piece(const SymbolicSpec& spec, const PaletteTable& palettes) {
  return compose_piece(spec, palettes).image;
}

ImageBuffer generate_piece(const SymbolicSpec& spec) { return generate_piece(spec, PaletteTable::defaults()); }

}  // namespace nsart::symgen
