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
#include <array>
#include <cmath>

#include "common/error.hpp"
#include "symgen/symgen.hpp"

namespace nsart::symgen {

namespace {

// Uniform bucket grid over the canvas. A placed circle is filed under every
// cell touched by its bounding box grown by the gap, so any candidate that
// could violate the predicate shares at least one cell with it. The grid only
// prunes; acceptance is always decided by circles_clear().
class OccupancyGrid {
 public:
  OccupancyGrid(double canvas, double cell) : canvas_(canvas), cell_(cell) {
    side_ = std::max(1, static_cast<int>(std::ceil(canvas / cell)));
    cells_.resize(static_cast<std::size_t>(side_) * static_cast<std::size_t>(side_));
  }

  void insert(const PlacedCircle& c, std::size_t index, double gap) {
    for_cells(c.cx, c.cy, c.r + gap, [&](std::vector<std::size_t>& bucket) { bucket.push_back(index); });
  }

  bool clear(const PlacedCircle& cand, const std::vector<PlacedCircle>& placed, double gap) {
    bool ok = true;
    for_cells(cand.cx, cand.cy, cand.r, [&](std::vector<std::size_t>& bucket) {
      if (!ok) return;
      for (std::size_t i : bucket) {
        if (!circles_clear(cand, placed[i], gap)) {
          ok = false;
          return;
        }
      }
    });
    return ok;
  }

 private:
  template <typename Fn>
  void for_cells(double cx, double cy, double reach, Fn&& fn) {
    const int x0 = clamp_cell(std::floor((cx - reach) / cell_));
    const int x1 = clamp_cell(std::floor((cx + reach) / cell_));
    const int y0 = clamp_cell(std::floor((cy - reach) / cell_));
    const int y1 = clamp_cell(std::floor((cy + reach) / cell_));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        fn(cells_[static_cast<std::size_t>(y) * static_cast<std::size_t>(side_) + static_cast<std::size_t>(x)]);
  }
  int clamp_cell(double v) const { return std::clamp(static_cast<int>(v), 0, side_ - 1); }

  double canvas_;
  double cell_;
  int side_ = 1;
  std::vector<std::vector<std::size_t>> cells_;
};

}  // namespace

std::vector<PlacedCircle> pack_circles(const LayoutParams& layout, int canvas_px, Rng& rng) {
  layout.validate();
  require(canvas_px > 0, ErrorKind::Parameter, "canvas_px must be positive");
  const double side = static_cast<double>(canvas_px);
  const double gap = layout.gap_fraction * side;
  OccupancyGrid grid(side, std::max(4.0, side / 32.0));
  std::vector<PlacedCircle> placed;
  for (const auto& tier : layout.radius_tiers) {
    const double r = tier.radius_fraction * side;
    for (int slot = 0; slot < tier.max_count; ++slot) {
      for (int attempt = 0; attempt < layout.max_attempts_per_circle; ++attempt) {
        PlacedCircle c;
        c.r = r;
        c.cx = rng.uniform(r, side - r);
        c.cy = rng.uniform(r, side - r);
        if (c.cx - r < 0.0 || c.cx + r > side || c.cy - r < 0.0 || c.cy + r > side) continue;
        if (!grid.clear(c, placed, gap)) continue;
        grid.insert(c, placed.size(), gap);
        placed.push_back(c);
        break;
      }
    }
  }
  return placed;
}

std::vector<PlacedCircle> assign_colors(std::vector<PlacedCircle> circles, const Palette& palette, int num_colors,
                                        Rng& rng) {
  const int n = static_cast<int>(palette.colors.size());
  require(num_colors >= 1 && num_colors <= n, ErrorKind::Parameter,
          "num_colors must lie in 1.." + std::to_string(n) + ", got " + std::to_string(num_colors));
  // Partial Fisher-Yates: the first num_colors slots are a uniform subset.
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < num_colors; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(n - i));
    std::swap(order[static_cast<std::size_t>(i)], order[j]);
  }
  for (auto& c : circles) {
    const auto pick = order[rng.below(static_cast<std::uint64_t>(num_colors))];
    c.color = palette.colors[static_cast<std::size_t>(pick)];
  }
  return circles;
}

}  // namespace nsart::symgen
