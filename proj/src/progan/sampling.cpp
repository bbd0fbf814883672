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

#include "progan/progan.hpp"

namespace nsart::progan {

std::vector<float> latent_from_seed(std::uint64_t seed, int dim) {
  require(dim > 0, ErrorKind::Parameter, "latent dimension must be positive");
  Rng rng(seed);
  std::vector<float> z(static_cast<std::size_t>(dim));
  for (auto& v : z) v = static_cast<float>(rng.normal());
  return z;
}

std::vector<float> interpolate_latent(std::span<const float> z1, std::span<const float> z2, float alpha) {
  require(alpha >= 0.0f && alpha <= 1.0f, ErrorKind::Parameter,
          "alpha must lie in [0, 1], got " + std::to_string(alpha));
  require(z1.size() == z2.size(), ErrorKind::Shape, "latents differ in length");
  // Both products are exact in double, and the sum is commutative, so swapping
  // the endpoints together with alpha -> 1 - alpha gives the same bits.
  const double a = alpha;
  const double b = 1.0 - a;
  std::vector<float> z(z1.size());
  for (std::size_t i = 0; i < z.size(); ++i)
    z[i] = static_cast<float>(b * static_cast<double>(z1[i]) + a * static_cast<double>(z2[i]));
  return z;
}

ImageBuffer to_image(const float* chw, int resolution) {
  ImageBuffer img(resolution, resolution);
  const std::size_t plane = static_cast<std::size_t>(resolution) * resolution;
  for (int y = 0; y < resolution; ++y)
    for (int x = 0; x < resolution; ++x) {
      Rgb px{};
      for (int c = 0; c < 3; ++c) {
        const double v = (static_cast<double>(chw[c * plane + static_cast<std::size_t>(y) * resolution + x]) + 1.0) * 127.5;
        // nearbyint honours the default round-to-nearest-even mode.
        px[c] = std::isnan(v) ? 0 : static_cast<std::uint8_t>(std::nearbyint(std::clamp(v, 0.0, 255.0)));
      }
      img.set(x, y, px);
    }
  return img;
}

ImageBuffer render(const GanState& state, std::span<const float> z) {
  const int dim = state.config.latent_dim;
  require(static_cast<int>(z.size()) == dim, ErrorKind::Shape,
          "latent has " + std::to_string(z.size()) + " entries, model expects " + std::to_string(dim));
  const StagePosition pos = state.position();
  FGraph g;
  const auto bound = state.generator.params().bind(g, false);
  const FVar zv = g.constant(Tensor(Shape{1, dim}, std::vector<float>(z.begin(), z.end())));
  const Tensor out = state.generator.forward(bound, zv, pos).value();
  const int res = out.dim(2);
  ImageBuffer img = to_image(out.ptr(), res);
  const int final_res = state.config.final_resolution;
  if (res == final_res) return img;
  const int k = final_res / res;
  ImageBuffer big(final_res, final_res);
  for (int y = 0; y < final_res; ++y)
    for (int x = 0; x < final_res; ++x) big.set(x, y, img.at(x / k, y / k));
  return big;
}

ImageBuffer sample(const GanState& state, std::uint64_t seed) {
  return render(state, latent_from_seed(seed, state.config.latent_dim));
}

ImageBuffer interpolate(const GanState& state, std::uint64_t seed1, std::uint64_t seed2, float alpha) {
  const int dim = state.config.latent_dim;
  return render(state, interpolate_latent(latent_from_seed(seed1, dim), latent_from_seed(seed2, dim), alpha));
}

ImageBuffer sample_grid(const GanState& state, std::uint64_t first_seed, int side) {
  require(side > 0, ErrorKind::Parameter, "grid side must be positive");
  std::vector<ImageBuffer> tiles;
  for (int i = 0; i < side * side; ++i) tiles.push_back(sample(state, first_seed + static_cast<std::uint64_t>(i)));
  return tile_grid(tiles, side);
}

}  // namespace nsart::progan
