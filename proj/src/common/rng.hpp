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

#pragma once

#include <array>
#include <cstdint>

namespace nsart {

/// splitmix64 step; used to expand a 64-bit seed into generator state and to
/// derive independent child seeds.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// xoshiro256** seeded through splitmix64. Integer-only, so a given seed
/// produces the same stream on every platform.
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed) noexcept;
  static Rng from_state(const State& s) noexcept;

  std::uint64_t next() noexcept;
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) noexcept;
  /// Unbiased integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  bool coin() noexcept { return (next() >> 63) != 0; }
  /// Standard normal via Box-Muller. Draws are produced in pairs; the second
  /// value is cached, and the cache is part of the state.
  double normal() noexcept;

  const State& state() const noexcept { return s_; }
  bool has_spare() const noexcept { return has_spare_; }
  double spare() const noexcept { return spare_; }
  void restore_spare(bool has, double value) noexcept {
    has_spare_ = has;
    spare_ = value;
  }

 private:
  Rng() = default;
  State s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nsart
