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

#include <filesystem>
#include <random>
#include <string>

#include "common/rng.hpp"
#include "tensor/tensor.hpp"

namespace nsart::testing {

template <typename T = double>
tensor::Tensor<T> random_tensor(Rng& rng, tensor::Shape shape, double lo = -1.0, double hi = 1.0) {
  tensor::Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Values bounded away from zero, for piecewise-linear ops whose kink would
/// otherwise fall inside a finite-difference step.
template <typename T = double>
tensor::Tensor<T> random_tensor_away_from_zero(Rng& rng, tensor::Shape shape, double margin = 0.05) {
  tensor::Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) {
    const double mag = rng.uniform(margin, 1.0);
    v = static_cast<T>(rng.coin() ? mag : -mag);
  }
  return t;
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("nsart-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace nsart::testing
