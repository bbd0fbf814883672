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

#include <cstdint>
#include <span>
#include <vector>

#include "tensor/tensor.hpp"

namespace nsart::tensor {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Tensor<float>> first_moment;
  std::vector<Tensor<float>> second_moment;

  /// Zeroed moments shaped like `params`.
  static AdamState like(std::span<const Tensor<float>> params, AdamConfig config);
};

/// One bias-corrected Adam update in place. Throws ErrorKind::Numeric if any
/// gradient entry is NaN or infinite; nothing is modified in that case.
void adam_step(std::span<Tensor<float>> params, std::span<const Tensor<float>> grads, AdamState& state);

}  // namespace nsart::tensor
