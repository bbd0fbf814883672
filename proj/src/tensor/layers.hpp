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

// Composite layers built from the primitives in ops.hpp, so their gradients
// (and gradients of gradients) come for free.

#pragma once

#include <cmath>

#include "tensor/ops.hpp"

namespace nsart::tensor {

/// x[B,F] * W[O,F]^T + b[O]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  return bias_add(matmul(x, weight, false, true), bias);
}

/// Divides each per-pixel feature vector (axis 1) by sqrt(mean of squares + eps).
template <typename T>
Var<T> pixel_norm(const Var<T>& x, T eps = T(1e-8)) {
  const int channels = x.shape().at(1);
  const auto mean_sq = scale(sum_axis(mul(x, x), 1), T(1) / static_cast<T>(channels));
  const auto inv = pow(add_scalar(mean_sq, eps), T(-0.5));
  return mul(x, expand_axis(inv, 1, channels));
}

/// Appends one channel holding the batch-wide mean of the per-feature
/// standard deviations (group = whole batch).
template <typename T>
Var<T> minibatch_stddev(const Var<T>& x, T eps = T(1e-8)) {
  const auto& s = x.shape();
  require(s.size() == 4, ErrorKind::Shape, "minibatch_stddev: input must be [B,C,H,W], got " + shape_str(s));
  const int batch = s[0];
  const T inv_batch = T(1) / static_cast<T>(batch);
  const auto mu = scale(sum_axis(x, 0), inv_batch);
  const auto centered = sub(x, expand_axis(mu, 0, batch));
  const auto var = scale(sum_axis(mul(centered, centered), 0), inv_batch);
  const auto sd = pow(add_scalar(var, eps), T(0.5));
  const auto avg = scale(sum(sd), T(1) / static_cast<T>(s[1] * s[2] * s[3]));
  return concat_channels(x, expand_scalar(avg, Shape{batch, 1, s[2], s[3]}));
}

/// He constant for the equalized learning rate: gain / sqrt(fan_in).
inline double he_scale(int fan_in, double gain) { return gain / std::sqrt(static_cast<double>(fan_in)); }

/// Equalized-learning-rate convolution: the stored weight is N(0,1) and is
/// scaled at run time. Padding keeps spatial size for odd kernels.
template <typename T>
Var<T> equalized_conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, double gain) {
  const auto& ws = weight.shape();
  const int fan_in = ws.at(1) * ws.at(2) * ws.at(3);
  const auto w = scale(weight, static_cast<T>(he_scale(fan_in, gain)));
  return bias_add(conv2d(x, w, Conv2dGeometry{1, ws[2] / 2}), bias);
}

template <typename T>
Var<T> equalized_linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, double gain) {
  const int fan_in = weight.shape().at(1);
  return linear(x, scale(weight, static_cast<T>(he_scale(fan_in, gain))), bias);
}

}  // namespace nsart::tensor
