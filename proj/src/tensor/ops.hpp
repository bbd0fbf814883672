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

// Differentiable primitives. Every backward rule is expressed through these
// same primitives, so gradients can be differentiated again.

#pragma once

#include "tensor/graph.hpp"

namespace nsart::tensor {

// Elementwise, same-shape.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T c);
template <typename T> Var<T> add_scalar(const Var<T>& a, T c);
template <typename T> Var<T> pow(const Var<T>& a, T exponent);
template <typename T> Var<T> leaky_relu(const Var<T>& x, T slope = T(0.2));

// Reductions accumulate in double regardless of T.
template <typename T> Var<T> sum(const Var<T>& a);   // -> shape {1}
template <typename T> Var<T> mean(const Var<T>& a);  // -> shape {1}
/// Sum over one axis, keeping it with extent 1.
template <typename T> Var<T> sum_axis(const Var<T>& a, int axis);
/// Repeat a size-1 axis `n` times (adjoint of sum_axis).
template <typename T> Var<T> expand_axis(const Var<T>& a, int axis, int n);
/// Broadcast a one-element tensor to `shape` (adjoint of sum).
template <typename T> Var<T> expand_scalar(const Var<T>& s, const Shape& shape);

template <typename T> Var<T> reshape(const Var<T>& a, const Shape& shape);

// Axis-1 ("channel") structure on tensors of rank >= 2.
template <typename T> Var<T> concat_channels(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> slice_channels(const Var<T>& a, int start, int count);
template <typename T> Var<T> pad_channels(const Var<T>& a, int start, int total);
/// Sum over every axis except 1 -> shape {C}.
template <typename T> Var<T> channel_sum(const Var<T>& a);
/// Copy a {C} vector across every other axis of `shape`.
template <typename T> Var<T> channel_broadcast(const Var<T>& b, const Shape& shape);
template <typename T> Var<T> bias_add(const Var<T>& x, const Var<T>& bias);

/// op(a) * op(b) for rank-2 operands, op = transpose when the flag is set.
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_a, bool transpose_b);

struct Conv2dGeometry {
  int stride = 1;
  int padding = 0;
};

/// Cross-correlation: x[B,C,H,W] with w[O,C,KH,KW] -> [B,O,HO,WO].
template <typename T> Var<T> conv2d(const Var<T>& x, const Var<T>& w, Conv2dGeometry geo = {});
/// Gradient of conv2d with respect to its input (a transposed convolution).
template <typename T>
Var<T> conv2d_input_grad(const Var<T>& grad_out, const Var<T>& w, const Shape& input_shape, Conv2dGeometry geo);
/// Gradient of conv2d with respect to its weight.
template <typename T>
Var<T> conv2d_weight_grad(const Var<T>& x, const Var<T>& grad_out, const Shape& weight_shape, Conv2dGeometry geo);

template <typename T> Var<T> upsample_nearest2x(const Var<T>& x);
template <typename T> Var<T> downsample_avg2x(const Var<T>& x);

}  // namespace nsart::tensor
