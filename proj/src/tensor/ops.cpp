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

#include "tensor/ops.hpp"

#include <Eigen/Core>
#include <cmath>

namespace nsart::tensor {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
void same_graph(const Var<T>& a, const Var<T>& b, const char* op) {
  require(a.valid() && b.valid() && a.graph == b.graph, ErrorKind::State,
          std::string(op) + ": operands must be valid and share a graph");
}

template <typename T>
void same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  same_graph(a, b, op);
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return;
  if (sa.size() != sb.size())
    fail(ErrorKind::Shape, std::string(op) + ": rank mismatch " + shape_str(sa) + " vs " + shape_str(sb));
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (sa[i] != sb[i])
      fail(ErrorKind::Shape, std::string(op) + ": dim " + std::to_string(i) + " is " + std::to_string(sa[i]) +
                                 " vs " + std::to_string(sb[i]));
}

// Outer / axis / inner factorisation of a shape around one axis.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  r.extent = static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i)
    r.inner *= static_cast<std::size_t>(s[i]);
  return r;
}

void check_axis(const Shape& s, int axis, const char* op) {
  require(axis >= 0 && axis < static_cast<int>(s.size()), ErrorKind::Shape,
          std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(s));
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "add");
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  return a.graph->record("add", std::move(out), {a, b},
                         [](Graph<T>&, const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{g, g}; });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "sub");
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
  return a.graph->record("sub", std::move(out), {a, b},
                         [](Graph<T>&, const Var<T>& g, const std::vector<bool>& need) {
                           return std::vector<Var<T>>{g, need[1] ? scale(g, T(-1)) : Var<T>{}};
                         });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  same_shape(a, b, "mul");
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  return a.graph->record("mul", std::move(out), {a, b},
                         [a, b](Graph<T>&, const Var<T>& g, const std::vector<bool>& need) {
                           return std::vector<Var<T>>{need[0] ? mul(g, b) : Var<T>{}, need[1] ? mul(g, a) : Var<T>{}};
                         });
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  const auto& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * c;
  return a.graph->record("scale", std::move(out), {a},
                         [c](Graph<T>&, const Var<T>& g, const std::vector<bool>&) {
                           return std::vector<Var<T>>{scale(g, c)};
                         });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
  const auto& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + c;
  return a.graph->record("add_scalar", std::move(out), {a},
                         [](Graph<T>&, const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{g}; });
}

template <typename T>
Var<T> pow(const Var<T>& a, T exponent) {
  const auto& av = a.value();
  Tensor<T> out(av.shape());
  if (exponent == T(2)) {
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * av[i];
  } else if (exponent == T(1)) {
    out = av;
  } else {
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::pow(av[i], exponent);
  }
  return a.graph->record("pow", std::move(out), {a},
                         [a, exponent](Graph<T>&, const Var<T>& g, const std::vector<bool>&) {
                           if (exponent == T(1)) return std::vector<Var<T>>{g};
                           if (exponent == T(2)) return std::vector<Var<T>>{mul(g, scale(a, T(2)))};
                           return std::vector<Var<T>>{mul(g, scale(pow(a, exponent - T(1)), exponent))};
                         });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  Tensor<T> mask(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    mask[i] = xv[i] > T(0) ? T(1) : slope;
    out[i] = xv[i] * mask[i];
  }
  // The local slope is piecewise constant, so the rule is a product with a
  // constant mask and stays differentiable.
  return x.graph->record("leaky_relu", std::move(out), {x},
                         [mask = std::move(mask)](Graph<T>& gr, const Var<T>& g, const std::vector<bool>&) {
                           return std::vector<Var<T>>{mul(g, gr.constant(mask))};
                         });
}

// ---------------------------------------------------------------------------
// Reductions and broadcasts

template <typename T>
Var<T> sum(const Var<T>& a) {
  const auto& av = a.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.numel(); ++i) acc += static_cast<double>(av[i]);
  Shape shape = av.shape();
  return a.graph->record("sum", Tensor<T>::scalar(static_cast<T>(acc)), {a},
                         [shape](Graph<T>&, const Var<T>& g, const std::vector<bool>&) {
                           return std::vector<Var<T>>{expand_scalar(g, shape)};
                         });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), static_cast<T>(1.0 / static_cast<double>(a.value().numel())));
}

template <typename T>
Var<T> sum_axis(const Var<T>& a, int axis) {
  const auto& av = a.value();
  check_axis(av.shape(), axis, "sum_axis");
  const auto sp = split_at(av.shape(), axis);
  Shape out_shape = av.shape();
  out_shape[static_cast<std::size_t>(axis)] = 1;
  Tensor<T> out(out_shape);
  std::vector<double> acc(sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < sp.extent; ++k) {
      const T* row = av.ptr() + (o * sp.extent + k) * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) acc[i] += static_cast<double>(row[i]);
    }
    for (std::size_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] = static_cast<T>(acc[i]);
  }
  const int n = static_cast<int>(sp.extent);
  return a.graph->record("sum_axis", std::move(out), {a},
                         [axis, n](Graph<T>&, const Var<T>& g, const std::vector<bool>&) {
                           return std::vector<Var<T>>{expand_axis(g, axis, n)};
                         });
}

template <typename T>
Var<T> expand_axis(const Var<T>& a, int axis, int n) {
  const auto& av = a.value();
  check_axis(av.shape(), axis, "expand_axis");
  require(av.dim(axis) == 1, ErrorKind::Shape,
          "expand_axis: dim " + std::to_string(axis) + " must be 1, got " + std::to_string(av.dim(axis)));
  require(n > 0, ErrorKind::Shape, "expand_axis: repeat count must be positive");
  Shape out_shape = av.shape();
  out_shape[static_cast<std::size_t>(axis)] = n;
  const auto sp = split_at(out_shape, axis);
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.extent; ++k)
      std::copy_n(av.ptr() + o * sp.inner, sp.inner, out.ptr() + (o * sp.extent + k) * sp.inner);
  return a.graph->record("expand_axis", std::move(out), {a},
                         [axis](Graph<T>&, const Var<T>& g, const std::vector<bool>&) {
                           return std::vector<Var<T>>{sum_axis(g, axis)};
                         });
}

template <typename T>
Var<T> expand_scalar(const Var<T>& s, const Shape& shape) {
  require(s.value().numel() == 1, ErrorKind::Shape, "expand_scalar: source must hold one element");
  Tensor<T> out(shape, s.value()[0]);
  const Shape src = s.shape();
  return s.graph->record("expand_scalar", std::move(out), {s},
                         [src](Graph<T>&, const Var<T>& g, const std::vector<bool>&) {
                           return std::vector<Var<T>>{reshape(sum(g), src)};
                         });
}

template <typename T>
Var<T> reshape(const Var<T>& a, const Shape& shape) {
  const Shape src = a.shape();
  if (src == shape) return a;
  return a.graph->record("reshape", a.value().reshaped(shape), {a},
                         [src](Graph<T>&, const Var<T>& g, const std::vector<bool>&) {
                           return std::vector<Var<T>>{reshape(g, src)};
                         });
}

// ---------------------------------------------------------------------------
// Channel structure

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  same_graph(a, b, "concat_channels");
  const auto& as = a.shape();
  const auto& bs = b.shape();
  require(as.size() >= 2 && as.size() == bs.size(), ErrorKind::Shape,
          "concat_channels: ranks must match and be >= 2, got " + shape_str(as) + " and " + shape_str(bs));
  for (std::size_t i = 0; i < as.size(); ++i)
    if (i != 1 && as[i] != bs[i])
      fail(ErrorKind::Shape, "concat_channels: dim " + std::to_string(i) + " differs (" + std::to_string(as[i]) +
                                 " vs " + std::to_string(bs[i]) + ")");
  const auto sa = split_at(as, 1);
  const auto sb = split_at(bs, 1);
  Shape out_shape = as;
  out_shape[1] = as[1] + bs[1];
  Tensor<T> out(out_shape);
  const std::size_t row = sa.extent * sa.inner + sb.extent * sb.inner;
  for (std::size_t o = 0; o < sa.outer; ++o) {
    std::copy_n(a.value().ptr() + o * sa.extent * sa.inner, sa.extent * sa.inner, out.ptr() + o * row);
    std::copy_n(b.value().ptr() + o * sb.extent * sb.inner, sb.extent * sb.inner,
                out.ptr() + o * row + sa.extent * sa.inner);
  }
  const int ca = as[1], cb = bs[1];
  return a.graph->record("concat_channels", std::move(out), {a, b},
                         [ca, cb](Graph<T>&, const Var<T>& g, const std::vector<bool>& need) {
                           return std::vector<Var<T>>{need[0] ? slice_channels(g, 0, ca) : Var<T>{},
                                                      need[1] ? slice_channels(g, ca, cb) : Var<T>{}};
                         });
}

template <typename T>
Var<T> slice_channels(const Var<T>& a, int start, int count) {
  const auto& as = a.shape();
  require(as.size() >= 2, ErrorKind::Shape, "slice_channels: rank must be >= 2");
  require(start >= 0 && count > 0 && start + count <= as[1], ErrorKind::Shape,
          "slice_channels: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
              ") exceeds dim 1 of extent " + std::to_string(as[1]));
  const auto sp = split_at(as, 1);
  Shape out_shape = as;
  out_shape[1] = count;
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(a.value().ptr() + (o * sp.extent + static_cast<std::size_t>(start)) * sp.inner,
                static_cast<std::size_t>(count) * sp.inner, out.ptr() + o * static_cast<std::size_t>(count) * sp.inner);
  const int total = as[1];
  return a.graph->record("slice_channels", std::move(out), {a},
                         [start, total](Graph<T>&, const Var<T>& g, const std::vector<bool>&) {
                           return std::vector<Var<T>>{pad_channels(g, start, total)};
                         });
}

template <typename T>
Var<T> pad_channels(const Var<T>& a, int start, int total) {
  const auto& as = a.shape();
  require(as.size() >= 2, ErrorKind::Shape, "pad_channels: rank must be >= 2");
  const int count = as[1];
  require(start >= 0 && start + count <= total, ErrorKind::Shape,
          "pad_channels: dim 1 of extent " + std::to_string(count) + " at offset " + std::to_string(start) +
              " does not fit in " + std::to_string(total));
  const auto sp = split_at(as, 1);
  Shape out_shape = as;
  out_shape[1] = total;
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(a.value().ptr() + o * sp.extent * sp.inner, sp.extent * sp.inner,
                out.ptr() + (o * static_cast<std::size_t>(total) + static_cast<std::size_t>(start)) * sp.inner);
  return a.graph->record("pad_channels", std::move(out), {a},
                         [start, count](Graph<T>&, const Var<T>& g, const std::vector<bool>&) {
                           return std::vector<Var<T>>{slice_channels(g, start, count)};
                         });
}

template <typename T>
Var<T> channel_sum(const Var<T>& a) {
  const auto& as = a.shape();
  require(as.size() >= 2, ErrorKind::Shape, "channel_sum: rank must be >= 2");
  const auto sp = split_at(as, 1);
  std::vector<double> acc(sp.extent, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t c = 0; c < sp.extent; ++c) {
      const T* p = a.value().ptr() + (o * sp.extent + c) * sp.inner;
      double s = 0.0;
      for (std::size_t i = 0; i < sp.inner; ++i) s += static_cast<double>(p[i]);
      acc[c] += s;
    }
  Tensor<T> out(Shape{static_cast<int>(sp.extent)});
  for (std::size_t c = 0; c < sp.extent; ++c) out[c] = static_cast<T>(acc[c]);
  const Shape shape = as;
  return a.graph->record("channel_sum", std::move(out), {a},
                         [shape](Graph<T>&, const Var<T>& g, const std::vector<bool>&) {
                           return std::vector<Var<T>>{channel_broadcast(g, shape)};
                         });
}

template <typename T>
Var<T> channel_broadcast(const Var<T>& b, const Shape& shape) {
  require(shape.size() >= 2, ErrorKind::Shape, "channel_broadcast: target rank must be >= 2");
  require(b.shape().size() == 1 && b.shape()[0] == shape[1], ErrorKind::Shape,
          "channel_broadcast: vector of shape " + shape_str(b.shape()) + " does not match dim 1 of " +
              shape_str(shape));
  const auto sp = split_at(shape, 1);
  Tensor<T> out(shape);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t c = 0; c < sp.extent; ++c)
      std::fill_n(out.ptr() + (o * sp.extent + c) * sp.inner, sp.inner, b.value()[c]);
  return b.graph->record("channel_broadcast", std::move(out), {b},
                         [](Graph<T>&, const Var<T>& g, const std::vector<bool>&) {
                           return std::vector<Var<T>>{channel_sum(g)};
                         });
}

template <typename T>
Var<T> bias_add(const Var<T>& x, const Var<T>& bias) {
  return add(x, channel_broadcast(bias, x.shape()));
}

// ---------------------------------------------------------------------------
// Matrix product

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool ta, bool tb) {
  same_graph(a, b, "matmul");
  const auto& as = a.shape();
  const auto& bs = b.shape();
  require(as.size() == 2 && bs.size() == 2, ErrorKind::Shape,
          "matmul: operands must be rank 2, got " + shape_str(as) + " and " + shape_str(bs));
  const int m = ta ? as[1] : as[0];
  const int ka = ta ? as[0] : as[1];
  const int kb = tb ? bs[1] : bs[0];
  const int n = tb ? bs[0] : bs[1];
  require(ka == kb, ErrorKind::Shape,
          "matmul: inner dims differ (" + std::to_string(ka) + " vs " + std::to_string(kb) + ")");
  Tensor<T> out(Shape{m, n});
  ConstMatMap<T> am(a.value().ptr(), as[0], as[1]);
  ConstMatMap<T> bm(b.value().ptr(), bs[0], bs[1]);
  MatMap<T> om(out.ptr(), m, n);
  if (!ta && !tb) om.noalias() = am * bm;
  else if (!ta && tb) om.noalias() = am * bm.transpose();
  else if (ta && !tb) om.noalias() = am.transpose() * bm;
  else om.noalias() = am.transpose() * bm.transpose();
  return a.graph->record("matmul", std::move(out), {a, b},
                         [a, b, ta, tb](Graph<T>&, const Var<T>& g, const std::vector<bool>& need) {
                           Var<T> ga, gb;
                           if (!ta && !tb) {
                             if (need[0]) ga = matmul(g, b, false, true);
                             if (need[1]) gb = matmul(a, g, true, false);
                           } else if (!ta && tb) {
                             if (need[0]) ga = matmul(g, b, false, false);
                             if (need[1]) gb = matmul(g, a, true, false);
                           } else if (ta && !tb) {
                             if (need[0]) ga = matmul(b, g, false, true);
                             if (need[1]) gb = matmul(a, g, false, false);
                           } else {
                             if (need[0]) ga = matmul(b, g, true, true);
                             if (need[1]) gb = matmul(g, a, true, true);
                           }
                           return std::vector<Var<T>>{ga, gb};
                         });
}

// ---------------------------------------------------------------------------
// Convolution family

namespace {

struct ConvDims {
  int batch, in_ch, height, width, out_ch, kh, kw, out_h, out_w;
  std::size_t patch() const { return static_cast<std::size_t>(in_ch) * kh * kw; }
  std::size_t plane() const { return static_cast<std::size_t>(out_h) * out_w; }
  bool pointwise(const Conv2dGeometry& g) const { return kh == 1 && kw == 1 && g.stride == 1 && g.padding == 0; }
};

ConvDims conv_dims(const Shape& x, const Shape& w, Conv2dGeometry geo, const char* op) {
  require(x.size() == 4, ErrorKind::Shape, std::string(op) + ": input must be [B,C,H,W], got " + shape_str(x));
  require(w.size() == 4, ErrorKind::Shape, std::string(op) + ": weight must be [O,C,KH,KW], got " + shape_str(w));
  require(x[1] == w[1], ErrorKind::Shape,
          std::string(op) + ": input dim 1 (channels) is " + std::to_string(x[1]) + " but weight dim 1 is " +
              std::to_string(w[1]));
  require(geo.stride >= 1 && geo.padding >= 0, ErrorKind::Parameter,
          std::string(op) + ": stride must be >= 1 and padding >= 0");
  ConvDims d{x[0], x[1], x[2], x[3], w[0], w[2], w[3], 0, 0};
  const int span_h = d.height + 2 * geo.padding - d.kh;
  const int span_w = d.width + 2 * geo.padding - d.kw;
  require(span_h >= 0, ErrorKind::Shape,
          std::string(op) + ": kernel height " + std::to_string(d.kh) + " exceeds padded input dim 2");
  require(span_w >= 0, ErrorKind::Shape,
          std::string(op) + ": kernel width " + std::to_string(d.kw) + " exceeds padded input dim 3");
  d.out_h = span_h / geo.stride + 1;
  d.out_w = span_w / geo.stride + 1;
  return d;
}

// Output columns [lo, hi) whose input column ox * stride - padding + kx lies
// inside the image.
struct ColumnRange {
  int lo, hi;
};

inline ColumnRange valid_columns(const ConvDims& d, Conv2dGeometry geo, int kx) {
  const int off = kx - geo.padding;
  int lo = off >= 0 ? 0 : (-off + geo.stride - 1) / geo.stride;
  int hi = d.width - 1 - off < 0 ? 0 : (d.width - 1 - off) / geo.stride + 1;
  hi = std::min(hi, d.out_w);
  lo = std::min(lo, hi);
  return {lo, hi};
}

template <typename T>
void im2col(const T* x, const ConvDims& d, Conv2dGeometry geo, T* col) {
  const std::size_t plane = d.plane();
  for (int c = 0; c < d.in_ch; ++c)
    for (int ky = 0; ky < d.kh; ++ky)
      for (int kx = 0; kx < d.kw; ++kx) {
        T* row = col + ((static_cast<std::size_t>(c) * d.kh + ky) * d.kw + kx) * plane;
        const T* src = x + static_cast<std::size_t>(c) * d.height * d.width;
        const auto [lo, hi] = valid_columns(d, geo, kx);
        const int off = kx - geo.padding;
        for (int oy = 0; oy < d.out_h; ++oy) {
          const int iy = oy * geo.stride - geo.padding + ky;
          T* dst = row + static_cast<std::size_t>(oy) * d.out_w;
          if (iy < 0 || iy >= d.height) {
            std::fill_n(dst, d.out_w, T(0));
            continue;
          }
          const T* line = src + static_cast<std::size_t>(iy) * d.width;
          std::fill_n(dst, lo, T(0));
          if (geo.stride == 1) {
            std::copy(line + lo + off, line + hi + off, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = line[ox * geo.stride + off];
          }
          std::fill(dst + hi, dst + d.out_w, T(0));
        }
      }
}

template <typename T>
void col2im_add(const T* col, const ConvDims& d, Conv2dGeometry geo, T* x) {
  const std::size_t plane = d.plane();
  for (int c = 0; c < d.in_ch; ++c)
    for (int ky = 0; ky < d.kh; ++ky)
      for (int kx = 0; kx < d.kw; ++kx) {
        const T* row = col + ((static_cast<std::size_t>(c) * d.kh + ky) * d.kw + kx) * plane;
        T* dst = x + static_cast<std::size_t>(c) * d.height * d.width;
        const auto [lo, hi] = valid_columns(d, geo, kx);
        const int off = kx - geo.padding;
        for (int oy = 0; oy < d.out_h; ++oy) {
          const int iy = oy * geo.stride - geo.padding + ky;
          if (iy < 0 || iy >= d.height) continue;
          T* line = dst + static_cast<std::size_t>(iy) * d.width;
          const T* src = row + static_cast<std::size_t>(oy) * d.out_w;
          for (int ox = lo; ox < hi; ++ox) line[ox * geo.stride + off] += src[ox];
        }
      }
}

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w, const ConvDims& d, Conv2dGeometry geo) {
  Tensor<T> out(Shape{d.batch, d.out_ch, d.out_h, d.out_w});
  const std::size_t k = d.patch(), n = d.plane();
  ConstMatMap<T> wm(w.ptr(), d.out_ch, static_cast<Eigen::Index>(k));
  std::vector<T> col(d.pointwise(geo) ? 0 : k * n);
  const std::size_t in_stride = static_cast<std::size_t>(d.in_ch) * d.height * d.width;
  for (int b = 0; b < d.batch; ++b) {
    const T* xb = x.ptr() + b * in_stride;
    const T* cp = xb;
    if (!d.pointwise(geo)) {
      im2col(xb, d, geo, col.data());
      cp = col.data();
    }
    ConstMatMap<T> cm(cp, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
    MatMap<T> om(out.ptr() + static_cast<std::size_t>(b) * d.out_ch * n, d.out_ch, static_cast<Eigen::Index>(n));
    om.noalias() = wm * cm;
  }
  return out;
}

template <typename T>
Tensor<T> conv_input_grad_kernel(const Tensor<T>& gy, const Tensor<T>& w, const ConvDims& d, Conv2dGeometry geo) {
  Tensor<T> gx(Shape{d.batch, d.in_ch, d.height, d.width});
  const std::size_t k = d.patch(), n = d.plane();
  ConstMatMap<T> wm(w.ptr(), d.out_ch, static_cast<Eigen::Index>(k));
  std::vector<T> col(k * n);
  const std::size_t in_stride = static_cast<std::size_t>(d.in_ch) * d.height * d.width;
  for (int b = 0; b < d.batch; ++b) {
    ConstMatMap<T> gm(gy.ptr() + static_cast<std::size_t>(b) * d.out_ch * n, d.out_ch, static_cast<Eigen::Index>(n));
    if (d.pointwise(geo)) {
      MatMap<T> xm(gx.ptr() + b * in_stride, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
      xm.noalias() = wm.transpose() * gm;
      continue;
    }
    MatMap<T> cm(col.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
    cm.noalias() = wm.transpose() * gm;
    col2im_add(col.data(), d, geo, gx.ptr() + b * in_stride);
  }
  return gx;
}

template <typename T>
Tensor<T> conv_weight_grad_kernel(const Tensor<T>& x, const Tensor<T>& gy, const ConvDims& d, Conv2dGeometry geo) {
  Tensor<T> gw(Shape{d.out_ch, d.in_ch, d.kh, d.kw});
  const std::size_t k = d.patch(), n = d.plane();
  MatMap<T> wm(gw.ptr(), d.out_ch, static_cast<Eigen::Index>(k));
  std::vector<T> col(d.pointwise(geo) ? 0 : k * n);
  const std::size_t in_stride = static_cast<std::size_t>(d.in_ch) * d.height * d.width;
  for (int b = 0; b < d.batch; ++b) {
    const T* xb = x.ptr() + b * in_stride;
    const T* cp = xb;
    if (!d.pointwise(geo)) {
      im2col(xb, d, geo, col.data());
      cp = col.data();
    }
    ConstMatMap<T> cm(cp, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
    ConstMatMap<T> gm(gy.ptr() + static_cast<std::size_t>(b) * d.out_ch * n, d.out_ch, static_cast<Eigen::Index>(n));
    wm.noalias() += gm * cm.transpose();
  }
  return gw;
}

void check_grad_shape(const Shape& gy, const ConvDims& d, const char* op) {
  const Shape expect{d.batch, d.out_ch, d.out_h, d.out_w};
  if (gy == expect) return;
  require(gy.size() == 4, ErrorKind::Shape, std::string(op) + ": gradient must be rank 4, got " + shape_str(gy));
  for (std::size_t i = 0; i < 4; ++i)
    require(gy[i] == expect[i], ErrorKind::Shape,
            std::string(op) + ": gradient dim " + std::to_string(i) + " is " + std::to_string(gy[i]) +
                ", expected " + std::to_string(expect[i]));
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, Conv2dGeometry geo) {
  same_graph(x, w, "conv2d");
  const ConvDims d = conv_dims(x.shape(), w.shape(), geo, "conv2d");
  return x.graph->record("conv2d", conv_forward(x.value(), w.value(), d, geo), {x, w},
                         [x, w, geo](Graph<T>&, const Var<T>& g, const std::vector<bool>& need) {
                           return std::vector<Var<T>>{
                               need[0] ? conv2d_input_grad(g, w, x.shape(), geo) : Var<T>{},
                               need[1] ? conv2d_weight_grad(x, g, w.shape(), geo) : Var<T>{}};
                         });
}

template <typename T>
Var<T> conv2d_input_grad(const Var<T>& grad_out, const Var<T>& w, const Shape& input_shape, Conv2dGeometry geo) {
  same_graph(grad_out, w, "conv2d_input_grad");
  const ConvDims d = conv_dims(input_shape, w.shape(), geo, "conv2d_input_grad");
  check_grad_shape(grad_out.shape(), d, "conv2d_input_grad");
  return grad_out.graph->record(
      "conv2d_input_grad", conv_input_grad_kernel(grad_out.value(), w.value(), d, geo), {grad_out, w},
      [grad_out, w, geo](Graph<T>&, const Var<T>& g, const std::vector<bool>& need) {
        return std::vector<Var<T>>{need[0] ? conv2d(g, w, geo) : Var<T>{},
                                   need[1] ? conv2d_weight_grad(g, grad_out, w.shape(), geo) : Var<T>{}};
      });
}

template <typename T>
Var<T> conv2d_weight_grad(const Var<T>& x, const Var<T>& grad_out, const Shape& weight_shape, Conv2dGeometry geo) {
  same_graph(x, grad_out, "conv2d_weight_grad");
  const ConvDims d = conv_dims(x.shape(), weight_shape, geo, "conv2d_weight_grad");
  check_grad_shape(grad_out.shape(), d, "conv2d_weight_grad");
  return x.graph->record(
      "conv2d_weight_grad", conv_weight_grad_kernel(x.value(), grad_out.value(), d, geo), {x, grad_out},
      [x, grad_out, geo](Graph<T>&, const Var<T>& g, const std::vector<bool>& need) {
        return std::vector<Var<T>>{need[0] ? conv2d_input_grad(grad_out, g, x.shape(), geo) : Var<T>{},
                                   need[1] ? conv2d(x, g, geo) : Var<T>{}};
      });
}

// ---------------------------------------------------------------------------
// Resampling

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  const auto& s = x.shape();
  require(s.size() == 4, ErrorKind::Shape, "upsample_nearest2x: input must be [B,C,H,W], got " + shape_str(s));
  const int h = s[2], w = s[3];
  Tensor<T> out(Shape{s[0], s[1], 2 * h, 2 * w});
  const std::size_t planes = static_cast<std::size_t>(s[0]) * s[1];
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.value().ptr() + p * h * w;
    T* dst = out.ptr() + p * 4 * h * w;
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        dst[static_cast<std::size_t>(y) * 2 * w + xx] = src[static_cast<std::size_t>(y / 2) * w + xx / 2];
  }
  return x.graph->record("upsample_nearest2x", std::move(out), {x},
                         [](Graph<T>&, const Var<T>& g, const std::vector<bool>&) {
                           return std::vector<Var<T>>{scale(downsample_avg2x(g), T(4))};
                         });
}

template <typename T>
Var<T> downsample_avg2x(const Var<T>& x) {
  const auto& s = x.shape();
  require(s.size() == 4, ErrorKind::Shape, "downsample_avg2x: input must be [B,C,H,W], got " + shape_str(s));
  require(s[2] % 2 == 0, ErrorKind::Shape, "downsample_avg2x: dim 2 (height " + std::to_string(s[2]) + ") is odd");
  require(s[3] % 2 == 0, ErrorKind::Shape, "downsample_avg2x: dim 3 (width " + std::to_string(s[3]) + ") is odd");
  const int h = s[2] / 2, w = s[3] / 2;
  Tensor<T> out(Shape{s[0], s[1], h, w});
  const std::size_t planes = static_cast<std::size_t>(s[0]) * s[1];
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.value().ptr() + p * 4 * h * w;
    T* dst = out.ptr() + p * h * w;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const std::size_t r0 = static_cast<std::size_t>(2 * y) * 2 * w + 2 * xx;
        const std::size_t r1 = r0 + 2 * static_cast<std::size_t>(w);
        dst[static_cast<std::size_t>(y) * w + xx] = (src[r0] + src[r0 + 1] + src[r1] + src[r1 + 1]) * T(0.25);
      }
  }
  return x.graph->record("downsample_avg2x", std::move(out), {x},
                         [](Graph<T>&, const Var<T>& g, const std::vector<bool>&) {
                           return std::vector<Var<T>>{scale(upsample_nearest2x(g), T(0.25))};
                         });
}

// ---------------------------------------------------------------------------

#define NSART_INSTANTIATE_OPS(T)                                                                      \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                  \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                  \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                  \
  template Var<T> scale(const Var<T>&, T);                                                            \
  template Var<T> add_scalar(const Var<T>&, T);                                                       \
  template Var<T> pow(const Var<T>&, T);                                                              \
  template Var<T> leaky_relu(const Var<T>&, T);                                                       \
  template Var<T> sum(const Var<T>&);                                                                 \
  template Var<T> mean(const Var<T>&);                                                                \
  template Var<T> sum_axis(const Var<T>&, int);                                                       \
  template Var<T> expand_axis(const Var<T>&, int, int);                                               \
  template Var<T> expand_scalar(const Var<T>&, const Shape&);                                         \
  template Var<T> reshape(const Var<T>&, const Shape&);                                               \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                                      \
  template Var<T> slice_channels(const Var<T>&, int, int);                                            \
  template Var<T> pad_channels(const Var<T>&, int, int);                                              \
  template Var<T> channel_sum(const Var<T>&);                                                         \
  template Var<T> channel_broadcast(const Var<T>&, const Shape&);                                     \
  template Var<T> bias_add(const Var<T>&, const Var<T>&);                                             \
  template Var<T> matmul(const Var<T>&, const Var<T>&, bool, bool);                                   \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, Conv2dGeometry);                               \
  template Var<T> conv2d_input_grad(const Var<T>&, const Var<T>&, const Shape&, Conv2dGeometry);      \
  template Var<T> conv2d_weight_grad(const Var<T>&, const Var<T>&, const Shape&, Conv2dGeometry);     \
  template Var<T> upsample_nearest2x(const Var<T>&);                                                  \
  template Var<T> downsample_avg2x(const Var<T>&);

NSART_INSTANTIATE_OPS(float)
NSART_INSTANTIATE_OPS(double)

}  // namespace nsart::tensor
