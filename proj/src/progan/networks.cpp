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

#include <cmath>

#include "progan/progan.hpp"
#include "tensor/layers.hpp"

namespace nsart::progan {

namespace {

using namespace nsart::tensor;

const double kReluGain = std::sqrt(2.0);

Tensor normal_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

ConvParams add_conv(ParameterSet& ps, const std::string& name, int out, int in, int k, Rng& rng) {
  ConvParams p;
  p.weight = ps.add(name + ".w", normal_tensor({out, in, k, k}, rng));
  p.bias = ps.add(name + ".b", Tensor(Shape{out}));
  return p;
}

ConvParams add_dense(ParameterSet& ps, const std::string& name, int out, int in, Rng& rng) {
  ConvParams p;
  p.weight = ps.add(name + ".w", normal_tensor({out, in}, rng));
  p.bias = ps.add(name + ".b", Tensor(Shape{out}));
  return p;
}

FVar conv(const std::vector<FVar>& b, const ConvParams& p, const FVar& x, double gain = kReluGain) {
  return equalized_conv2d(x, b[static_cast<std::size_t>(p.weight)], b[static_cast<std::size_t>(p.bias)], gain);
}

FVar dense(const std::vector<FVar>& b, const ConvParams& p, const FVar& x, double gain) {
  return equalized_linear(x, b[static_cast<std::size_t>(p.weight)], b[static_cast<std::size_t>(p.bias)], gain);
}

FVar lrelu(const FVar& x) { return leaky_relu(x, 0.2f); }

FVar blend(const FVar& fresh, const FVar& skip, float fade) {
  return add(scale(fresh, fade), scale(skip, 1.0f - fade));
}

void check_position(const GanConfig& config, StagePosition pos) {
  require(pos.stage >= 0 && pos.stage <= config.max_stage(), ErrorKind::Parameter,
          "stage " + std::to_string(pos.stage) + " outside 0.." + std::to_string(config.max_stage()));
  require(pos.fade >= 0.0f && pos.fade <= 1.0f, ErrorKind::Parameter, "fade must lie in [0, 1]");
}

}  // namespace

Generator::Generator(const GanConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const auto& ch = config_.channels;
  dense_ = add_dense(params_, "g.dense", ch[0] * 16, config_.latent_dim, rng);
  base_conv_ = add_conv(params_, "g.s0.conv", ch[0], ch[0], 3, rng);
  to_rgb_.push_back(add_conv(params_, "g.s0.rgb", 3, ch[0], 1, rng));
  conv_a_.emplace_back();
  conv_b_.emplace_back();
  for (int s = 1; s < config_.num_stages(); ++s) {
    const std::string p = "g.s" + std::to_string(s);
    conv_a_.push_back(add_conv(params_, p + ".conv_a", ch[s], ch[s - 1], 3, rng));
    conv_b_.push_back(add_conv(params_, p + ".conv_b", ch[s], ch[s], 3, rng));
    to_rgb_.push_back(add_conv(params_, p + ".rgb", 3, ch[s], 1, rng));
  }
}

FVar Generator::forward(const std::vector<FVar>& b, const FVar& z, StagePosition pos) const {
  check_position(config_, pos);
  require(z.shape().size() == 2 && z.shape()[1] == config_.latent_dim, ErrorKind::Shape,
          "generator: latent must be [B," + std::to_string(config_.latent_dim) + "], got " + shape_str(z.shape()));
  const int batch = z.shape()[0];
  const int c0 = config_.channels[0];
  // The dense layer feeds a 4x4 map, so its gain follows the spatial fan-out.
  FVar h = dense(b, dense_, pixel_norm(z), kReluGain / 4.0);
  h = pixel_norm(lrelu(reshape(h, Shape{batch, c0, 4, 4})));
  h = pixel_norm(lrelu(conv(b, base_conv_, h)));
  FVar prev = h;
  for (int s = 1; s <= pos.stage; ++s) {
    prev = h;
    h = upsample_nearest2x(h);
    h = pixel_norm(lrelu(conv(b, conv_a_[static_cast<std::size_t>(s)], h)));
    h = pixel_norm(lrelu(conv(b, conv_b_[static_cast<std::size_t>(s)], h)));
  }
  const auto s = static_cast<std::size_t>(pos.stage);
  if (pos.stage == 0 || pos.fade == 1.0f) return conv(b, to_rgb_[s], h, 1.0);
  const FVar skip = upsample_nearest2x(conv(b, to_rgb_[s - 1], prev, 1.0));
  if (pos.fade == 0.0f) return skip;
  return blend(conv(b, to_rgb_[s], h, 1.0), skip, pos.fade);
}

Discriminator::Discriminator(const GanConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const auto& ch = config_.channels;
  from_rgb_.push_back(add_conv(params_, "d.s0.rgb", ch[0], 3, 1, rng));
  conv_a_.emplace_back();
  conv_b_.emplace_back();
  for (int s = 1; s < config_.num_stages(); ++s) {
    const std::string p = "d.s" + std::to_string(s);
    from_rgb_.push_back(add_conv(params_, p + ".rgb", ch[s], 3, 1, rng));
    conv_a_.push_back(add_conv(params_, p + ".conv_a", ch[s], ch[s], 3, rng));
    conv_b_.push_back(add_conv(params_, p + ".conv_b", ch[s - 1], ch[s], 3, rng));
  }
  final_conv_ = add_conv(params_, "d.s0.conv", ch[0], ch[0] + 1, 3, rng);
  dense_ = add_dense(params_, "d.dense", ch[0], ch[0] * 16, rng);
  out_ = add_dense(params_, "d.out", 1, ch[0], rng);
}

FVar Discriminator::forward(const std::vector<FVar>& b, const FVar& x, StagePosition pos) const {
  check_position(config_, pos);
  const int res = config_.resolution(pos.stage);
  const auto& xs = x.shape();
  require(xs.size() == 4 && xs[1] == 3 && xs[2] == res && xs[3] == res, ErrorKind::Shape,
          "discriminator: input must be [B,3," + std::to_string(res) + "," + std::to_string(res) + "], got " +
              shape_str(xs));
  const int batch = xs[0];
  auto block = [&](int s, const FVar& in) {
    FVar h = lrelu(conv(b, conv_a_[static_cast<std::size_t>(s)], in));
    h = lrelu(conv(b, conv_b_[static_cast<std::size_t>(s)], h));
    return downsample_avg2x(h);
  };
  const auto top = static_cast<std::size_t>(pos.stage);
  FVar h = lrelu(conv(b, from_rgb_[top], x));
  if (pos.stage > 0) {
    h = block(pos.stage, h);
    if (pos.fade < 1.0f) {
      const FVar skip = lrelu(conv(b, from_rgb_[top - 1], downsample_avg2x(x)));
      h = pos.fade == 0.0f ? skip : blend(h, skip, pos.fade);
    }
    for (int s = pos.stage - 1; s >= 1; --s) h = block(s, h);
  }
  h = lrelu(conv(b, final_conv_, minibatch_stddev(h)));
  h = reshape(h, Shape{batch, config_.channels[0] * 16});
  h = lrelu(dense(b, dense_, h, kReluGain));
  return dense(b, out_, h, 1.0);
}

GanState GanState::initialize(const GanConfig& config) {
  config.validate();
  Rng rng(config.seed);
  Generator g(config, rng);
  Discriminator d(config, rng);
  tensor::AdamConfig ag{config.lr_g, config.beta1, config.beta2, config.epsilon};
  tensor::AdamConfig ad{config.lr_d, config.beta1, config.beta2, config.epsilon};
  auto adam_g = tensor::AdamState::like(g.params().values(), ag);
  auto adam_d = tensor::AdamState::like(d.params().values(), ad);
  // Training draws continue from a stream separate from initialization.
  Rng train_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  return GanState{config, std::move(g), std::move(d), std::move(adam_g), std::move(adam_d), 0, train_rng};
}

}  // namespace nsart::progan
