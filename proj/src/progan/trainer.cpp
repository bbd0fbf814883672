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
#include <bit>
#include <cstdio>

#include "common/fs.hpp"
#include "progan/progan.hpp"
#include "symgen/symgen.hpp"
#include "tensor/layers.hpp"

namespace nsart::progan {

namespace {

using namespace nsart::tensor;

/// [N,3,R,R] -> [N,3,R/2,R/2] by 2x2 means, accumulated in double.
Tensor halve(const Tensor& src) {
  const int n = src.dim(0), r = src.dim(2), h = r / 2;
  Tensor out(Shape{n, 3, h, h});
  for (int p = 0; p < n * 3; ++p) {
    const float* in = src.ptr() + static_cast<std::size_t>(p) * r * r;
    float* o = out.ptr() + static_cast<std::size_t>(p) * h * h;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < h; ++x) {
        const double s = static_cast<double>(in[(2 * y) * r + 2 * x]) + in[(2 * y) * r + 2 * x + 1] +
                         in[(2 * y + 1) * r + 2 * x] + in[(2 * y + 1) * r + 2 * x + 1];
        o[y * h + x] = static_cast<float>(s * 0.25);
      }
  }
  return out;
}

Tensor gather(const Tensor& level, std::span<const std::size_t> indices) {
  const std::size_t per = level.numel() / static_cast<std::size_t>(level.dim(0));
  Shape shape = level.shape();
  shape[0] = static_cast<int>(indices.size());
  Tensor out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(level.ptr() + indices[i] * per, per, out.ptr() + i * per);
  return out;
}

Tensor normal_batch(Rng& rng, int batch, int dim) {
  Tensor z(Shape{batch, dim});
  for (auto& v : z.data()) v = static_cast<float>(rng.normal());
  return z;
}

std::vector<Tensor> values_of(const std::vector<FVar>& vars) {
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(v.value());
  return out;
}

void check_finite(double v, const char* term, std::int64_t iteration) {
  if (!std::isfinite(v))
    fail(ErrorKind::Numeric, std::string("non-finite ") + term + " (" + std::to_string(v) + ") at iteration " +
                                 std::to_string(iteration));
}

}  // namespace

FVar gradient_penalty(const FVar& scores, const FVar& x_hat) {
  FGraph& g = *x_hat.graph;
  const int batch = x_hat.shape().at(0);
  const int per = static_cast<int>(x_hat.value().numel()) / batch;
  const FVar grad = g.grad(sum(scores), std::span(&x_hat, 1), true)[0];
  const FVar sq = sum_axis(reshape(mul(grad, grad), Shape{batch, per}), 1);
  // The tiny offset keeps the square root differentiable at a zero gradient.
  const FVar norm = pow(add_scalar(sq, 1e-12f), 0.5f);
  return mean(pow(add_scalar(norm, -1.0f), 2.0f));
}

FVar drift_term(const FVar& scores) { return mean(mul(scores, scores)); }

TrainingSet::TrainingSet(std::span<const ImageBuffer> images, const GanConfig& config)
    : TrainingSet(images.size(), [&](std::size_t i) { return images[i]; }, config) {}

TrainingSet::TrainingSet(std::size_t count, const std::function<ImageBuffer(std::size_t)>& load,
                         const GanConfig& config)
    : count_(count) {
  config.validate();
  require(count_ > 0, ErrorKind::Data, "training set is empty");
  const int final_res = config.final_resolution;
  const std::size_t per = 3 * static_cast<std::size_t>(final_res) * final_res;
  Tensor top(Shape{static_cast<int>(count_), 3, final_res, final_res});
  // Images are reduced one at a time so full-size sources never pile up.
  for (std::size_t i = 0; i < count_; ++i) {
    const ImageBuffer img = load(i);
    const int src = img.width();
    require(img.height() == src && src >= final_res && src % final_res == 0 &&
                std::has_single_bit(static_cast<unsigned>(src / final_res)),
            ErrorKind::Data,
            "training image " + std::to_string(i) + " is " + std::to_string(img.width()) + "x" +
                std::to_string(img.height()) + ", not a square power-of-two multiple of " + std::to_string(final_res));
    const std::size_t plane = static_cast<std::size_t>(src) * src;
    Tensor one(Shape{1, 3, src, src});
    for (int y = 0; y < src; ++y)
      for (int x = 0; x < src; ++x) {
        const Rgb px = img.at(x, y);
        for (int c = 0; c < 3; ++c)
          one[c * plane + static_cast<std::size_t>(y) * src + x] = static_cast<float>(px[c] / 127.5 - 1.0);
      }
    while (one.dim(2) > final_res) one = halve(one);
    std::copy_n(one.ptr(), per, top.ptr() + i * per);
  }
  levels_.resize(static_cast<std::size_t>(config.num_stages()));
  levels_.back() = std::move(top);
  for (int s = config.max_stage(); s > 0; --s)
    levels_[static_cast<std::size_t>(s - 1)] = halve(levels_[static_cast<std::size_t>(s)]);
  finals_.reserve(count_);
  for (std::size_t i = 0; i < count_; ++i) finals_.push_back(to_image(levels_.back().ptr() + i * per, final_res));
}

TrainingSet TrainingSet::from_manifest(const std::filesystem::path& manifest, std::size_t limit,
                                       const GanConfig& config) {
  const auto m = symgen::DatasetManifest::load(manifest);
  require(!m.entries.empty(), ErrorKind::Data, "dataset manifest " + manifest.string() + " lists no images");
  const std::size_t total = m.entries.size();
  const std::size_t n = limit == 0 ? total : std::min(limit, total);
  const auto root = manifest.parent_path();
  return TrainingSet(
      n, [&](std::size_t i) { return read_png(root / m.entries[i * total / n].file); }, config);
}

Tensor TrainingSet::batch(std::span<const std::size_t> indices, StagePosition pos) const {
  for (auto i : indices) require(i < count_, ErrorKind::Parameter, "training index out of range");
  const auto s = static_cast<std::size_t>(pos.stage);
  require(s < levels_.size(), ErrorKind::Parameter, "stage out of range");
  Tensor x = gather(levels_[s], indices);
  if (pos.stage == 0 || pos.fade >= 1.0f) return x;
  const Tensor lo = gather(levels_[s - 1], indices);
  const int r = x.dim(2), h = r / 2;
  const float f = pos.fade, g = 1.0f - pos.fade;
  for (std::size_t p = 0; p < x.numel() / (static_cast<std::size_t>(r) * r); ++p) {
    float* o = x.ptr() + p * r * r;
    const float* l = lo.ptr() + p * h * h;
    for (int y = 0; y < r; ++y)
      for (int xx = 0; xx < r; ++xx) o[y * r + xx] = f * o[y * r + xx] + g * l[(y / 2) * h + xx / 2];
  }
  return x;
}

StepResult training_step(GanState& state, const Tensor& real, StagePosition pos) {
  const GanConfig& cfg = state.config;
  const int res = cfg.resolution(pos.stage);
  require(real.rank() == 4 && real.dim(1) == 3 && real.dim(2) == res && real.dim(3) == res, ErrorKind::Shape,
          "training_step: real batch must be [B,3," + std::to_string(res) + "," + std::to_string(res) + "], got " +
              shape_str(real.shape()));
  const int batch = real.dim(0);
  require(batch >= 2, ErrorKind::Shape, "training_step: batch must hold at least 2 images");
  StepResult out;

  // Critic update.
  {
    FGraph g;
    const auto gb = state.generator.params().bind(g, false);
    const auto db = state.discriminator.params().bind(g, true);
    const Tensor z = normal_batch(state.rng, batch, cfg.latent_dim);
    const Tensor fake = state.generator.forward(gb, g.constant(z), pos).value();
    Tensor mixed(real.shape());
    const std::size_t per = real.numel() / static_cast<std::size_t>(batch);
    for (int i = 0; i < batch; ++i) {
      const float e = static_cast<float>(state.rng.uniform());
      for (std::size_t k = i * per; k < (i + 1) * per; ++k) mixed[k] = e * real[k] + (1.0f - e) * fake[k];
    }
    const FVar d_real = state.discriminator.forward(db, g.constant(real), pos);
    const FVar d_fake = state.discriminator.forward(db, g.constant(fake), pos);
    const FVar x_hat = g.leaf(std::move(mixed));
    const FVar d_hat = state.discriminator.forward(db, x_hat, pos);
    const FVar gp = gradient_penalty(d_hat, x_hat);
    const FVar wd = sub(mean(d_fake), mean(d_real));
    const FVar drift = drift_term(d_real);
    const FVar loss =
        add(add(wd, scale(gp, static_cast<float>(cfg.gp_lambda))), scale(drift, static_cast<float>(cfg.drift_eps)));
    out.wasserstein = wd.value().item();
    out.gp = gp.value().item();
    out.drift = drift.value().item();
    out.d_loss = loss.value().item();
    check_finite(out.wasserstein, "critic wasserstein term", state.iteration);
    check_finite(out.gp, "gradient penalty", state.iteration);
    check_finite(out.drift, "drift term", state.iteration);
    check_finite(out.d_loss, "critic loss", state.iteration);
    const auto grads = values_of(g.grad(loss, db));
    tensor::adam_step(state.discriminator.params().values(), grads, state.adam_d);
  }

  // Generator update against the refreshed critic.
  {
    FGraph g;
    const auto gb = state.generator.params().bind(g, true);
    const auto db = state.discriminator.params().bind(g, false);
    const Tensor z = normal_batch(state.rng, batch, cfg.latent_dim);
    const FVar fake = state.generator.forward(gb, g.constant(z), pos);
    const FVar loss = scale(mean(state.discriminator.forward(db, fake, pos)), -1.0f);
    out.g_loss = loss.value().item();
    check_finite(out.g_loss, "generator loss", state.iteration);
    const auto grads = values_of(g.grad(loss, gb));
    tensor::adam_step(state.generator.params().values(), grads, state.adam_g);
  }
  return out;
}

StepResult train_iteration(GanState& state, const TrainingSet& data) {
  const StagePosition pos = state.position();
  const int batch = state.config.batch_size(pos.stage);
  std::vector<std::size_t> idx(static_cast<std::size_t>(batch));
  for (auto& i : idx) i = static_cast<std::size_t>(state.rng.below(data.size()));
  const StepResult r = training_step(state, data.batch(idx, pos), pos);
  ++state.iteration;
  return r;
}

void train(GanState& state, const TrainingSet& data, const TrainOptions& options) {
  auto checkpoint = [&] {
    if (!options.checkpoint_path.empty()) save_checkpoint(options.checkpoint_path, state);
  };
  while (state.iteration < state.config.total_iters) {
    const StagePosition pos = state.position();
    const StepResult r = train_iteration(state, data);
    if (options.log) {
      const nlohmann::json line = {{"iter", state.iteration},  {"stage", pos.stage}, {"fade", pos.fade},
                                   {"d_loss", r.d_loss},        {"g_loss", r.g_loss}, {"gp", r.gp},
                                   {"wasserstein", r.wasserstein}};
      *options.log << line.dump() << '\n';
    }
    if (options.on_step) options.on_step(state, r);
    if (options.checkpoint_every > 0 && state.iteration % options.checkpoint_every == 0) checkpoint();
    if (options.sample_every > 0 && !options.sample_dir.empty() && state.iteration % options.sample_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "iter-%07lld.png", static_cast<long long>(state.iteration));
      std::filesystem::create_directories(options.sample_dir);
      write_png(options.sample_dir / name, sample_grid(state, 0, options.grid_side));
    }
  }
  checkpoint();
}

}  // namespace nsart::progan
