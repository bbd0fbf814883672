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

// Progressive-growing GAN: configuration, growth schedule, generator and
// critic, WGAN-GP training, checkpoints, sampling and latent interpolation.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "common/image.hpp"
#include "common/rng.hpp"
#include "tensor/adam.hpp"
#include "tensor/graph.hpp"

namespace nsart::progan {

using tensor::Shape;
using Tensor = tensor::Tensor<float>;
using FVar = tensor::Var<float>;
using FGraph = tensor::Graph<float>;

struct GanConfig {
  int latent_dim = 64;
  int base_resolution = 4;
  int final_resolution = 32;
  std::int64_t iters_per_stage = 1500;
  std::int64_t total_iters = 8000;
  double lr_g = 0.001;
  double lr_d = 0.001;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  double gp_lambda = 10.0;
  double drift_eps = 0.001;
  /// Fraction of a stage spent blending the new block in.
  double fade_fraction = 0.5;
  /// resolution -> batch size; one entry per stage.
  std::map<int, int> batch_schedule;
  /// Feature width per stage, stage 0 first.
  std::vector<int> channels;
  std::uint64_t seed = 0;

  static GanConfig desk();
  static GanConfig paper_scale();
  static GanConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;

  int num_stages() const;
  int max_stage() const { return num_stages() - 1; }
  int resolution(int stage) const { return base_resolution << stage; }
  int batch_size(int stage) const;
};

struct StagePosition {
  int stage = 0;
  float fade = 1.0f;
  friend bool operator==(const StagePosition&, const StagePosition&) = default;
};

StagePosition resolution_schedule(std::int64_t iteration, const GanConfig& config);

/// Named float tensors in a fixed order.
class ParameterSet {
 public:
  int add(std::string name, Tensor value);
  int index(const std::string& name) const;
  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::vector<Tensor>& values() noexcept { return values_; }
  const std::vector<Tensor>& values() const noexcept { return values_; }
  std::size_t scalar_count() const;

  /// Puts every parameter on the graph, as leaves when `trainable`.
  std::vector<FVar> bind(FGraph& graph, bool trainable) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::map<std::string, int> lookup_;
};

struct ConvParams {
  int weight = -1;
  int bias = -1;
};

class Generator {
 public:
  /// Weights drawn N(0,1) from `rng` (equalized learning rate), biases zero.
  Generator(const GanConfig& config, Rng& rng);

  /// z [B, latent_dim] -> images [B, 3, R, R] at the stage resolution.
  FVar forward(const std::vector<FVar>& bound, const FVar& z, StagePosition pos) const;

  ParameterSet& params() noexcept { return params_; }
  const ParameterSet& params() const noexcept { return params_; }

 private:
  GanConfig config_;
  ParameterSet params_;
  ConvParams dense_, base_conv_;
  std::vector<ConvParams> conv_a_, conv_b_, to_rgb_;
};

class Discriminator {
 public:
  Discriminator(const GanConfig& config, Rng& rng);

  /// images [B, 3, R, R] -> scores [B, 1].
  FVar forward(const std::vector<FVar>& bound, const FVar& x, StagePosition pos) const;

  ParameterSet& params() noexcept { return params_; }
  const ParameterSet& params() const noexcept { return params_; }

 private:
  GanConfig config_;
  ParameterSet params_;
  std::vector<ConvParams> from_rgb_, conv_a_, conv_b_;
  ConvParams final_conv_, dense_, out_;
};

/// Everything needed to continue training bit for bit.
struct GanState {
  GanConfig config;
  Generator generator;
  Discriminator discriminator;
  tensor::AdamState adam_g;
  tensor::AdamState adam_d;
  std::int64_t iteration = 0;
  Rng rng;

  /// Fresh initialization from config.seed.
  static GanState initialize(const GanConfig& config);
  StagePosition position() const { return resolution_schedule(iteration, config); }
};

// ---- checkpoints ---------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const GanState& state);
GanState deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const GanState& state);
GanState load_checkpoint(const std::filesystem::path& path);

// ---- training --------------------------------------------------------------

/// Real images at every stage resolution, scaled to [-1, 1].
class TrainingSet {
 public:
  /// Images at the final resolution or any power-of-two multiple of it; larger
  /// images are reduced by repeated 2x2 area averaging.
  TrainingSet(std::span<const ImageBuffer> images, const GanConfig& config);
  /// Loads an evenly spaced subset of `limit` entries (0 = all) of a dataset.
  static TrainingSet from_manifest(const std::filesystem::path& manifest, std::size_t limit, const GanConfig& config);
  /// Pulls `count` images through `load`, one at a time.
  TrainingSet(std::size_t count, const std::function<ImageBuffer(std::size_t)>& load, const GanConfig& config);

  std::size_t size() const noexcept { return count_; }
  /// Batch at the stage resolution; during a fade the images are blended with
  /// their upsampled half-resolution version to match the generator.
  Tensor batch(std::span<const std::size_t> indices, StagePosition pos) const;
  /// Final-resolution images as 8-bit buffers (for metrics).
  const std::vector<ImageBuffer>& final_images() const noexcept { return finals_; }

 private:
  std::size_t count_ = 0;
  std::vector<Tensor> levels_;  // per stage [N,3,R,R]
  std::vector<ImageBuffer> finals_;
};

struct StepResult {
  double d_loss = 0;
  double g_loss = 0;
  double gp = 0;
  double drift = 0;
  double wasserstein = 0;
};

/// mean over the batch of (|grad_x score| - 1)^2, with x_hat a leaf the scores
/// were computed from. Differentiable in the critic parameters.
FVar gradient_penalty(const FVar& scores, const FVar& x_hat);
/// mean(score^2), which keeps critic outputs from drifting away from zero.
FVar drift_term(const FVar& scores);

/// One critic update then one generator update on `real` (already at the
/// stage resolution). Throws ErrorKind::Numeric naming the offending term if
/// any loss is not finite; the update whose loss failed is not applied.
StepResult training_step(GanState& state, const Tensor& real, StagePosition pos);

/// Draws a batch, runs training_step and advances the iteration counter.
StepResult train_iteration(GanState& state, const TrainingSet& data);

struct TrainOptions {
  std::int64_t checkpoint_every = 1000;  // 0 disables periodic checkpoints
  std::int64_t sample_every = 1000;      // 0 disables sample grids
  int grid_side = 4;
  std::filesystem::path checkpoint_path;  // empty: no file output
  std::filesystem::path sample_dir;       // empty: no grids
  std::ostream* log = nullptr;            // JSON lines
  std::function<void(const GanState&, const StepResult&)> on_step;
};

/// Runs until state.iteration reaches config.total_iters.
void train(GanState& state, const TrainingSet& data, const TrainOptions& options);

// ---- sampling --------------------------------------------------------------

/// Standard-normal latent drawn from its own Rng(seed).
std::vector<float> latent_from_seed(std::uint64_t seed, int dim);

/// z1 + alpha (z2 - z1), evaluated as (1 - alpha) z1 + alpha z2 in double and
/// rounded once. alpha must lie in [0, 1].
std::vector<float> interpolate_latent(std::span<const float> z1, std::span<const float> z2, float alpha);

/// Generator output for one latent, mapped from [-1, 1] to bytes with
/// round-half-even and enlarged to the final resolution if the model is still
/// at an earlier stage.
ImageBuffer render(const GanState& state, std::span<const float> z);
ImageBuffer sample(const GanState& state, std::uint64_t seed);
ImageBuffer interpolate(const GanState& state, std::uint64_t seed1, std::uint64_t seed2, float alpha);
/// Square grid of samples for seeds first, first+1, ...
ImageBuffer sample_grid(const GanState& state, std::uint64_t first_seed, int side);

/// [-1, 1] float image [3,R,R] -> bytes.
ImageBuffer to_image(const float* chw, int resolution);

}  // namespace nsart::progan
