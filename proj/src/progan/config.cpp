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

#include <bit>
#include <cmath>

#include "progan/progan.hpp"

namespace nsart::progan {

GanConfig GanConfig::desk() {
  GanConfig c;
  c.latent_dim = 64;
  c.final_resolution = 32;
  c.iters_per_stage = 1500;
  c.total_iters = 8000;
  c.channels = {64, 64, 32, 16};
  c.batch_schedule = {{4, 16}, {8, 16}, {16, 16}, {32, 16}};
  return c;
}

GanConfig GanConfig::paper_scale() {
  GanConfig c;
  c.latent_dim = 512;
  c.final_resolution = 512;
  c.iters_per_stage = 37000;
  c.total_iters = 600000;
  c.channels = {512, 512, 512, 512, 256, 128, 64, 32};
  c.batch_schedule = {{4, 128}, {8, 128}, {16, 128}, {32, 64}, {64, 32}, {128, 16}, {256, 8}, {512, 4}};
  return c;
}

int GanConfig::num_stages() const {
  if (base_resolution <= 0 || final_resolution < base_resolution) return 0;
  const int ratio = final_resolution / base_resolution;
  return std::countr_zero(static_cast<unsigned>(ratio)) + 1;
}

int GanConfig::batch_size(int stage) const {
  const auto it = batch_schedule.find(resolution(stage));
  require(it != batch_schedule.end(), ErrorKind::Parameter,
          "batch_schedule has no entry for resolution " + std::to_string(resolution(stage)));
  return it->second;
}

void GanConfig::validate() const {
  auto check = [](bool ok, const std::string& what) { require(ok, ErrorKind::Parameter, "gan config: " + what); };
  check(latent_dim > 0, "latent_dim must be positive");
  check(base_resolution == 4, "base_resolution must be 4");
  check(final_resolution >= base_resolution && final_resolution % base_resolution == 0 &&
            std::has_single_bit(static_cast<unsigned>(final_resolution / base_resolution)),
        "final_resolution must be 4 * 2^k, got " + std::to_string(final_resolution));
  check(iters_per_stage > 0, "iters_per_stage must be positive");
  check(total_iters >= 0, "total_iters must be non-negative");
  check(lr_g > 0 && lr_d > 0, "lr_g and lr_d must be positive");
  check(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && epsilon > 0, "adam parameters out of range");
  check(gp_lambda >= 0 && drift_eps >= 0, "gp_lambda and drift_eps must be non-negative");
  check(fade_fraction > 0 && fade_fraction <= 1, "fade_fraction must lie in (0, 1]");
  const int stages = num_stages();
  check(static_cast<int>(channels.size()) == stages,
        "channels needs one width per stage (" + std::to_string(stages) + "), got " + std::to_string(channels.size()));
  for (int c : channels) check(c > 0, "channels must be positive");
  for (int s = 0; s < stages; ++s) {
    const auto it = batch_schedule.find(resolution(s));
    check(it != batch_schedule.end(), "batch_schedule has no entry for resolution " + std::to_string(resolution(s)));
    check(it->second >= 2, "batch size must be at least 2 (minibatch stddev)");
  }
}

nlohmann::json GanConfig::to_json() const {
  nlohmann::json batches = nlohmann::json::object();
  for (const auto& [res, b] : batch_schedule) batches[std::to_string(res)] = b;
  return {{"latent_dim", latent_dim},
          {"base_resolution", base_resolution},
          {"final_resolution", final_resolution},
          {"iters_per_stage", iters_per_stage},
          {"total_iters", total_iters},
          {"lr_g", lr_g},
          {"lr_d", lr_d},
          {"adam_beta1", beta1},
          {"adam_beta2", beta2},
          {"adam_epsilon", epsilon},
          {"gp_lambda", gp_lambda},
          {"drift_eps", drift_eps},
          {"fade_fraction", fade_fraction},
          {"batch_schedule", batches},
          {"channels", channels},
          {"seed", seed}};
}

GanConfig GanConfig::from_json(const nlohmann::json& j) {
  require(j.is_object(), ErrorKind::Format, "gan config must be a JSON object");
  GanConfig c = desk();
  try {
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.base_resolution = j.value("base_resolution", c.base_resolution);
    c.final_resolution = j.value("final_resolution", c.final_resolution);
    c.iters_per_stage = j.value("iters_per_stage", c.iters_per_stage);
    c.total_iters = j.value("total_iters", c.total_iters);
    c.lr_g = j.value("lr_g", c.lr_g);
    c.lr_d = j.value("lr_d", c.lr_d);
    c.beta1 = j.value("adam_beta1", c.beta1);
    c.beta2 = j.value("adam_beta2", c.beta2);
    c.epsilon = j.value("adam_epsilon", c.epsilon);
    c.gp_lambda = j.value("gp_lambda", c.gp_lambda);
    c.drift_eps = j.value("drift_eps", c.drift_eps);
    c.fade_fraction = j.value("fade_fraction", c.fade_fraction);
    c.seed = j.value("seed", c.seed);
    if (j.contains("channels")) c.channels = j.at("channels").get<std::vector<int>>();
    if (j.contains("batch_schedule")) {
      c.batch_schedule.clear();
      for (const auto& [k, v] : j.at("batch_schedule").items()) c.batch_schedule[std::stoi(k)] = v.get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("gan config: ") + e.what());
  } catch (const std::invalid_argument&) {
    fail(ErrorKind::Format, "gan config: batch_schedule keys must be resolutions");
  }
  c.validate();
  return c;
}

StagePosition resolution_schedule(std::int64_t iteration, const GanConfig& config) {
  require(iteration >= 0, ErrorKind::Parameter, "iteration must be non-negative");
  const std::int64_t max_stage = config.max_stage();
  const std::int64_t stage = std::min(iteration / config.iters_per_stage, max_stage);
  StagePosition pos{static_cast<int>(stage), 1.0f};
  if (stage == 0) return pos;
  const double into = static_cast<double>(iteration - stage * config.iters_per_stage);
  const double fade_len = config.fade_fraction * static_cast<double>(config.iters_per_stage);
  pos.fade = static_cast<float>(std::min(1.0, into / fade_len));
  return pos;
}

int ParameterSet::add(std::string name, Tensor value) {
  require(!lookup_.count(name), ErrorKind::State, "duplicate parameter " + name);
  const int id = static_cast<int>(values_.size());
  lookup_[name] = id;
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return id;
}

int ParameterSet::index(const std::string& name) const {
  const auto it = lookup_.find(name);
  require(it != lookup_.end(), ErrorKind::Format, "unknown parameter " + name);
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.numel();
  return n;
}

std::vector<FVar> ParameterSet::bind(FGraph& graph, bool trainable) const {
  std::vector<FVar> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(trainable ? graph.leaf(v) : graph.constant(v));
  return out;
}

}  // namespace nsart::progan
