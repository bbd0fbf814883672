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

#include "tensor/adam.hpp"

#include <cmath>

namespace nsart::tensor {

AdamState AdamState::like(std::span<const Tensor<float>> params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.shape());
    s.second_moment.emplace_back(p.shape());
  }
  return s;
}

void adam_step(std::span<Tensor<float>> params, std::span<const Tensor<float>> grads, AdamState& state) {
  require(params.size() == grads.size() && params.size() == state.first_moment.size() &&
              params.size() == state.second_moment.size(),
          ErrorKind::Shape, "adam_step: parameter, gradient and moment counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].shape() == grads[i].shape() && params[i].shape() == state.first_moment[i].shape(),
            ErrorKind::Shape, "adam_step: shape mismatch at parameter " + std::to_string(i));
    for (float g : grads[i].data())
      require(std::isfinite(g), ErrorKind::Numeric,
              "adam_step: non-finite gradient in parameter " + std::to_string(i));
  }
  const auto& cfg = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(cfg.beta1, t);
  const double correct2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* p = params[i].ptr();
    const float* g = grads[i].ptr();
    float* m = state.first_moment[i].ptr();
    float* v = state.second_moment[i].ptr();
    for (std::size_t k = 0; k < params[i].numel(); ++k) {
      const double gk = g[k];
      const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double update = cfg.learning_rate * (mk / correct1) / (std::sqrt(vk / correct2) + cfg.epsilon);
      p[k] = static_cast<float>(static_cast<double>(p[k]) - update);
    }
  }
}

}  // namespace nsart::tensor
