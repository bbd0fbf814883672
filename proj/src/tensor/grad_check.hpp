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

#include <algorithm>
#include <cmath>
#include <vector>

#include "tensor/graph.hpp"

namespace nsart::tensor {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t entries = 0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences, everything evaluated in double. `f` is called as
/// f(Graph<double>&, const std::vector<Var<double>>& inputs) and must return a
/// one-element Var. Relative error per entry is |a - n| / max(|a|, |n|, floor)
/// with floor = scale_floor * (largest analytic magnitude); entries where both
/// magnitudes are below `zero_floor` count as exact.
template <typename Fn>
GradCheckReport grad_check(Fn&& f, const std::vector<Tensor<double>>& inputs, double h = 1e-3,
                           double scale_floor = 0.0, double zero_floor = 1e-10) {
  std::vector<Tensor<double>> analytic;
  {
    Graph<double> g;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(g.leaf(t));
    const Var<double> out = f(g, vars);
    for (const auto& gv : g.grad(out, vars)) analytic.push_back(gv.value());
  }
  auto evaluate = [&](const std::vector<Tensor<double>>& at) {
    Graph<double> g;
    std::vector<Var<double>> vars;
    // Leaves, not constants: f may itself take gradients w.r.t. its inputs.
    for (const auto& t : at) vars.push_back(g.leaf(t));
    return f(g, vars).value().item();
  };
  double largest = 0.0;
  for (const auto& t : analytic)
    for (double v : t.data()) largest = std::max(largest, std::abs(v));
  const double floor = scale_floor * largest;

  GradCheckReport report;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t k = 0; k < inputs[i].numel(); ++k) {
      const double x0 = inputs[i][k];
      probe[i][k] = x0 + h;
      const double up = evaluate(probe);
      probe[i][k] = x0 - h;
      const double down = evaluate(probe);
      probe[i][k] = x0;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i][k];
      const double abs_err = std::abs(a - numeric);
      const double scale = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = scale < zero_floor ? 0.0 : abs_err / scale;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.entries;
    }
  }
  return report;
}

}  // namespace nsart::tensor
