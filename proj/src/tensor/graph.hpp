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

// Tape-based reverse-mode differentiation. Nodes are appended in evaluation
// order, so insertion order is a topological order and the reverse sweep is a
// single backwards walk over the tape.
//
// Backward rules are themselves written with recorded operations. Asking for
// gradients with create_graph = true therefore leaves differentiable gradient
// nodes on the tape, which is what the critic's gradient penalty needs.

#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "tensor/tensor.hpp"

namespace nsart::tensor {

template <typename T>
class Graph;

template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  int id = -1;

  bool valid() const noexcept { return graph != nullptr && id >= 0; }
  const Tensor<T>& value() const { return graph->value(*this); }
  const Shape& shape() const { return value().shape(); }
};

template <typename T>
class Graph {
 public:
  /// Produces one gradient per input; entries whose `need` flag is false may
  /// be left invalid.
  using BackwardFn = std::function<std::vector<Var<T>>(Graph&, const Var<T>& grad, const std::vector<bool>& need)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> leaf(Tensor<T> value);

  /// Appends an operation result. The node is differentiable only while
  /// recording is enabled and at least one input is.
  Var<T> record(std::string_view op, Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn backward);

  const Tensor<T>& value(const Var<T>& v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  bool requires_grad(const Var<T>& v) const { return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }
  std::string_view op(const Var<T>& v) const { return nodes_.at(static_cast<std::size_t>(v.id)).op; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool recording() const noexcept { return recording_; }

  /// Gradients of the scalar `output` with respect to each of `wrt`.
  /// Inputs that do not influence the output get a zero tensor.
  std::vector<Var<T>> grad(const Var<T>& output, std::span<const Var<T>> wrt, bool create_graph = false);

 private:
  struct Node {
    std::string_view op;
    Tensor<T> value;
    std::vector<Var<T>> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
  bool recording_ = true;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace nsart::tensor
