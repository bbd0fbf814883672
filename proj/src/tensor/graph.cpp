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

#include "tensor/graph.hpp"

#include <sstream>

#include "tensor/ops.hpp"

namespace nsart::tensor {

std::string shape_str(const Shape& s) {
  std::ostringstream ss;
  ss << '[';
  for (std::size_t i = 0; i < s.size(); ++i) ss << (i ? "," : "") << s[i];
  ss << ']';
  return ss.str();
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, nullptr, false});
  return {this, static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Graph<T>::leaf(Tensor<T> value) {
  nodes_.push_back(Node{"leaf", std::move(value), {}, nullptr, true});
  return {this, static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Graph<T>::record(std::string_view op, Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn backward) {
  bool differentiable = false;
  for (const auto& in : inputs) {
    require(in.graph == this, ErrorKind::State, std::string(op) + ": input belongs to a different graph");
    if (recording_ && nodes_[static_cast<std::size_t>(in.id)].requires_grad) differentiable = true;
  }
  if (differentiable) {
    nodes_.push_back(Node{op, std::move(value), std::move(inputs), std::move(backward), true});
  } else {
    nodes_.push_back(Node{op, std::move(value), {}, nullptr, false});
  }
  return {this, static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
std::vector<Var<T>> Graph<T>::grad(const Var<T>& output, std::span<const Var<T>> wrt, bool create_graph) {
  require(output.graph == this, ErrorKind::State, "grad: output belongs to a different graph");
  require(value(output).numel() == 1, ErrorKind::Shape,
          "grad: output must be a scalar, got shape " + shape_str(value(output).shape()));
  const auto last = static_cast<std::size_t>(output.id);

  // Only nodes on a path from some wrt entry to the output take part.
  std::vector<char> relevant(last + 1, 0);
  for (const auto& w : wrt) {
    require(w.graph == this, ErrorKind::State, "grad: wrt variable belongs to a different graph");
    if (static_cast<std::size_t>(w.id) <= last) relevant[static_cast<std::size_t>(w.id)] = 1;
  }
  for (std::size_t i = 0; i <= last; ++i) {
    if (relevant[i]) continue;
    for (const auto& in : nodes_[i].inputs) {
      if (relevant[static_cast<std::size_t>(in.id)]) {
        relevant[i] = 1;
        break;
      }
    }
  }

  struct RecordingGuard {
    bool& flag;
    bool saved;
    ~RecordingGuard() { flag = saved; }
  } guard{recording_, recording_};
  recording_ = create_graph;

  std::vector<Var<T>> grads(last + 1);
  grads[last] = constant(Tensor<T>(value(output).shape(), T(1)));
  for (std::size_t i = last + 1; i-- > 0;) {
    if (!grads[i].valid() || !relevant[i]) continue;
    Node& node = nodes_[i];  // deque: stays valid while backward appends
    if (!node.backward) continue;
    std::vector<bool> need(node.inputs.size(), false);
    bool any = false;
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const auto in = static_cast<std::size_t>(node.inputs[k].id);
      need[k] = nodes_[in].requires_grad && relevant[in];
      any = any || need[k];
    }
    if (!any) continue;
    const std::vector<Var<T>> inputs = node.inputs;
    const std::vector<Var<T>> local = node.backward(*this, grads[i], need);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (!need[k]) continue;
      const auto in = static_cast<std::size_t>(inputs[k].id);
      require(local.at(k).valid(), ErrorKind::State, std::string(node.op) + ": backward produced no gradient");
      grads[in] = grads[in].valid() ? add(grads[in], local[k]) : local[k];
    }
  }

  std::vector<Var<T>> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    const auto id = static_cast<std::size_t>(w.id);
    if (id <= last && grads[id].valid())
      out.push_back(grads[id]);
    else
      out.push_back(constant(Tensor<T>(value(w).shape(), T(0))));
  }
  return out;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace nsart::tensor
