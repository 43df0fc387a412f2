// Copyright 2026 The KGPFN Authors.
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

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "kgpfn/diffcore/tensor.hpp"

namespace kgpfn::ad {

template <typename T>
class Tape;

// Handle to a value recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::int32_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape() const { return tape_; }
  std::int32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<T>& value() const { return tape_->value(id_); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::int32_t id_ = -1;
};

// Define-by-run record of primitive operations. Node ids are assigned in
// creation order, so inputs always precede their consumers and backward is a
// single reverse sweep.
template <typename T>
class Tape {
 public:
  // Receives the tape and the gradient flowing into the node's output.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    return push(std::move(value), requires_grad, {});
  }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, {}); }

  // Records an operation output. The backward closure is dropped when none of
  // the inputs needs a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs,
                BackwardFn backward) {
    return record(std::move(value), std::vector<Var<T>>(inputs), std::move(backward));
  }

  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs,
                BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) {
      require(in.tape() == this, "operation mixes values from different tapes");
      needs = needs || nodes_[in.id()].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : BackwardFn{});
  }

  const Tensor<T>& value(std::int32_t id) const { return nodes_[id].value; }
  bool requires_grad(std::int32_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient buffer for a node, allocated as zeros on first access.
  Tensor<T>& grad_buffer(std::int32_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  void accumulate(std::int32_t id, const Tensor<T>& g) {
    if (!nodes_[id].requires_grad) return;
    Tensor<T>& buf = grad_buffer(id);
    require(buf.size() == g.size(), "gradient shape mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
  }

  void backward(Var<T> loss) {
    require(loss.tape() == this, "loss belongs to a different tape");
    require(loss.value().size() == 1,
            "backward needs a scalar loss, got shape " +
                shape_string(loss.value().shape()));
    for (auto& n : nodes_) n.grad = Tensor<T>();
    if (!nodes_[loss.id()].requires_grad) return;
    grad_buffer(loss.id())[0] = T(1);
    for (std::int32_t id = loss.id(); id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.backward || n.grad.empty()) continue;
      // The closure may touch other nodes' buffers; keep our own gradient
      // alive by moving it out first.
      Tensor<T> upstream = std::move(n.grad);
      n.backward(*this, upstream);
      n.grad = std::move(upstream);
    }
  }

  // Gradient of the last backward() for a node; zeros if it did not
  // participate.
  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.empty()) return Tensor<T>(n.value.shape());
    return n.grad;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), {}, std::move(backward), requires_grad});
    return Var<T>(this, static_cast<std::int32_t>(nodes_.size() - 1));
  }

  std::vector<Node> nodes_;
};

}  // namespace kgpfn::ad
