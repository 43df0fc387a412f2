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

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgpfn/diffcore/tape.hpp"

namespace kgpfn::ad {

// Ordered collection of named trainable arrays.
template <typename T>
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor<T> init) {
    require(!index_.contains(name), "duplicate parameter name " + name);
    index_.emplace(name, tensors_.size());
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(init));
    return tensors_.size() - 1;
  }

  std::size_t index(std::string_view name) const {
    auto it = index_.find(std::string(name));
    require(it != index_.end(), "unknown parameter " + std::string(name));
    return it->second;
  }
  bool contains(std::string_view name) const { return index_.contains(std::string(name)); }

  std::size_t size() const { return tensors_.size(); }
  Tensor<T>& at(std::size_t i) { return tensors_[i]; }
  const Tensor<T>& at(std::size_t i) const { return tensors_[i]; }
  Tensor<T>& at(std::string_view name) { return tensors_[index(name)]; }
  const Tensor<T>& at(std::string_view name) const { return tensors_[index(name)]; }
  const std::string& name(std::size_t i) const { return names_[i]; }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  std::vector<Tensor<T>> zeros_like() const {
    std::vector<Tensor<T>> out;
    out.reserve(tensors_.size());
    for (const auto& t : tensors_) out.emplace_back(t.shape());
    return out;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (std::size_t i = 0; i < tensors_.size(); ++i)
      out.add(names_[i], tensors_[i].template cast<U>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Places parameters on a tape on first use so unused parameters never appear
// in the graph (and receive zero gradients).
template <typename T>
class ParamBinding {
 public:
  ParamBinding(Tape<T>& tape, const ParamSet<T>& params, bool trainable = true)
      : tape_(&tape), params_(&params), vars_(params.size()), trainable_(trainable) {}

  Var<T> operator()(std::size_t i) {
    if (!vars_[i].valid()) vars_[i] = tape_->leaf(params_->at(i), trainable_);
    return vars_[i];
  }

  // Uses an existing node (e.g. a gradient-check leaf) for parameter i.
  void bind(std::size_t i, Var<T> var) {
    require(var.tape() == tape_, "ParamBinding::bind: node lives on another tape");
    vars_[i] = var;
  }

  Tape<T>& tape() { return *tape_; }
  const ParamSet<T>& params() const { return *params_; }

  // Adds this tape's gradients (after backward) into `accum`.
  void accumulate_gradients(std::vector<Tensor<T>>& accum) const {
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (!vars_[i].valid()) continue;
      const Tensor<T> g = tape_->grad(vars_[i]);
      for (std::size_t k = 0; k < g.size(); ++k) accum[i][k] += g[k];
    }
  }

 private:
  Tape<T>* tape_;
  const ParamSet<T>* params_;
  std::vector<Var<T>> vars_;
  bool trainable_;
};

}  // namespace kgpfn::ad
