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
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "kgpfn/kgstore.hpp"
#include "kgpfn/model.hpp"
#include "kgpfn/relgraph.hpp"

namespace kgpfn::train {

// softmax(neg / tau); tau must be positive.
std::vector<double> adversarial_weights(const std::vector<double>& neg_scores, double tau);

// pos [B, 1], neg [B, N]. Adversarial weights are detached.
template <typename T>
ad::Var<T> bce_loss(ad::Var<T> pos, ad::Var<T> neg, double tau);
template <typename T>
ad::Var<T> ce_loss(ad::Var<T> pos, ad::Var<T> neg);

// Scores of one batch, for value-level evaluation of the losses.
struct TrainBatch {
  std::vector<double> positive;               // B
  std::vector<std::vector<double>> negative;  // B x N
  double tau = 1.0;
};

double bce_loss(const TrainBatch& batch);
double ce_loss(const TrainBatch& batch);

struct OptimizerOptions {
  double lr = 5e-4;
  double weight_decay = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 10.0;  // <= 0 disables clipping
};

template <typename T>
struct OptimizerState {
  OptimizerOptions options;
  std::vector<ad::Tensor<T>> first, second;
  std::uint64_t step = 0;

  static OptimizerState create(const ad::ParamSet<T>& params, OptimizerOptions options) {
    return {options, params.zeros_like(), params.zeros_like(), 0};
  }
};

// Returns the gradient norm before clipping.
template <typename T>
double adamw_update(ad::ParamSet<T>& params, OptimizerState<T>& state,
                    std::vector<ad::Tensor<T>> grads);

struct TrainOptions {
  std::size_t batch = 8;
  std::size_t negatives = 64;
  std::size_t m_plus = 20;
  std::size_t m_minus = 60;
  double tau = 1.0;
  int hops = 3;
  std::size_t node_cap = kg::kDefaultNodeCap;
  std::size_t threads = 1;
  // Query relations drawn for training; empty means every relation.
  std::vector<kg::RelationId> relations;
};

// Everything a training step reads. `graph` is the augmented training graph.
struct TrainingData {
  const kg::KnowledgeGraph* graph = nullptr;
  const rel::RelationGraph* relation_graph = nullptr;
  std::vector<kg::Triple> positives;  // pool the batch is drawn from
};

TrainingData make_training_data(const kg::KnowledgeGraph& augmented,
                                const rel::RelationGraph& rg,
                                const std::vector<kg::RelationId>& relations);

struct LossReport {
  double bce = 0.0;
  double ce = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
  std::uint64_t seed = 0;
};

template <typename T>
struct ElementLoss {
  ad::Var<T> bce, ce;
};

// Losses of one sampled query (positive, N negatives, shared context) on the
// binding's tape. Sampling depends only on `seed`.
template <typename T>
ElementLoss<T> element_loss(ModelBinding<T>& model, const TrainingData& data,
                            const TrainOptions& options, std::uint64_t seed);

// One optimizer step on B freshly sampled queries.
template <typename T>
LossReport train_step(ModelParams<T>& model, OptimizerState<T>& opt, const TrainingData& data,
                      const TrainOptions& options, std::uint64_t seed);

// Gradients and losses for one step without updating parameters.
template <typename T>
LossReport compute_gradients(const ModelParams<T>& model, const TrainingData& data,
                             const TrainOptions& options, std::uint64_t seed,
                             std::vector<ad::Tensor<T>>& grads);

// Deterministic per-step seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

struct TrainLogEntry {
  std::uint64_t step;
  LossReport loss;
  double wall_ms;
};

using StepCallback = std::function<void(const TrainLogEntry&)>;

// Runs `steps` training steps; writes JSON lines {step, bce, ce, total,
// wall_ms, seed} to `log_path` when given.
template <typename T>
std::vector<TrainLogEntry> train(ModelParams<T>& model, OptimizerState<T>& opt,
                                 const TrainingData& data, const TrainOptions& options,
                                 std::size_t steps, std::uint64_t seed,
                                 const std::optional<std::filesystem::path>& log_path = {},
                                 const StepCallback& on_step = {});

}  // namespace kgpfn::train
