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
#include <string>
#include <vector>

#include "kgpfn/diffcore/ops.hpp"
#include "kgpfn/diffcore/params.hpp"

namespace kgpfn {

enum class PositionalMode { kRope, kNone };

std::string to_string(PositionalMode mode);
PositionalMode positional_mode_from_string(const std::string& name);

// Architecture hyperparameters. Defaults are the full-size configuration
// (6-layer encoders at width 64, 3-hop neighborhoods).
struct ModelConfig {
  std::size_t dim = 64;         // encoder width d
  std::size_t nbf_layers = 6;   // local encoder depth L
  std::size_t rel_layers = 6;   // relation encoder depth
  int hops = 3;                 // neighborhood radius k
  std::size_t node_cap = 2000;
  std::size_t adapter_dim = 64;  // token width d'
  std::size_t feature_heads = 4;
  std::size_t pfn_layers = 3;
  std::size_t pfn_heads = 4;
  PositionalMode positional = PositionalMode::kRope;
  double rope_base = 10000.0;
  bool residual_score = true;
  std::size_t tail_hidden = 0;  // 0 means `dim`
  // Hide each instance's (head, relation, *) edges from its own neighborhood.
  bool mask_query_edges = true;
  // Unnormalized single-layer bilinear scoring used by the theory checks.
  bool linear_diagnostic = false;

  std::size_t pfn_width() const { return 3 * adapter_dim; }
  std::size_t tail_hidden_dim() const { return tail_hidden ? tail_hidden : dim; }
  std::size_t tokens() const { return nbf_layers + 2; }
  void validate() const;
};

struct AttentionParams {
  std::size_t wq, wk, wv, wo, ln_gain, ln_bias;
};

struct AdapterParams {
  std::size_t w1, b1, w2, b2, ln_gain, ln_bias;
};

// Indices of every trainable array inside the ParamSet.
struct ModelLayout {
  struct RelLayer {
    std::size_t type_vectors, weight, bias, ln_gain, ln_bias;
  };
  struct NbfLayer {
    std::size_t weight, bias, ln_gain, ln_bias;
  };
  std::vector<RelLayer> rel;
  std::vector<NbfLayer> nbf;
  std::size_t tail_w1, tail_b1, tail_w2, tail_b2;
  AdapterParams multi_scale, triple, score;
  std::size_t layer_offsets, label_embedding;
  AttentionParams feature;
  std::vector<AttentionParams> sample_self, sample_cross;
  std::size_t final_ln_gain, final_ln_bias, score_w, score_b, residual_w, residual_b;
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  ModelLayout layout;
  ad::ParamSet<T> params;

  template <typename U>
  ModelParams<U> cast() const {
    return ModelParams<U>{config, layout, params.template cast<U>()};
  }
};

template <typename T>
ModelParams<T> init_model(const ModelConfig& config, std::uint64_t seed);

// Rebuilds the layout for a config against an existing ParamSet (used when
// loading checkpoints).
ModelLayout layout_for(const ModelConfig& config, const std::vector<std::string>& names);

// Parameters of one model placed on one tape.
template <typename T>
class ModelBinding {
 public:
  ModelBinding(ad::Tape<T>& tape, const ModelParams<T>& model, bool trainable = true)
      : model_(&model), binding_(tape, model.params, trainable) {}

  ad::Var<T> operator()(std::size_t index) { return binding_(index); }
  void bind(std::size_t index, ad::Var<T> var) { binding_.bind(index, var); }
  const ModelConfig& config() const { return model_->config; }
  const ModelLayout& layout() const { return model_->layout; }
  ad::Tape<T>& tape() { return binding_.tape(); }
  const ad::ParamBinding<T>& binding() const { return binding_; }

  ad::Var<T> constant(ad::Tensor<T> value) { return tape().constant(std::move(value)); }

 private:
  const ModelParams<T>* model_;
  ad::ParamBinding<T> binding_;
};

// Manifest JSON plus one flat little-endian array file.
struct CheckpointPaths {
  std::filesystem::path manifest;
  std::filesystem::path data;
  static CheckpointPaths in(const std::filesystem::path& dir);
};

template <typename T>
void save_checkpoint(const ModelParams<T>& model, const CheckpointPaths& paths);
// Loads into the requested precision regardless of the stored one.
template <typename T>
ModelParams<T> load_checkpoint(const CheckpointPaths& paths);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace kgpfn
