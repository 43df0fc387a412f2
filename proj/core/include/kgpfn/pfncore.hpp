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

#include <filesystem>
#include <string>
#include <vector>

#include "kgpfn/model.hpp"

namespace kgpfn::pfn {

// Self-attention over the L + 2 tokens of each instance followed by pooling
// into [mean(multi-scale) ; triple ; score], giving [instances, 3d'].
// `probabilities` receives [instances, heads, L+2, L+2] when non-null.
template <typename T>
ad::Var<T> feature_attention(ModelBinding<T>& model, ad::Var<T> tokens, std::size_t instances,
                             ad::Tensor<T>* probabilities = nullptr);

template <typename T>
struct ScoredBatch {
  ad::Var<T> scores;        // [candidates, 1]
  ad::Tensor<T> attention;  // [candidates, m], last cross-attention, head mean
};

// Context rows attend to each other; candidate rows attend to the context
// only. Rotary positions: context i at i, every candidate at m.
template <typename T>
ScoredBatch<T> score_with_context(ModelBinding<T>& model, ad::Var<T> queries,
                                  ad::Var<T> context);

// Mean over context of <x_q W_Q, x_s W_K> with the first cross-attention
// projections. Requires ModelConfig::linear_diagnostic.
template <typename T>
ad::Var<T> linear_mode_score(ModelBinding<T>& model, ad::Var<T> queries, ad::Var<T> context);

void write_attention_csv(const std::filesystem::path& path, const ad::Tensor<double>& attention,
                         const std::vector<std::string>& row_labels,
                         const std::vector<std::string>& column_labels);

}  // namespace kgpfn::pfn
