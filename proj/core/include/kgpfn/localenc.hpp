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

#include <vector>

#include "kgpfn/kgstore.hpp"
#include "kgpfn/model.hpp"

namespace kgpfn::local {

template <typename T>
struct LocalEncoding {
  std::vector<ad::Var<T>> head_summaries;  // c^(1..L), each [1, d]
  ad::Var<T> states;                       // H^(L), [|nodes|, d]
  ad::Var<T> relation;                     // query relation vector r, [1, d]

  // C_loc stacked as [L, d].
  ad::Var<T> c_loc() const { return ad::concat_rows(head_summaries); }
  ad::Var<T> head_state() const { return head_summaries.back(); }
};

// Conditional propagation from `head` over the subgraph. rel_emb is [2R, d].
template <typename T>
LocalEncoding<T> nbfnet_encode(ModelBinding<T>& model, const kg::Subgraph& sub,
                               kg::EntityId head, ad::Var<T> rel_emb,
                               kg::RelationId query_rel, std::size_t layers);

template <typename T>
LocalEncoding<T> nbfnet_encode(ModelBinding<T>& model, const kg::Subgraph& sub,
                               kg::EntityId head, ad::Var<T> rel_emb,
                               kg::RelationId query_rel) {
  return nbfnet_encode(model, sub, head, rel_emb, query_rel, model.config().nbf_layers);
}

// State after `layers` updates of a node that never receives a message.
template <typename T>
ad::Var<T> unreachable_state(ModelBinding<T>& model, std::size_t layers);

// Structural scalars [log(1+in), log(1+out), hop/k] per tail; tails outside
// the subgraph get (0, 0, 1).
inline constexpr double kExternalDistance = 1.0;

struct TailFeatures {
  std::vector<std::int32_t> row;  // local index into states, or -1 if external
  std::vector<double> scalars;    // 3 per tail
  std::size_t size() const { return row.size(); }
};

TailFeatures tail_features(const kg::Subgraph& sub, const std::vector<kg::EntityId>& tails);

// z + MLP([z ; scalars]) row by row. z is [n, d], scalars hold 3n values.
template <typename T>
ad::Var<T> tail_enhance(ModelBinding<T>& model, ad::Var<T> z, const std::vector<double>& scalars);

// Enhanced tail vectors for arbitrary tails, using the canonical unreachable
// state for external ones.
template <typename T>
ad::Var<T> enhanced_tails(ModelBinding<T>& model, ad::Var<T> states, ad::Var<T> canonical,
                          const TailFeatures& tails);

// [phi_transe ; phi_distmult ; phi_cos] per row: [n, 2d + 1]. z_h and r are
// [1, d] rows broadcast over the n tails in z_t.
template <typename T>
ad::Var<T> interaction_features(ad::Var<T> z_h, ad::Var<T> r, ad::Var<T> z_t);

// Value-level form for a single triple.
struct InteractionFeatures {
  std::vector<double> transe;
  std::vector<double> distmult;
  double cos = 0.0;
  std::vector<double> s_tail() const;
};

InteractionFeatures interaction_features(const std::vector<double>& z_h,
                                         const std::vector<double>& r,
                                         const std::vector<double>& z_t);

}  // namespace kgpfn::local
