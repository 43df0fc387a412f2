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

#include "kgpfn/pipeline.hpp"

namespace kgpfn {

template <typename T>
ad::Var<T> context_vectors(ctx::Encoder<T>& encoder, const ctx::ContextSet& context) {
  auto batch = ctx::encode_context(encoder, context);
  auto tokens = ctx::fuse_instances(encoder.model(), batch, ctx::context_labels(context));
  return pfn::feature_attention(encoder.model(), tokens, batch.size());
}

template <typename T>
ad::Var<T> query_vectors(ctx::Encoder<T>& encoder, kg::EntityId head, kg::RelationId relation,
                         const std::vector<kg::EntityId>& tails) {
  auto batch = encoder.encode(head, relation, tails);
  auto tokens = ctx::fuse_instances(encoder.model(), batch,
                                    std::vector<ctx::Label>(tails.size(), ctx::Label::kMasked));
  return pfn::feature_attention(encoder.model(), tokens, batch.size());
}

template <typename T>
pfn::ScoredBatch<T> score_candidates(ctx::Encoder<T>& encoder, kg::EntityId head,
                                     kg::RelationId relation,
                                     const std::vector<kg::EntityId>& tails,
                                     const ctx::ContextSet& context) {
  ad::Var<T> c = context_vectors(encoder, context);
  ad::Var<T> q = query_vectors(encoder, head, relation, tails);
  return pfn::score_with_context(encoder.model(), q, c);
}

#define KGPFN_INSTANTIATE_PIPELINE(T)                                                          \
  template pfn::ScoredBatch<T> score_candidates<T>(ctx::Encoder<T>&, kg::EntityId,             \
                                                   kg::RelationId,                             \
                                                   const std::vector<kg::EntityId>&,           \
                                                   const ctx::ContextSet&);                    \
  template ad::Var<T> context_vectors<T>(ctx::Encoder<T>&, const ctx::ContextSet&);            \
  template ad::Var<T> query_vectors<T>(ctx::Encoder<T>&, kg::EntityId, kg::RelationId,         \
                                       const std::vector<kg::EntityId>&);

KGPFN_INSTANTIATE_PIPELINE(float)
KGPFN_INSTANTIATE_PIPELINE(double)

}  // namespace kgpfn
