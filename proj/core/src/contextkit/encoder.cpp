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

#include <map>

#include "kgpfn/contextkit.hpp"
#include "kgpfn/error.hpp"

namespace kgpfn::ctx {
namespace {

template <typename T>
ad::Var<T> adapter(ModelBinding<T>& model, const AdapterParams& p, ad::Var<T> x) {
  ad::Var<T> hidden = ad::relu(ad::affine(x, model(p.w1), model(p.b1)));
  return ad::layer_norm(ad::affine(hidden, model(p.w2), model(p.b2)), model(p.ln_gain),
                        model(p.ln_bias));
}

}  // namespace

template <typename T>
Encoder<T>::Encoder(ModelBinding<T>& model, const kg::KnowledgeGraph& g,
                    const rel::RelationGraph& rg, EncoderOptions options,
                    EncodingCache<T>* cache)
    : model_(model), graph_(g), rg_(rg), options_(options), cache_(cache) {
  require(g.augmented(), "Encoder: graph must be inverse-augmented");
  require(rg.num_relations == g.num_relations(), "Encoder: relation graph does not match graph");
}

template <typename T>
ad::Var<T> Encoder<T>::relation_embeddings(kg::RelationId r) {
  if (auto it = relations_.find(r); it != relations_.end()) return it->second;
  ad::Var<T> emb;
  if (const ad::Tensor<T>* hit = cache_ ? cache_->relations(r) : nullptr) {
    emb = model_.constant(*hit);
  } else {
    emb = rel::relation_mpnn(model_, rg_, r);
    if (cache_) cache_->insert_relations(r, emb.value());
  }
  relations_.emplace(r, emb);
  return emb;
}

template <typename T>
typename Encoder<T>::HeadState& Encoder<T>::head_state(kg::EntityId head, kg::RelationId r) {
  auto& slot = heads_[{head, r}];
  if (slot) return *slot;
  slot = std::make_unique<HeadState>();
  const typename EncodingCache<T>::Key key{head, r, options_.hops};
  if (const HeadSnapshot<T>* hit = cache_ ? cache_->find(key) : nullptr) {
    slot->subgraph = hit->subgraph;
    slot->c_loc = model_.constant(hit->c_loc);
    slot->relation = model_.constant(hit->relation);
    slot->states = model_.constant(hit->states);
  } else {
    std::optional<kg::EdgeMask> mask;
    if (options_.mask_query_edges) mask = kg::EdgeMask{head, r};
    slot->subgraph = kg::khop_subgraph(graph_, head, options_.hops, options_.node_cap,
                                       options_.subgraph_seed, mask);
    auto enc = local::nbfnet_encode(model_, slot->subgraph, head, relation_embeddings(r), r);
    slot->c_loc = enc.c_loc();
    slot->relation = enc.relation;
    slot->states = enc.states;
    if (cache_)
      cache_->insert(key, {slot->subgraph, slot->c_loc.value(), slot->relation.value(),
                           slot->states.value()});
  }
  const auto L = static_cast<std::size_t>(slot->c_loc.rows());
  slot->z_head = ad::slice_rows(slot->c_loc, L - 1, L);
  return *slot;
}

template <typename T>
const kg::Subgraph& Encoder<T>::subgraph(kg::EntityId head, kg::RelationId r) {
  return head_state(head, r).subgraph;
}

template <typename T>
InstanceBatch<T> Encoder<T>::encode(kg::EntityId head, kg::RelationId r,
                                    const std::vector<kg::EntityId>& tails) {
  require(!tails.empty(), "Encoder::encode: no tails");
  HeadState& hs = head_state(head, r);
  if (!canonical_) canonical_ = local::unreachable_state(model_, model_.config().nbf_layers);
  const auto features = local::tail_features(hs.subgraph, tails);
  ad::Var<T> z_t = local::enhanced_tails(model_, hs.states, *canonical_, features);
  const ad::Index zeros(tails.size(), 0);
  InstanceBatch<T> out;
  out.c_loc = hs.c_loc;
  out.owner = zeros;
  out.triple = ad::concat_cols<T>(
      {ad::gather_rows(hs.z_head, zeros), ad::gather_rows(hs.relation, zeros), z_t});
  out.s_tail = local::interaction_features(hs.z_head, hs.relation, z_t);
  return out;
}

template <typename T>
InstanceBatch<T> concat_batches(const std::vector<InstanceBatch<T>>& parts) {
  require(!parts.empty(), "concat_batches: no parts");
  if (parts.size() == 1) return parts.front();
  InstanceBatch<T> out;
  std::vector<ad::Var<T>> c_loc, triple, s_tail;
  std::int32_t blocks = 0;
  for (const auto& p : parts) {
    c_loc.push_back(p.c_loc);
    triple.push_back(p.triple);
    s_tail.push_back(p.s_tail);
    std::int32_t local_blocks = 0;
    for (auto o : p.owner) {
      out.owner.push_back(o + blocks);
      local_blocks = std::max(local_blocks, o + 1);
    }
    blocks += local_blocks;
  }
  out.c_loc = ad::concat_rows(c_loc);
  out.triple = ad::concat_rows(triple);
  out.s_tail = ad::concat_rows(s_tail);
  return out;
}

template <typename T>
InstanceBatch<T> encode_context(Encoder<T>& encoder, const ContextSet& context) {
  require(context.size() > 0, "encode_context: empty context");
  std::vector<kg::EntityId> heads;
  std::map<kg::EntityId, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < context.size(); ++i) {
    const auto h = context.entries[i].triple.head;
    if (!members.contains(h)) heads.push_back(h);
    members[h].push_back(i);
  }
  std::vector<InstanceBatch<T>> parts;
  ad::Index position(context.size());
  std::int32_t row = 0;
  for (auto h : heads) {
    std::vector<kg::EntityId> tails;
    for (auto i : members[h]) {
      tails.push_back(context.entries[i].triple.tail);
      position[i] = row++;
    }
    parts.push_back(encoder.encode(h, context.relation, tails));
  }
  InstanceBatch<T> merged = concat_batches(parts);
  InstanceBatch<T> out;
  out.c_loc = merged.c_loc;
  out.triple = ad::gather_rows(merged.triple, position);
  out.s_tail = ad::gather_rows(merged.s_tail, position);
  for (auto p : position) out.owner.push_back(merged.owner[p]);
  return out;
}

template <typename T>
ad::Var<T> fuse_instances(ModelBinding<T>& model, const InstanceBatch<T>& batch,
                          const std::vector<Label>& labels) {
  const auto& cfg = model.config();
  const auto& lay = model.layout();
  const std::size_t n = batch.size(), L = cfg.nbf_layers;
  require(labels.size() == n, "fuse_instances: one label per instance required");
  require(batch.c_loc.cols() == cfg.dim && batch.c_loc.rows() % L == 0,
          "fuse_instances: multi-scale block shape mismatch");
  require(batch.triple.cols() == 3 * cfg.dim && batch.s_tail.cols() == 2 * cfg.dim + 1,
          "fuse_instances: feature dimension mismatch");
  const std::size_t blocks = batch.c_loc.rows() / L;

  ad::Index layer_of(blocks * L);
  for (std::size_t i = 0; i < layer_of.size(); ++i) layer_of[i] = static_cast<std::int32_t>(i % L);
  ad::Var<T> ms = adapter(model, lay.multi_scale, batch.c_loc) +
                  ad::gather_rows(model(lay.layer_offsets), layer_of);
  ad::Var<T> tri = adapter(model, lay.triple, batch.triple);
  ad::Var<T> sc = adapter(model, lay.score, batch.s_tail);
  ad::Var<T> all = ad::concat_rows<T>({ms, tri, sc});

  const auto ms_rows = static_cast<std::int32_t>(blocks * L);
  ad::Index order, label_rows;
  order.reserve(n * (L + 2));
  label_rows.reserve(n * (L + 2));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < L; ++l)
      order.push_back(batch.owner[i] * static_cast<std::int32_t>(L) + static_cast<std::int32_t>(l));
    order.push_back(ms_rows + static_cast<std::int32_t>(i));
    order.push_back(ms_rows + static_cast<std::int32_t>(n + i));
    for (std::size_t k = 0; k < L + 2; ++k) label_rows.push_back(static_cast<std::int32_t>(labels[i]));
  }
  return ad::gather_rows(all, order) + ad::gather_rows(model(lay.label_embedding), label_rows);
}

#define KGPFN_INSTANTIATE_CONTEXT(T)                                                          \
  template class Encoder<T>;                                                                  \
  template InstanceBatch<T> concat_batches<T>(const std::vector<InstanceBatch<T>>&);          \
  template InstanceBatch<T> encode_context<T>(Encoder<T>&, const ContextSet&);                \
  template ad::Var<T> fuse_instances<T>(ModelBinding<T>&, const InstanceBatch<T>&,            \
                                        const std::vector<Label>&);

KGPFN_INSTANTIATE_CONTEXT(float)
KGPFN_INSTANTIATE_CONTEXT(double)

}  // namespace kgpfn::ctx
