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
#include <map>
#include <memory>
#include <optional>
#include <tuple>
#include <vector>

#include "kgpfn/kgstore.hpp"
#include "kgpfn/localenc.hpp"
#include "kgpfn/model.hpp"
#include "kgpfn/relgraph.hpp"

namespace kgpfn::ctx {

enum class Label : std::int32_t { kPositive = 0, kNegative = 1, kMasked = 2 };

struct ContextEntry {
  kg::Triple triple;
  int label = 0;  // 1 positive, 0 negative
};

struct ContextSet {
  kg::RelationId relation = 0;
  std::vector<ContextEntry> entries;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t shortfall = 0;  // requested positives that did not exist
  std::uint64_t seed = 0;

  std::size_t size() const { return entries.size(); }
};

inline constexpr int kNegativeRetries = 100;

// Extra truth oracle consulted when rejecting corrupted tails.
using KnownTrue = std::function<bool(const kg::Triple&)>;

ContextSet sample_global_context(const kg::KnowledgeGraph& g, kg::RelationId r,
                                 std::size_t m_plus, std::size_t m_minus,
                                 std::optional<kg::Triple> exclude, std::uint64_t seed,
                                 const KnownTrue& known = {});

// JSON lines {h, r, t, label, shortfall}.
void write_context_jsonl(const std::filesystem::path& path, const ContextSet& context,
                         const kg::KnowledgeGraph& g);

// Value snapshot of one head encoding, reusable across tapes.
template <typename T>
struct HeadSnapshot {
  kg::Subgraph subgraph;
  ad::Tensor<T> c_loc;      // [L, d]
  ad::Tensor<T> relation;   // [1, d]
  ad::Tensor<T> states;     // [n, d]
};

template <typename T>
class EncodingCache {
 public:
  using Key = std::tuple<kg::EntityId, kg::RelationId, int>;
  const HeadSnapshot<T>* find(const Key& key) const {
    auto it = heads_.find(key);
    return it == heads_.end() ? nullptr : &it->second;
  }
  void insert(const Key& key, HeadSnapshot<T> snap) { heads_.emplace(key, std::move(snap)); }
  const ad::Tensor<T>* relations(kg::RelationId r) const {
    auto it = relations_.find(r);
    return it == relations_.end() ? nullptr : &it->second;
  }
  void insert_relations(kg::RelationId r, ad::Tensor<T> emb) { relations_.emplace(r, std::move(emb)); }
  std::size_t size() const { return heads_.size(); }

 private:
  std::map<Key, HeadSnapshot<T>> heads_;
  std::map<kg::RelationId, ad::Tensor<T>> relations_;
};

// Encoder output for one head and any number of candidate tails. Rows of
// `triple` and `s_tail` follow the tail order.
template <typename T>
struct InstanceBatch {
  ad::Var<T> c_loc;          // [u * L, d], one block per distinct head
  ad::Index owner;           // instance -> head block
  ad::Var<T> triple;         // [n, 3d] = [z_h ; r ; z_t]
  ad::Var<T> s_tail;         // [n, 2d + 1]
  std::size_t size() const { return owner.size(); }
};

template <typename T>
InstanceBatch<T> concat_batches(const std::vector<InstanceBatch<T>>& parts);

struct EncoderOptions {
  int hops = 3;
  std::size_t node_cap = kg::kDefaultNodeCap;
  bool mask_query_edges = true;
  std::uint64_t subgraph_seed = 0;
};

// Runs relation MPNN, subgraph extraction, NBFNet and tail enhancement for
// one graph on one tape. Head encodings are shared across calls on the same
// tape; an optional cache carries values across tapes (inference only).
template <typename T>
class Encoder {
 public:
  Encoder(ModelBinding<T>& model, const kg::KnowledgeGraph& g, const rel::RelationGraph& rg,
          EncoderOptions options, EncodingCache<T>* cache = nullptr);

  ad::Var<T> relation_embeddings(kg::RelationId r);
  InstanceBatch<T> encode(kg::EntityId head, kg::RelationId r,
                          const std::vector<kg::EntityId>& tails);
  const kg::Subgraph& subgraph(kg::EntityId head, kg::RelationId r);
  ModelBinding<T>& model() { return model_; }
  const kg::KnowledgeGraph& graph() const { return graph_; }
  const EncoderOptions& options() const { return options_; }

 private:
  struct HeadState {
    kg::Subgraph subgraph;
    ad::Var<T> c_loc, z_head, relation, states;
  };
  HeadState& head_state(kg::EntityId head, kg::RelationId r);

  ModelBinding<T>& model_;
  const kg::KnowledgeGraph& graph_;
  const rel::RelationGraph& rg_;
  EncoderOptions options_;
  EncodingCache<T>* cache_;
  std::map<kg::RelationId, ad::Var<T>> relations_;
  std::map<std::pair<kg::EntityId, kg::RelationId>, std::unique_ptr<HeadState>> heads_;
  std::optional<ad::Var<T>> canonical_;
};

// Single-triple convenience wrapper.
template <typename T>
InstanceBatch<T> encode_instance(Encoder<T>& encoder, const kg::Triple& triple) {
  return encoder.encode(triple.head, triple.relation, {triple.tail});
}

// Encodes every context entry; entries sharing a head reuse its encoding.
template <typename T>
InstanceBatch<T> encode_context(Encoder<T>& encoder, const ContextSet& context);

std::vector<Label> context_labels(const ContextSet& context);

// Token matrix [n * (L + 2), d'] in instance-major order: L multi-scale
// tokens, the triple token, then the score token.
template <typename T>
ad::Var<T> fuse_instances(ModelBinding<T>& model, const InstanceBatch<T>& batch,
                          const std::vector<Label>& labels);

}  // namespace kgpfn::ctx
