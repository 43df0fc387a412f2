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

#include <array>
#include <filesystem>
#include <utility>
#include <vector>

#include "kgpfn/kgstore.hpp"
#include "kgpfn/model.hpp"

namespace kgpfn::rel {

enum class Interaction : int { kT2H = 0, kH2H = 1, kH2T = 2, kT2T = 3 };
inline constexpr std::size_t kInteractionTypes = 4;

const char* to_string(Interaction type);

using RelationPair = std::pair<kg::RelationId, kg::RelationId>;

// Relation-level graph over the 2R augmented relations.
// (p, q) in t2h: a tail of some p-edge is the head of some q-edge.
// (p, q) in h2t: a head of some p-edge is the tail of some q-edge.
// h2h / t2t: p and q share a head / tail entity (p != q).
// A t2h/h2t self-pair (p, p) needs two distinct p-edges meeting at one entity.
struct RelationGraph {
  std::size_t num_relations = 0;
  std::array<std::vector<RelationPair>, kInteractionTypes> edges;  // sorted, unique

  const std::vector<RelationPair>& of(Interaction type) const {
    return edges[static_cast<int>(type)];
  }
  bool has(Interaction type, kg::RelationId p, kg::RelationId q) const;
  std::size_t num_edges() const;
};

RelationGraph build_relation_graph(const kg::KnowledgeGraph& g);

// CSV with header src_rel,dst_rel,type.
void write_relation_graph_csv(const std::filesystem::path& path, const RelationGraph& rg,
                              const kg::KnowledgeGraph* names = nullptr);

// Query-conditioned relation representations [2R, d] after `depth` layers.
template <typename T>
ad::Var<T> relation_mpnn(ModelBinding<T>& model, const RelationGraph& rg,
                         kg::RelationId query_rel, std::size_t depth);

template <typename T>
ad::Var<T> relation_mpnn(ModelBinding<T>& model, const RelationGraph& rg,
                         kg::RelationId query_rel) {
  return relation_mpnn(model, rg, query_rel, model.config().rel_layers);
}

}  // namespace kgpfn::rel
