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

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace kgpfn::kg {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  auto operator<=>(const Triple&) const = default;
};

// Name <-> id map; ids are assigned in first-insertion order.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> names);

  std::int32_t intern(const std::string& name);
  std::optional<std::int32_t> find(const std::string& name) const;
  const std::string& name(std::int32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::int32_t> index_;
};

struct Adjacent {
  RelationId relation;
  EntityId entity;
};

// Immutable triple store with per-relation and per-entity indices.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  // Validates ids against the vocabularies and drops duplicate triples.
  static KnowledgeGraph from_triples(Vocabulary entities, Vocabulary relations,
                                     std::vector<Triple> triples,
                                     std::size_t* duplicates = nullptr);

  std::size_t num_entities() const { return entities_.size(); }
  // Relations before inverse augmentation.
  std::size_t num_original_relations() const { return relations_.size(); }
  // Relation id space, doubled after augmentation.
  std::size_t num_relations() const {
    return augmented_ ? 2 * relations_.size() : relations_.size();
  }
  bool augmented() const { return augmented_; }

  // Sorted by (head, relation, tail).
  const std::vector<Triple>& triples() const { return triples_; }
  std::size_t num_triples() const { return triples_.size(); }
  bool contains(const Triple& t) const;

  const Vocabulary& entities() const { return entities_; }
  const Vocabulary& relations() const { return relations_; }
  std::string relation_name(RelationId r) const;

  // inv(r) = r + R for r < R and r - R otherwise; requires augmentation.
  RelationId inverse(RelationId r) const;

  // Triples of one relation as (head, tail) pairs sorted by head, and as
  // (tail, head) pairs sorted by tail.
  std::span<const std::pair<EntityId, EntityId>> forward(RelationId r) const {
    return forward_.at(r);
  }
  std::span<const std::pair<EntityId, EntityId>> backward(RelationId r) const {
    return backward_.at(r);
  }
  std::vector<Triple> triples_of(RelationId r) const;

  std::span<const Adjacent> out_edges(EntityId e) const {
    return {out_.data() + out_offsets_[e], out_.data() + out_offsets_[e + 1]};
  }
  std::span<const Adjacent> in_edges(EntityId e) const {
    return {in_.data() + in_offsets_[e], in_.data() + in_offsets_[e + 1]};
  }

  KnowledgeGraph augment_inverses() const;

 private:
  void build_indices();

  Vocabulary entities_;
  Vocabulary relations_;
  std::vector<Triple> triples_;
  bool augmented_ = false;
  std::vector<std::vector<std::pair<EntityId, EntityId>>> forward_;
  std::vector<std::vector<std::pair<EntityId, EntityId>>> backward_;
  std::vector<std::size_t> out_offsets_, in_offsets_;
  std::vector<Adjacent> out_, in_;
};

struct SharedVocabulary {
  const Vocabulary* entities = nullptr;
  const Vocabulary* relations = nullptr;
};

struct LoadResult {
  KnowledgeGraph graph;
  std::size_t duplicates = 0;
};

// Reads "head<TAB>relation<TAB>tail" lines. Blank lines are skipped.
LoadResult load_tsv(const std::filesystem::path& path, SharedVocabulary shared = {});
// Reads raw triples against fixed vocabularies (used for query files).
std::vector<Triple> load_triples(const std::filesystem::path& path,
                                 const Vocabulary& entities, const Vocabulary& relations);

// Local (subgraph) edge, endpoints are positions in Subgraph::nodes.
struct SubEdge {
  std::int32_t src;
  RelationId relation;
  std::int32_t dst;
};

struct Subgraph {
  EntityId anchor = 0;
  int hops = 0;
  std::vector<EntityId> nodes;      // sorted
  std::vector<std::int32_t> hop;    // distance from anchor, per node
  std::vector<SubEdge> edges;       // sorted by (src, relation, dst)
  std::vector<std::int32_t> in_degree;   // original-direction edges only
  std::vector<std::int32_t> out_degree;  // original-direction edges only

  std::optional<std::int32_t> local_index(EntityId e) const;
  std::int32_t anchor_index() const { return *local_index(anchor); }
  std::size_t size() const { return nodes.size(); }
};

// Hides the query edge from its own neighborhood: drops (head, relation, *)
// and, on augmented graphs, (*, inv(relation), head).
struct EdgeMask {
  EntityId head;
  RelationId relation;
};

inline constexpr std::size_t kDefaultNodeCap = 2000;

Subgraph khop_subgraph(const KnowledgeGraph& g, EntityId head, int hops,
                       std::size_t cap = kDefaultNodeCap, std::uint64_t seed = 0,
                       std::optional<EdgeMask> mask = std::nullopt);

// Evaluation queries plus per-(head, relation) filter sets.
class QuerySet {
 public:
  std::vector<Triple> queries;

  const std::vector<EntityId>& filter(EntityId head, RelationId relation) const;
  void add_known(const Triple& t);
  std::size_t size() const { return queries.size(); }

 private:
  std::map<std::pair<EntityId, RelationId>, std::vector<EntityId>> filters_;
};

// When `with_inverses` is set (observed graph augmented), each evaluation
// triple also yields its inverse query (t, inv(r), h).
QuerySet build_query_set(const KnowledgeGraph& observed, const std::vector<Triple>& eval,
                         const std::vector<std::vector<Triple>>& all_known,
                         bool with_inverses = true);

struct CompositionRule {
  std::string head_relation;
  std::vector<std::string> body;  // two relations: body[0](x,y) and body[1](y,z)
};

struct SyntheticSpec {
  std::size_t entities_train = 300;
  std::size_t entities_test = 150;
  std::vector<std::string> base_relations;
  std::vector<CompositionRule> rules;
  double fire_prob = 1.0;
  double distractor_rate = 0.3;
  bool remap_relations = false;
  std::uint64_t seed = 0;
  // Fraction of test-graph rule triples held out as queries.
  double query_fraction = 0.5;
  // Out-edges per entity for each base relation.
  std::size_t base_degree = 1;
  // Optional typing. Entities are split into contiguous blocks by fraction;
  // a base relation with a signature only links its source type to its
  // target type. Relations without one range over all entities.
  std::map<std::string, double> entity_types;
  std::map<std::string, std::pair<std::string, std::string>> signatures;
};

struct SyntheticDataset {
  KnowledgeGraph train;  // not augmented
  KnowledgeGraph test;   // observed inference graph, not augmented
  std::vector<Triple> test_queries;
  // Queries on the augmented test graph, filtered against everything known.
  QuerySet queries;
  // Rule head relation names, in the train and test vocabularies.
  std::vector<std::string> rule_heads_train;
  std::vector<std::string> rule_heads_test;
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// JSON form: {entities_train, entities_test, base_relations,
// rules: [{head_rel, body: [rel, rel]}], fire_prob, distractor_rate,
// remap_relations, seed} plus optional query_fraction, base_degree,
// entity_types {type: fraction} and signatures {relation: [source, target]}.
SyntheticSpec synthetic_spec_from_json(const std::string& text);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

// Writes train.txt, valid.txt (empty), test_graph.txt and test_queries.txt.
void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& data);
void write_tsv(const std::filesystem::path& path, const KnowledgeGraph& vocab_source,
               const std::vector<Triple>& triples);

}  // namespace kgpfn::kg
