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

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "kgpfn/error.hpp"
#include "kgpfn/kgstore.hpp"

namespace kgpfn::kg {

Vocabulary::Vocabulary(std::vector<std::string> names) {
  for (auto& n : names) intern(n);
}

std::int32_t Vocabulary::intern(const std::string& name) {
  auto [it, inserted] = index_.try_emplace(name, static_cast<std::int32_t>(names_.size()));
  if (inserted) names_.push_back(name);
  return it->second;
}

std::optional<std::int32_t> Vocabulary::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

KnowledgeGraph KnowledgeGraph::from_triples(Vocabulary entities, Vocabulary relations,
                                            std::vector<Triple> triples,
                                            std::size_t* duplicates) {
  KnowledgeGraph g;
  g.entities_ = std::move(entities);
  g.relations_ = std::move(relations);
  const auto E = static_cast<EntityId>(g.entities_.size());
  const auto R = static_cast<RelationId>(g.relations_.size());
  for (const auto& t : triples) {
    if (t.head < 0 || t.head >= E || t.tail < 0 || t.tail >= E)
      fail(ErrorKind::kId, "entity id out of range in triple");
    if (t.relation < 0 || t.relation >= R)
      fail(ErrorKind::kId, "relation id out of range in triple");
  }
  std::sort(triples.begin(), triples.end());
  const std::size_t before = triples.size();
  triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
  if (duplicates) *duplicates = before - triples.size();
  g.triples_ = std::move(triples);
  g.build_indices();
  return g;
}

void KnowledgeGraph::build_indices() {
  const std::size_t R = num_relations();
  const std::size_t E = num_entities();
  forward_.assign(R, {});
  backward_.assign(R, {});
  for (const auto& t : triples_) {
    forward_[t.relation].emplace_back(t.head, t.tail);
    backward_[t.relation].emplace_back(t.tail, t.head);
  }
  for (std::size_t r = 0; r < R; ++r) {
    std::sort(forward_[r].begin(), forward_[r].end());
    std::sort(backward_[r].begin(), backward_[r].end());
  }

  out_offsets_.assign(E + 1, 0);
  in_offsets_.assign(E + 1, 0);
  for (const auto& t : triples_) {
    ++out_offsets_[t.head + 1];
    ++in_offsets_[t.tail + 1];
  }
  std::partial_sum(out_offsets_.begin(), out_offsets_.end(), out_offsets_.begin());
  std::partial_sum(in_offsets_.begin(), in_offsets_.end(), in_offsets_.begin());
  out_.resize(triples_.size());
  in_.resize(triples_.size());
  std::vector<std::size_t> out_fill(out_offsets_.begin(), out_offsets_.end() - 1);
  std::vector<std::size_t> in_fill(in_offsets_.begin(), in_offsets_.end() - 1);
  // triples_ is sorted by head, so out-lists come out sorted by (relation, tail).
  for (const auto& t : triples_) {
    out_[out_fill[t.head]++] = {t.relation, t.tail};
    in_[in_fill[t.tail]++] = {t.relation, t.head};
  }
  for (std::size_t e = 0; e < E; ++e) {
    std::sort(in_.begin() + in_offsets_[e], in_.begin() + in_offsets_[e + 1],
              [](const Adjacent& a, const Adjacent& b) {
                return std::tie(a.relation, a.entity) < std::tie(b.relation, b.entity);
              });
  }
}

bool KnowledgeGraph::contains(const Triple& t) const {
  return std::binary_search(triples_.begin(), triples_.end(), t);
}

std::string KnowledgeGraph::relation_name(RelationId r) const {
  const auto R = static_cast<RelationId>(relations_.size());
  if (r < R) return relations_.name(r);
  require(augmented_ && r < 2 * R, "relation id out of range");
  return "-" + relations_.name(r - R);
}

RelationId KnowledgeGraph::inverse(RelationId r) const {
  require(augmented_, "inverse() needs an augmented graph");
  const auto R = static_cast<RelationId>(relations_.size());
  if (r < 0 || r >= 2 * R) fail(ErrorKind::kId, "relation id out of range");
  return r < R ? r + R : r - R;
}

std::vector<Triple> KnowledgeGraph::triples_of(RelationId r) const {
  std::vector<Triple> out;
  for (const auto& [h, t] : forward(r)) out.push_back({h, r, t});
  return out;
}

KnowledgeGraph KnowledgeGraph::augment_inverses() const {
  require(!augmented_, "graph is already inverse-augmented");
  KnowledgeGraph g;
  g.entities_ = entities_;
  g.relations_ = relations_;
  g.augmented_ = true;
  const auto R = static_cast<RelationId>(relations_.size());
  g.triples_ = triples_;
  g.triples_.reserve(2 * triples_.size());
  for (const auto& t : triples_) g.triples_.push_back({t.tail, t.relation + R, t.head});
  std::sort(g.triples_.begin(), g.triples_.end());
  g.build_indices();
  return g;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return fields;
}

template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3)
      fail(ErrorKind::kParse, path.string() + ":" + std::to_string(lineno) + ": expected 3 " +
                                  "tab-separated fields, got " +
                                  std::to_string(fields.size()));
    fn(fields, lineno);
  }
}

std::int32_t lookup(const Vocabulary& vocab, const std::string& name, const char* what,
                    const std::filesystem::path& path, std::size_t lineno) {
  auto id = vocab.find(name);
  if (!id)
    fail(ErrorKind::kVocabulary, path.string() + ":" + std::to_string(lineno) + ": " + what +
                                     " '" + name + "' not in shared vocabulary");
  return *id;
}

}  // namespace

LoadResult load_tsv(const std::filesystem::path& path, SharedVocabulary shared) {
  Vocabulary entities = shared.entities ? *shared.entities : Vocabulary{};
  Vocabulary relations = shared.relations ? *shared.relations : Vocabulary{};
  std::vector<Triple> triples;
  for_each_record(path, [&](const std::vector<std::string>& f, std::size_t lineno) {
    Triple t;
    t.head = shared.entities ? lookup(entities, f[0], "entity", path, lineno)
                             : entities.intern(f[0]);
    t.relation = shared.relations ? lookup(relations, f[1], "relation", path, lineno)
                                  : relations.intern(f[1]);
    t.tail = shared.entities ? lookup(entities, f[2], "entity", path, lineno)
                             : entities.intern(f[2]);
    triples.push_back(t);
  });
  LoadResult result;
  result.graph = KnowledgeGraph::from_triples(std::move(entities), std::move(relations),
                                              std::move(triples), &result.duplicates);
  return result;
}

std::vector<Triple> load_triples(const std::filesystem::path& path,
                                 const Vocabulary& entities, const Vocabulary& relations) {
  std::vector<Triple> triples;
  for_each_record(path, [&](const std::vector<std::string>& f, std::size_t lineno) {
    triples.push_back({lookup(entities, f[0], "entity", path, lineno),
                       lookup(relations, f[1], "relation", path, lineno),
                       lookup(entities, f[2], "entity", path, lineno)});
  });
  return triples;
}

std::optional<std::int32_t> Subgraph::local_index(EntityId e) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), e);
  if (it == nodes.end() || *it != e) return std::nullopt;
  return static_cast<std::int32_t>(it - nodes.begin());
}

Subgraph khop_subgraph(const KnowledgeGraph& g, EntityId head, int hops, std::size_t cap,
                       std::uint64_t seed, std::optional<EdgeMask> mask) {
  if (head < 0 || static_cast<std::size_t>(head) >= g.num_entities())
    fail(ErrorKind::kId, "head entity " + std::to_string(head) + " out of range");
  require(hops >= 0, "khop_subgraph: negative hop count");
  require(cap >= 1, "khop_subgraph: cap must be at least 1");

  const auto R = static_cast<RelationId>(g.num_original_relations());
  auto masked = [&](EntityId src, RelationId rel, EntityId dst) {
    if (!mask) return false;
    if (src == mask->head && rel == mask->relation) return true;
    if (g.augmented() && dst == mask->head && rel == g.inverse(mask->relation)) return true;
    return false;
  };

  std::vector<std::int32_t> dist(g.num_entities(), -1);
  std::vector<EntityId> members{head};
  dist[head] = 0;
  std::vector<EntityId> frontier{head};
  std::mt19937_64 rng(seed);
  for (int level = 1; level <= hops && !frontier.empty() && members.size() < cap; ++level) {
    std::vector<EntityId> next;
    for (EntityId u : frontier) {
      for (const auto& a : g.out_edges(u))
        if (dist[a.entity] < 0 && !masked(u, a.relation, a.entity)) {
          dist[a.entity] = level;
          next.push_back(a.entity);
        }
      for (const auto& a : g.in_edges(u))
        if (dist[a.entity] < 0 && !masked(a.entity, a.relation, u)) {
          dist[a.entity] = level;
          next.push_back(a.entity);
        }
    }
    std::sort(next.begin(), next.end());
    const std::size_t room = cap - members.size();
    if (next.size() > room) {
      std::shuffle(next.begin(), next.end(), rng);
      for (std::size_t i = room; i < next.size(); ++i) dist[next[i]] = -1;
      next.resize(room);
      std::sort(next.begin(), next.end());
    }
    members.insert(members.end(), next.begin(), next.end());
    frontier = std::move(next);
  }

  Subgraph sub;
  sub.anchor = head;
  sub.hops = hops;
  sub.nodes = members;
  std::sort(sub.nodes.begin(), sub.nodes.end());
  sub.hop.resize(sub.nodes.size());
  sub.in_degree.assign(sub.nodes.size(), 0);
  sub.out_degree.assign(sub.nodes.size(), 0);
  for (std::size_t i = 0; i < sub.nodes.size(); ++i) sub.hop[i] = dist[sub.nodes[i]];
  for (std::size_t i = 0; i < sub.nodes.size(); ++i) {
    const EntityId u = sub.nodes[i];
    for (const auto& a : g.out_edges(u)) {
      if (dist[a.entity] < 0 || masked(u, a.relation, a.entity)) continue;
      const auto j = *sub.local_index(a.entity);
      sub.edges.push_back({static_cast<std::int32_t>(i), a.relation, j});
      if (a.relation < R) {
        ++sub.out_degree[i];
        ++sub.in_degree[j];
      }
    }
  }
  return sub;
}

const std::vector<EntityId>& QuerySet::filter(EntityId head, RelationId relation) const {
  static const std::vector<EntityId> kEmpty;
  auto it = filters_.find({head, relation});
  return it == filters_.end() ? kEmpty : it->second;
}

void QuerySet::add_known(const Triple& t) {
  auto& tails = filters_[{t.head, t.relation}];
  auto it = std::lower_bound(tails.begin(), tails.end(), t.tail);
  if (it == tails.end() || *it != t.tail) tails.insert(it, t.tail);
}

QuerySet build_query_set(const KnowledgeGraph& observed, const std::vector<Triple>& eval,
                         const std::vector<std::vector<Triple>>& all_known,
                         bool with_inverses) {
  require(!with_inverses || observed.augmented(),
          "inverse queries need an inverse-augmented observed graph");
  const auto E = static_cast<EntityId>(observed.num_entities());
  const auto Rn = static_cast<RelationId>(observed.num_relations());
  auto check = [&](const Triple& t) {
    if (t.head < 0 || t.head >= E || t.tail < 0 || t.tail >= E || t.relation < 0 ||
        t.relation >= Rn)
      fail(ErrorKind::kId, "query triple id out of range");
  };
  QuerySet qs;
  auto add = [&](const Triple& t) {
    qs.add_known(t);
    if (with_inverses && t.relation < static_cast<RelationId>(observed.num_original_relations()))
      qs.add_known({t.tail, observed.inverse(t.relation), t.head});
  };
  for (const auto& split : all_known)
    for (const auto& t : split) {
      check(t);
      add(t);
    }
  for (const auto& t : eval) {
    check(t);
    add(t);
    qs.queries.push_back(t);
  }
  if (with_inverses)
    for (const auto& t : eval) qs.queries.push_back({t.tail, observed.inverse(t.relation), t.head});
  return qs;
}

}  // namespace kgpfn::kg
