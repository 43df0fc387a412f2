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
#include <array>
#include <cmath>
#include <numeric>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kgpfn/error.hpp"
#include "kgpfn/kgstore.hpp"

namespace kgpfn::kg {
namespace {

struct SplitTriples {
  std::set<Triple> all;
  std::vector<Triple> rule_triples;
};

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Source and target entity ranges [begin, end) of one base relation.
struct Signature {
  EntityId src_begin, src_end, dst_begin, dst_end;
};

std::vector<Signature> signatures_for(const SyntheticSpec& spec, std::size_t n) {
  std::map<std::string, std::pair<EntityId, EntityId>> blocks;
  double total = 0.0;
  for (const auto& [name, fraction] : spec.entity_types) total += fraction;
  EntityId next = 0;
  std::size_t index = 0;
  for (const auto& [name, fraction] : spec.entity_types) {
    ++index;
    const auto count = index == spec.entity_types.size()
                           ? static_cast<EntityId>(n) - next
                           : static_cast<EntityId>(std::llround(fraction / total * n));
    if (count < 1 || next + count > static_cast<EntityId>(n))
      fail(ErrorKind::kSpec, "entity type " + name + " receives no entities");
    blocks[name] = {next, next + count};
    next += count;
  }
  std::vector<Signature> out;
  for (const auto& rel : spec.base_relations) {
    auto it = spec.signatures.find(rel);
    if (it == spec.signatures.end()) {
      out.push_back({0, static_cast<EntityId>(n), 0, static_cast<EntityId>(n)});
      continue;
    }
    const auto& src = blocks.at(it->second.first);
    const auto& dst = blocks.at(it->second.second);
    out.push_back({src.first, src.second, dst.first, dst.second});
  }
  return out;
}

SplitTriples make_split(const SyntheticSpec& spec, std::size_t n,
                        const std::vector<std::array<RelationId, 3>>& rules,
                        std::mt19937_64& rng) {
  SplitTriples out;
  if (n < 2) return out;
  const auto base_count = static_cast<RelationId>(spec.base_relations.size());
  const auto sig = signatures_for(spec, n);
  auto draw = [&](EntityId begin, EntityId end) {
    return begin + static_cast<EntityId>(uniform_index(rng, static_cast<std::size_t>(end - begin)));
  };
  auto other = [&](RelationId b, EntityId x) {
    const auto& s = sig[b];
    if (s.dst_end - s.dst_begin == 1 && s.dst_begin == x)
      fail(ErrorKind::kSpec, "relation " + spec.base_relations[b] + " has no valid target");
    EntityId y;
    do {
      y = draw(s.dst_begin, s.dst_end);
    } while (y == x);
    return y;
  };
  for (RelationId b = 0; b < base_count; ++b)
    for (EntityId x = sig[b].src_begin; x < sig[b].src_end; ++x)
      for (std::size_t k = 0; k < spec.base_degree; ++k) out.all.insert({x, b, other(b, x)});

  const auto distractors =
      static_cast<std::size_t>(std::llround(spec.distractor_rate * out.all.size()));
  for (std::size_t i = 0; i < distractors; ++i) {
    const auto b = static_cast<RelationId>(uniform_index(rng, base_count));
    const auto x = draw(sig[b].src_begin, sig[b].src_end);
    out.all.insert({x, b, other(b, x)});
  }

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (const auto& [head_rel, first, second] : rules) {
    std::map<EntityId, std::vector<EntityId>> second_by_head;
    for (const auto& t : out.all)
      if (t.relation == second) second_by_head[t.head].push_back(t.tail);
    std::set<Triple> candidates;
    for (const auto& t : out.all) {
      if (t.relation != first) continue;
      auto it = second_by_head.find(t.tail);
      if (it == second_by_head.end()) continue;
      for (EntityId z : it->second)
        if (z != t.head) candidates.insert({t.head, head_rel, z});
    }
    for (const auto& c : candidates) {
      if (coin(rng) >= spec.fire_prob) continue;
      if (out.all.insert(c).second) out.rule_triples.push_back(c);
    }
  }
  return out;
}

Vocabulary entity_vocab(const std::string& prefix, std::size_t n) {
  Vocabulary v;
  for (std::size_t i = 0; i < n; ++i) v.intern(prefix + std::to_string(i));
  return v;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.base_relations.empty()) fail(ErrorKind::kSpec, "no base relations declared");
  if (spec.fire_prob < 0.0 || spec.fire_prob > 1.0)
    fail(ErrorKind::kSpec, "fire_prob must lie in [0, 1]");
  if (spec.distractor_rate < 0.0) fail(ErrorKind::kSpec, "distractor_rate must be >= 0");
  if (spec.query_fraction < 0.0 || spec.query_fraction > 1.0)
    fail(ErrorKind::kSpec, "query_fraction must lie in [0, 1]");
  for (const auto& [name, fraction] : spec.entity_types)
    if (!(fraction > 0.0)) fail(ErrorKind::kSpec, "entity type " + name + " needs a positive fraction");
  for (const auto& [rel, types] : spec.signatures) {
    if (std::find(spec.base_relations.begin(), spec.base_relations.end(), rel) ==
        spec.base_relations.end())
      fail(ErrorKind::kSpec, "signature for undeclared relation " + rel);
    for (const auto& type : {types.first, types.second})
      if (!spec.entity_types.contains(type))
        fail(ErrorKind::kSpec, "signature of " + rel + " uses undeclared type " + type);
  }

  Vocabulary relations;
  for (const auto& b : spec.base_relations) {
    if (relations.find(b)) fail(ErrorKind::kSpec, "duplicate base relation " + b);
    relations.intern(b);
  }
  std::vector<std::array<RelationId, 3>> rules;
  std::set<RelationId> body_relations;
  for (const auto& rule : spec.rules) {
    if (rule.body.size() != 2)
      fail(ErrorKind::kSpec, "rule for " + rule.head_relation + " needs a two-relation body");
    std::array<RelationId, 3> ids{};
    for (std::size_t i = 0; i < 2; ++i) {
      auto id = relations.find(rule.body[i]);
      if (!id)
        fail(ErrorKind::kSpec, "rule for " + rule.head_relation +
                                   " uses undeclared relation " + rule.body[i]);
      ids[i + 1] = *id;
      body_relations.insert(*id);
    }
    if (relations.find(rule.head_relation))
      fail(ErrorKind::kSpec, "rule head " + rule.head_relation + " is already declared");
    ids[0] = relations.intern(rule.head_relation);
    rules.push_back(ids);
  }

  std::mt19937_64 rng(seed);
  SyntheticDataset data;
  for (const auto& rule : spec.rules) data.rule_heads_train.push_back(rule.head_relation);

  SplitTriples train = make_split(spec, spec.entities_train, rules, rng);
  data.train = KnowledgeGraph::from_triples(entity_vocab("train_e", spec.entities_train),
                                            relations,
                                            {train.all.begin(), train.all.end()});

  SplitTriples test = make_split(spec, spec.entities_test, rules, rng);
  std::vector<Triple> holdable;
  for (const auto& t : test.rule_triples)
    if (!body_relations.contains(t.relation)) holdable.push_back(t);
  std::shuffle(holdable.begin(), holdable.end(), rng);
  holdable.resize(static_cast<std::size_t>(
      std::llround(spec.query_fraction * static_cast<double>(holdable.size()))));
  std::set<Triple> held(holdable.begin(), holdable.end());
  std::vector<Triple> observed;
  for (const auto& t : test.all)
    if (!held.contains(t)) observed.push_back(t);
  std::vector<Triple> queries(held.begin(), held.end());

  Vocabulary test_relations = relations;
  if (spec.remap_relations) {
    std::vector<RelationId> perm(relations.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::string> names(relations.size());
    for (std::size_t j = 0; j < names.size(); ++j) names[j] = "rel_" + std::to_string(j);
    test_relations = Vocabulary(names);
    for (auto* list : {&observed, &queries})
      for (auto& t : *list) t.relation = perm[t.relation];
    for (const auto& rule : spec.rules)
      data.rule_heads_test.push_back(names[perm[*relations.find(rule.head_relation)]]);
  } else {
    data.rule_heads_test = data.rule_heads_train;
  }

  data.test = KnowledgeGraph::from_triples(entity_vocab("test_e", spec.entities_test),
                                           test_relations, observed);
  data.test_queries = queries;
  const KnowledgeGraph augmented = data.test.augment_inverses();
  data.queries = build_query_set(augmented, queries, {data.test.triples(), queries});
  return data;
}

SyntheticSpec synthetic_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("synthetic spec: ") + e.what());
  }
  static const std::set<std::string> kKnown = {
      "entities_train", "entities_test", "base_relations", "rules",        "fire_prob",
      "distractor_rate", "remap_relations", "seed",        "query_fraction", "base_degree",
      "entity_types",   "signatures"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!kKnown.contains(it.key()))
      fail(ErrorKind::kSpec, "unknown synthetic spec key '" + it.key() + "'");
  SyntheticSpec spec;
  try {
    spec.entities_train = j.value("entities_train", spec.entities_train);
    spec.entities_test = j.value("entities_test", spec.entities_test);
    spec.base_relations = j.value("base_relations", std::vector<std::string>{});
    spec.fire_prob = j.value("fire_prob", spec.fire_prob);
    spec.distractor_rate = j.value("distractor_rate", spec.distractor_rate);
    spec.remap_relations = j.value("remap_relations", spec.remap_relations);
    spec.seed = j.value("seed", spec.seed);
    spec.query_fraction = j.value("query_fraction", spec.query_fraction);
    spec.base_degree = j.value("base_degree", spec.base_degree);
    spec.entity_types = j.value("entity_types", std::map<std::string, double>{});
    const auto signatures = j.value("signatures", nlohmann::json::object());
    for (const auto& [rel, types] : signatures.items()) {
      const auto pair = types.get<std::vector<std::string>>();
      if (pair.size() != 2) fail(ErrorKind::kSpec, "signature of " + rel + " needs [source, target]");
      spec.signatures[rel] = {pair[0], pair[1]};
    }
    for (const auto& r : j.value("rules", nlohmann::json::array())) {
      CompositionRule rule;
      rule.head_relation = r.at("head_rel").get<std::string>();
      rule.body = r.at("body").get<std::vector<std::string>>();
      spec.rules.push_back(std::move(rule));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSpec, std::string("synthetic spec: ") + e.what());
  }
  return spec;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return synthetic_spec_from_json(ss.str());
}

void write_tsv(const std::filesystem::path& path, const KnowledgeGraph& vocab_source,
               const std::vector<Triple>& triples) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& t : triples)
    out << vocab_source.entities().name(t.head) << '\t'
        << vocab_source.relations().name(t.relation) << '\t'
        << vocab_source.entities().name(t.tail) << '\n';
}

void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& data) {
  std::filesystem::create_directories(dir);
  write_tsv(dir / "train.txt", data.train, data.train.triples());
  write_tsv(dir / "valid.txt", data.train, {});
  write_tsv(dir / "test_graph.txt", data.test, data.test.triples());
  write_tsv(dir / "test_queries.txt", data.test, data.test_queries);
}

}  // namespace kgpfn::kg
