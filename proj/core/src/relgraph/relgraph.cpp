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

#include "kgpfn/relgraph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "kgpfn/error.hpp"

namespace kgpfn::rel {

const char* to_string(Interaction type) {
  switch (type) {
    case Interaction::kT2H: return "t2h";
    case Interaction::kH2H: return "h2h";
    case Interaction::kH2T: return "h2t";
    case Interaction::kT2T: return "t2t";
  }
  return "?";
}

bool RelationGraph::has(Interaction type, kg::RelationId p, kg::RelationId q) const {
  const auto& list = of(type);
  return std::binary_search(list.begin(), list.end(), RelationPair{p, q});
}

std::size_t RelationGraph::num_edges() const {
  std::size_t n = 0;
  for (const auto& list : edges) n += list.size();
  return n;
}

RelationGraph build_relation_graph(const kg::KnowledgeGraph& g) {
  require(g.augmented(), "build_relation_graph: graph must be inverse-augmented");
  RelationGraph rg;
  rg.num_relations = g.num_relations();

  // Per entity: how many p-edges leave it and how many arrive at it, plus
  // which relations carry a self-loop on it.
  std::vector<std::map<kg::RelationId, int>> as_head(g.num_entities()), as_tail(g.num_entities());
  std::vector<std::set<kg::RelationId>> self_loop(g.num_entities());
  for (const auto& t : g.triples()) {
    ++as_head[t.head][t.relation];
    ++as_tail[t.tail][t.relation];
    if (t.head == t.tail) self_loop[t.head].insert(t.relation);
  }

  std::array<std::set<RelationPair>, kInteractionTypes> found;
  auto& t2h = found[static_cast<int>(Interaction::kT2H)];
  auto& h2h = found[static_cast<int>(Interaction::kH2H)];
  auto& h2t = found[static_cast<int>(Interaction::kH2T)];
  auto& t2t = found[static_cast<int>(Interaction::kT2T)];
  for (std::size_t e = 0; e < g.num_entities(); ++e) {
    for (const auto& [p, np] : as_tail[e])
      for (const auto& [q, nq] : as_head[e]) {
        // A lone self-loop (e, p, e) would pair with itself.
        if (p == q && np == 1 && nq == 1 && self_loop[e].contains(p)) continue;
        t2h.insert({p, q});
        h2t.insert({q, p});
      }
    for (const auto& [p, np] : as_head[e])
      for (const auto& [q, nq] : as_head[e])
        if (p != q) h2h.insert({p, q});
    for (const auto& [p, np] : as_tail[e])
      for (const auto& [q, nq] : as_tail[e])
        if (p != q) t2t.insert({p, q});
  }
  for (std::size_t s = 0; s < kInteractionTypes; ++s)
    rg.edges[s].assign(found[s].begin(), found[s].end());
  return rg;
}

void write_relation_graph_csv(const std::filesystem::path& path, const RelationGraph& rg,
                              const kg::KnowledgeGraph* names) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "src_rel,dst_rel,type\n";
  auto label = [&](kg::RelationId r) {
    return names ? names->relation_name(r) : std::to_string(r);
  };
  for (std::size_t s = 0; s < kInteractionTypes; ++s)
    for (const auto& [p, q] : rg.edges[s])
      out << label(p) << ',' << label(q) << ',' << to_string(static_cast<Interaction>(s))
          << '\n';
}

template <typename T>
ad::Var<T> relation_mpnn(ModelBinding<T>& model, const RelationGraph& rg,
                         kg::RelationId query_rel, std::size_t depth) {
  const auto& cfg = model.config();
  if (depth > cfg.rel_layers)
    fail(ErrorKind::kConfig, "relation_mpnn: depth " + std::to_string(depth) +
                                 " exceeds the configured " + std::to_string(cfg.rel_layers) +
                                 " layers");
  const std::size_t n = rg.num_relations, d = cfg.dim;
  require(query_rel >= 0 && static_cast<std::size_t>(query_rel) < n,
          "relation_mpnn: query relation out of range");

  ad::Tensor<T> init = ad::Tensor<T>::matrix(n, d);
  for (std::size_t c = 0; c < d; ++c) init(query_rel, c) = T(1);
  ad::Var<T> h = model.constant(std::move(init));

  ad::Index src, dst, type;
  for (std::size_t s = 0; s < kInteractionTypes; ++s)
    for (const auto& [p, q] : rg.edges[s]) {
      src.push_back(p);
      dst.push_back(q);
      type.push_back(static_cast<std::int32_t>(s));
    }

  for (std::size_t l = 0; l < depth; ++l) {
    const auto& layer = model.layout().rel[l];
    ad::Var<T> m;
    if (src.empty()) {
      m = model.constant(ad::Tensor<T>::matrix(n, d));
    } else {
      ad::Var<T> msg = ad::gather_rows(h, src) * ad::gather_rows(model(layer.type_vectors), type);
      m = ad::scatter_add_rows(msg, dst, n);
    }
    ad::Var<T> pre = ad::affine(ad::concat_cols<T>({h, m}), model(layer.weight), model(layer.bias));
    h = ad::layer_norm(ad::relu(pre), model(layer.ln_gain), model(layer.ln_bias));
  }
  return h;
}

template ad::Var<float> relation_mpnn<float>(ModelBinding<float>&, const RelationGraph&,
                                             kg::RelationId, std::size_t);
template ad::Var<double> relation_mpnn<double>(ModelBinding<double>&, const RelationGraph&,
                                               kg::RelationId, std::size_t);

}  // namespace kgpfn::rel
