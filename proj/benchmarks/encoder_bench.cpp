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

#include <benchmark/benchmark.h>

#include "kgpfn/contextkit.hpp"
#include "kgpfn/kgstore.hpp"
#include "kgpfn/relgraph.hpp"

namespace {

using namespace kgpfn;

struct Fixture {
  kg::KnowledgeGraph graph;
  rel::RelationGraph rg;
  ModelParams<float> model;

  Fixture() {
    kg::SyntheticSpec spec;
    spec.base_relations = {"a", "b", "c"};
    spec.rules = {{"ab", {"a", "b"}}};
    spec.base_degree = 2;
    const auto data = kg::generate_synthetic(spec, 3);
    graph = data.test.augment_inverses();
    rg = rel::build_relation_graph(graph);
    ModelConfig c;
    c.dim = 32;
    c.adapter_dim = 32;
    model = init_model<float>(c, 0);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_RelationGraph(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(rel::build_relation_graph(f.graph).num_edges());
}
BENCHMARK(BM_RelationGraph);

void BM_KhopSubgraph(benchmark::State& state) {
  const auto& f = fixture();
  const int hops = static_cast<int>(state.range(0));
  kg::EntityId head = 0;
  for (auto _ : state) {
    auto sub = kg::khop_subgraph(f.graph, head, hops, kg::kDefaultNodeCap, 0, std::nullopt);
    benchmark::DoNotOptimize(sub.nodes.size());
    head = (head + 1) % static_cast<kg::EntityId>(f.graph.num_entities());
  }
}
BENCHMARK(BM_KhopSubgraph)->DenseRange(1, 3);

// Full local encoding of one head against all candidate tails.
void BM_EncodeHead(benchmark::State& state) {
  const auto& f = fixture();
  std::vector<kg::EntityId> tails(f.graph.num_entities());
  for (std::size_t e = 0; e < tails.size(); ++e) tails[e] = static_cast<kg::EntityId>(e);
  kg::EntityId head = 0;
  for (auto _ : state) {
    ad::Tape<float> tape;
    ModelBinding<float> b(tape, f.model, false);
    ctx::Encoder<float> enc(b, f.graph, f.rg, {static_cast<int>(state.range(0))});
    auto batch = enc.encode(head, 0, tails);
    benchmark::DoNotOptimize(batch.triple.value()[0]);
    head = (head + 1) % static_cast<kg::EntityId>(f.graph.num_entities());
  }
}
BENCHMARK(BM_EncodeHead)->Arg(1)->Arg(3);

}  // namespace

BENCHMARK_MAIN();
