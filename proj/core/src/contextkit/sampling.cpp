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
#include <random>

#include <nlohmann/json.hpp>

#include "kgpfn/contextkit.hpp"
#include "kgpfn/error.hpp"

namespace kgpfn::ctx {

ContextSet sample_global_context(const kg::KnowledgeGraph& g, kg::RelationId r,
                                 std::size_t m_plus, std::size_t m_minus,
                                 std::optional<kg::Triple> exclude, std::uint64_t seed,
                                 const KnownTrue& known) {
  require(r >= 0 && static_cast<std::size_t>(r) < g.num_relations(),
          "sample_global_context: relation out of range");
  require(m_plus + m_minus >= 1, "sample_global_context: empty context requested");

  std::vector<kg::Triple> pool;
  for (const auto& [h, t] : g.forward(r)) {
    const kg::Triple tr{h, r, t};
    if (exclude && tr == *exclude) continue;
    pool.push_back(tr);
  }
  if (pool.empty())
    fail(ErrorKind::kEmptyRelation,
         "relation " + g.relation_name(r) + " has no observed triples for context");

  std::mt19937_64 rng(seed);
  const std::size_t take = std::min(m_plus, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }

  ContextSet out;
  out.relation = r;
  out.seed = seed;
  out.positives = take;
  out.shortfall = m_plus - take;
  for (std::size_t i = 0; i < take; ++i) out.entries.push_back({pool[i], 1});

  // Negatives corrupt the tails of sampled positives; with m_plus = 0 they
  // fall back to the whole pool.
  const std::size_t sources = take > 0 ? take : pool.size();
  std::uniform_int_distribution<kg::EntityId> entity(
      0, static_cast<kg::EntityId>(g.num_entities()) - 1);
  auto is_true = [&](const kg::Triple& t) {
    return g.contains(t) || (exclude && t == *exclude) || (known && known(t));
  };
  for (std::size_t j = 0; j < m_minus; ++j) {
    const kg::Triple& base = pool[j % sources];
    bool filled = false;
    for (int attempt = 0; attempt < kNegativeRetries && !filled; ++attempt) {
      const kg::Triple cand{base.head, r, entity(rng)};
      if (is_true(cand)) continue;
      out.entries.push_back({cand, 0});
      filled = true;
    }
    if (!filled)
      fail(ErrorKind::kSamplingExhausted,
           "no valid negative for relation " + g.relation_name(r) + " after " +
               std::to_string(kNegativeRetries) + " retries (seed " + std::to_string(seed) + ")");
  }
  out.negatives = m_minus;
  std::shuffle(out.entries.begin(), out.entries.end(), rng);
  return out;
}

void write_context_jsonl(const std::filesystem::path& path, const ContextSet& context,
                         const kg::KnowledgeGraph& g) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& e : context.entries) {
    nlohmann::json line = {{"h", g.entities().name(e.triple.head)},
                           {"r", g.relation_name(e.triple.relation)},
                           {"t", g.entities().name(e.triple.tail)},
                           {"label", e.label},
                           {"shortfall", context.shortfall}};
    out << line.dump() << '\n';
  }
}

std::vector<Label> context_labels(const ContextSet& context) {
  std::vector<Label> labels;
  labels.reserve(context.size());
  for (const auto& e : context.entries)
    labels.push_back(e.label == 1 ? Label::kPositive : Label::kNegative);
  return labels;
}

}  // namespace kgpfn::ctx
