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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgpfn/contextkit.hpp"
#include "kgpfn/kgstore.hpp"
#include "kgpfn/model.hpp"
#include "kgpfn/relgraph.hpp"

namespace kgpfn::eval {

// 1 + #(candidates strictly above the true tail) + #(ties) / 2, where the
// candidates are all entities minus the other known tails in `filter`.
double filtered_rank(std::span<const double> scores, kg::EntityId true_tail,
                     const std::vector<kg::EntityId>& filter);

struct RankResult {
  std::vector<double> ranks;
  double mrr = 0.0;
  double hits1 = 0.0, hits3 = 0.0, hits10 = 0.0;

  static RankResult from_ranks(std::vector<double> ranks);
};

struct EvalReport {
  std::vector<std::uint64_t> seeds;
  std::vector<RankResult> per_seed;
  double mrr_mean = 0.0, mrr_std = 0.0;
  double hits1 = 0.0, hits3 = 0.0, hits10 = 0.0, hits10_std = 0.0;
  std::size_t queries = 0;
  std::size_t skipped = 0;  // per seed, queries whose context could not be built
  std::vector<std::string> skipped_reasons;
};

// Scores for every entity as the tail of `query`, or nullopt to skip.
// `worker` identifies the calling thread in [0, threads).
using Scorer = std::function<std::optional<std::vector<double>>(
    const kg::Triple& query, std::uint64_t seed, std::size_t worker, std::string* skip_reason)>;

EvalReport evaluate_with(const Scorer& scorer, const kg::QuerySet& queries,
                         const std::vector<std::uint64_t>& seeds, std::size_t threads = 1);

struct EvalOptions {
  std::size_t m_plus = 20;
  std::size_t m_minus = 60;
  int hops = 3;
  std::size_t node_cap = kg::kDefaultNodeCap;
  std::size_t threads = 1;
  std::size_t max_queries = 0;  // 0 = all
};

// Default evaluation seeds 0..4.
std::vector<std::uint64_t> default_seeds(std::size_t count = 5);

// In-context inference on the augmented observed graph.
template <typename T>
EvalReport evaluate(const ModelParams<T>& model, const kg::KnowledgeGraph& observed,
                    const rel::RelationGraph& rg, const kg::QuerySet& queries,
                    const EvalOptions& options, const std::vector<std::uint64_t>& seeds);

struct SweepGrid {
  std::vector<std::size_t> m_plus;
  std::vector<std::size_t> m_minus;
  std::vector<int> hops;
};

struct SweepRow {
  std::size_t m_plus = 0, m_minus = 0;
  int hops = 0;
  double mrr = 0.0, mrr_std = 0.0, hits10 = 0.0;
  std::size_t skipped = 0;
};

template <typename T>
std::vector<SweepRow> context_sweep(const ModelParams<T>& model,
                                    const kg::KnowledgeGraph& observed,
                                    const rel::RelationGraph& rg, const kg::QuerySet& queries,
                                    const SweepGrid& grid, const EvalOptions& base,
                                    const std::vector<std::uint64_t>& seeds);

// Header m_plus,m_minus,hops,mrr,hits10.
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);
void write_sweep_json(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

// {dataset, setting, mrr_mean, mrr_std, hits1, hits3, hits10, skipped, seeds}
void write_metrics_json(const std::filesystem::path& path, const std::string& dataset,
                        const std::string& setting, const EvalReport& report);

struct AttentionExport {
  ad::Tensor<double> attention;  // [candidates, m]
  std::vector<double> scores;
  std::vector<std::string> row_labels, column_labels;
};

// Scores `candidates` for (head, relation) against `context` and writes the
// last-layer cross-attention as CSV when `path` is given.
template <typename T>
AttentionExport export_attention(const ModelParams<T>& model, const kg::KnowledgeGraph& observed,
                                 const rel::RelationGraph& rg, kg::EntityId head,
                                 kg::RelationId relation,
                                 const std::vector<kg::EntityId>& candidates,
                                 const ctx::ContextSet& context, const EvalOptions& options,
                                 const std::optional<std::filesystem::path>& path = {});

}  // namespace kgpfn::eval
