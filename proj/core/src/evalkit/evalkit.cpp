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

#include "kgpfn/evalkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "kgpfn/error.hpp"
#include "kgpfn/objectives.hpp"
#include "kgpfn/pipeline.hpp"

namespace kgpfn::eval {

double filtered_rank(std::span<const double> scores, kg::EntityId true_tail,
                     const std::vector<kg::EntityId>& filter) {
  require(true_tail >= 0 && static_cast<std::size_t>(true_tail) < scores.size(),
          "filtered_rank: true tail has no score");
  const double target = scores[true_tail];
  std::vector<bool> skip(scores.size(), false);
  for (auto e : filter)
    if (e >= 0 && static_cast<std::size_t>(e) < scores.size() && e != true_tail) skip[e] = true;
  double greater = 0.0, ties = 0.0;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    if (skip[e] || static_cast<kg::EntityId>(e) == true_tail) continue;
    if (scores[e] > target) greater += 1.0;
    else if (scores[e] == target) ties += 1.0;
  }
  return 1.0 + greater + ties / 2.0;
}

RankResult RankResult::from_ranks(std::vector<double> ranks) {
  RankResult r;
  r.ranks = std::move(ranks);
  if (r.ranks.empty()) return r;
  for (double k : r.ranks) {
    r.mrr += 1.0 / k;
    r.hits1 += k <= 1.0;
    r.hits3 += k <= 3.0;
    r.hits10 += k <= 10.0;
  }
  const double n = static_cast<double>(r.ranks.size());
  r.mrr /= n;
  r.hits1 /= n;
  r.hits3 /= n;
  r.hits10 /= n;
  return r;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0};
}

}  // namespace

std::vector<std::uint64_t> default_seeds(std::size_t count) {
  std::vector<std::uint64_t> s(count);
  std::iota(s.begin(), s.end(), 0);
  return s;
}

EvalReport evaluate_with(const Scorer& scorer, const kg::QuerySet& queries,
                         const std::vector<std::uint64_t>& seeds, std::size_t threads) {
  require(!seeds.empty(), "evaluate: at least one seed required");
  EvalReport report;
  report.seeds = seeds;
  report.queries = queries.size();
  const std::size_t n = queries.size();
  for (std::uint64_t seed : seeds) {
    std::vector<std::optional<double>> ranks(n);
    std::vector<std::string> reasons(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&](std::size_t w) {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          const auto& q = queries.queries[i];
          auto scores = scorer(q, train::mix_seed(seed, i), w, &reasons[i]);
          if (scores) ranks[i] = filtered_rank(*scores, q.tail, queries.filter(q.head, q.relation));
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const std::size_t t = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
    if (t == 1) {
      worker(0);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t k = 0; k < t; ++k) pool.emplace_back(worker, k);
      for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    std::vector<double> kept;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (ranks[i]) {
        kept.push_back(*ranks[i]);
      } else {
        ++skipped;
        if (seed == seeds.front()) report.skipped_reasons.push_back(reasons[i]);
      }
    }
    report.skipped = std::max(report.skipped, skipped);
    report.per_seed.push_back(RankResult::from_ranks(std::move(kept)));
  }
  std::vector<double> mrr, h1, h3, h10;
  for (const auto& r : report.per_seed) {
    mrr.push_back(r.mrr);
    h1.push_back(r.hits1);
    h3.push_back(r.hits3);
    h10.push_back(r.hits10);
  }
  std::tie(report.mrr_mean, report.mrr_std) = mean_std(mrr);
  report.hits1 = mean_std(h1).first;
  report.hits3 = mean_std(h3).first;
  std::tie(report.hits10, report.hits10_std) = mean_std(h10);
  return report;
}

namespace {

template <typename T>
kg::QuerySet truncate(const kg::QuerySet& queries, std::size_t max_queries) {
  kg::QuerySet out = queries;
  if (max_queries > 0 && out.queries.size() > max_queries) out.queries.resize(max_queries);
  return out;
}

}  // namespace

template <typename T>
EvalReport evaluate(const ModelParams<T>& model, const kg::KnowledgeGraph& observed,
                    const rel::RelationGraph& rg, const kg::QuerySet& queries,
                    const EvalOptions& options, const std::vector<std::uint64_t>& seeds) {
  const kg::QuerySet subset = truncate<T>(queries, options.max_queries);
  const std::size_t workers = std::max<std::size_t>(options.threads, 1);
  // One cache per worker thread; cached values are identical whichever
  // worker computes them.
  std::vector<ctx::EncodingCache<T>> caches(workers);

  std::vector<kg::EntityId> all(observed.num_entities());
  std::iota(all.begin(), all.end(), 0);
  Scorer scorer = [&](const kg::Triple& q, std::uint64_t seed, std::size_t worker,
                      std::string* reason) -> std::optional<std::vector<double>> {
    ctx::ContextSet context;
    try {
      context = ctx::sample_global_context(observed, q.relation, options.m_plus, options.m_minus,
                                           q, seed);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kEmptyRelation && e.kind() != ErrorKind::kSamplingExhausted)
        throw;
      if (reason) *reason = std::string(to_string(e.kind())) + ": " + e.what();
      return std::nullopt;
    }
    ad::Tape<T> tape;
    ModelBinding<T> binding(tape, model, false);
    ctx::Encoder<T> encoder(binding, observed, rg,
                            {options.hops, options.node_cap, model.config.mask_query_edges, 0},
                            &caches[worker]);
    auto scored = score_candidates(encoder, q.head, q.relation, all, context);
    std::vector<double> scores(all.size());
    for (std::size_t e = 0; e < all.size(); ++e)
      scores[e] = static_cast<double>(scored.scores.value()[e]);
    return scores;
  };
  return evaluate_with(scorer, subset, seeds, workers);
}

template <typename T>
std::vector<SweepRow> context_sweep(const ModelParams<T>& model,
                                    const kg::KnowledgeGraph& observed,
                                    const rel::RelationGraph& rg, const kg::QuerySet& queries,
                                    const SweepGrid& grid, const EvalOptions& base,
                                    const std::vector<std::uint64_t>& seeds) {
  require(!grid.m_plus.empty() && !grid.m_minus.empty() && !grid.hops.empty(),
          "context_sweep: empty grid");
  std::vector<SweepRow> rows;
  for (auto mp : grid.m_plus)
    for (auto mm : grid.m_minus)
      for (auto k : grid.hops) {
        EvalOptions o = base;
        o.m_plus = mp;
        o.m_minus = mm;
        o.hops = k;
        const auto r = evaluate(model, observed, rg, queries, o, seeds);
        rows.push_back({mp, mm, k, r.mrr_mean, r.mrr_std, r.hits10, r.skipped});
      }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out.precision(10);
  out << "m_plus,m_minus,hops,mrr,hits10\n";
  for (const auto& r : rows)
    out << r.m_plus << ',' << r.m_minus << ',' << r.hops << ',' << r.mrr << ',' << r.hits10 << '\n';
}

void write_sweep_json(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows)
    j.push_back({{"m_plus", r.m_plus},
                 {"m_minus", r.m_minus},
                 {"hops", r.hops},
                 {"mrr", r.mrr},
                 {"mrr_std", r.mrr_std},
                 {"hits10", r.hits10},
                 {"skipped", r.skipped}});
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_metrics_json(const std::filesystem::path& path, const std::string& dataset,
                        const std::string& setting, const EvalReport& report) {
  nlohmann::json per_seed = nlohmann::json::array();
  for (std::size_t i = 0; i < report.per_seed.size(); ++i)
    per_seed.push_back({{"seed", report.seeds[i]},
                        {"mrr", report.per_seed[i].mrr},
                        {"hits1", report.per_seed[i].hits1},
                        {"hits3", report.per_seed[i].hits3},
                        {"hits10", report.per_seed[i].hits10}});
  nlohmann::json j = {{"dataset", dataset},
                      {"setting", setting},
                      {"mrr_mean", report.mrr_mean},
                      {"mrr_std", report.mrr_std},
                      {"hits1", report.hits1},
                      {"hits3", report.hits3},
                      {"hits10", report.hits10},
                      {"hits10_std", report.hits10_std},
                      {"queries", report.queries},
                      {"skipped", report.skipped},
                      {"skipped_reasons", report.skipped_reasons},
                      {"seeds", report.seeds},
                      {"per_seed", per_seed}};
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

template <typename T>
AttentionExport export_attention(const ModelParams<T>& model, const kg::KnowledgeGraph& observed,
                                 const rel::RelationGraph& rg, kg::EntityId head,
                                 kg::RelationId relation,
                                 const std::vector<kg::EntityId>& candidates,
                                 const ctx::ContextSet& context, const EvalOptions& options,
                                 const std::optional<std::filesystem::path>& path) {
  ad::Tape<T> tape;
  ModelBinding<T> binding(tape, model, false);
  ctx::Encoder<T> encoder(binding, observed, rg,
                          {options.hops, options.node_cap, model.config.mask_query_edges, 0});
  auto scored = score_candidates(encoder, head, relation, candidates, context);
  AttentionExport out;
  out.attention = scored.attention.template cast<double>();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.scores.push_back(static_cast<double>(scored.scores.value()[i]));
    out.row_labels.push_back(observed.entities().name(candidates[i]));
  }
  for (const auto& e : context.entries)
    out.column_labels.push_back(observed.entities().name(e.triple.head) + "|" +
                                observed.relation_name(e.triple.relation) + "|" +
                                observed.entities().name(e.triple.tail) + "|" +
                                (e.label == 1 ? "pos" : "neg"));
  if (path) pfn::write_attention_csv(*path, out.attention, out.row_labels, out.column_labels);
  return out;
}

#define KGPFN_INSTANTIATE_EVAL(T)                                                                \
  template EvalReport evaluate<T>(const ModelParams<T>&, const kg::KnowledgeGraph&,              \
                                  const rel::RelationGraph&, const kg::QuerySet&,                \
                                  const EvalOptions&, const std::vector<std::uint64_t>&);        \
  template std::vector<SweepRow> context_sweep<T>(                                               \
      const ModelParams<T>&, const kg::KnowledgeGraph&, const rel::RelationGraph&,               \
      const kg::QuerySet&, const SweepGrid&, const EvalOptions&,                                 \
      const std::vector<std::uint64_t>&);                                                        \
  template AttentionExport export_attention<T>(                                                  \
      const ModelParams<T>&, const kg::KnowledgeGraph&, const rel::RelationGraph&, kg::EntityId, \
      kg::RelationId, const std::vector<kg::EntityId>&, const ctx::ContextSet&,                  \
      const EvalOptions&, const std::optional<std::filesystem::path>&);

KGPFN_INSTANTIATE_EVAL(float)
KGPFN_INSTANTIATE_EVAL(double)

}  // namespace kgpfn::eval
