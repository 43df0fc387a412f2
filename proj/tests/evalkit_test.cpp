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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "kgpfn/error.hpp"
#include "kgpfn/evalkit.hpp"
#include "kgpfn/relgraph.hpp"
#include "test_support.hpp"

namespace kgpfn::eval {
namespace {

using kg::Triple;
using testing::make_graph;

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("kgpfn_evalkit_" + name);
  std::filesystem::create_directories(dir);
  return dir;
}

// Brute force: list the surviving candidates and count by hand.
double rank_oracle(const std::vector<double>& scores, int truth, const std::vector<int>& filter) {
  std::vector<double> others;
  for (int e = 0; e < static_cast<int>(scores.size()); ++e) {
    if (e == truth) continue;
    if (std::find(filter.begin(), filter.end(), e) != filter.end()) continue;
    others.push_back(scores[e]);
  }
  double r = 1.0;
  for (double s : others) {
    if (s > scores[truth]) r += 1.0;
    if (s == scores[truth]) r += 0.5;
  }
  return r;
}

TEST(FilteredRank, WorkedExamples) {
  const std::vector<double> s = {2.0, 3.0, 1.0, 0.0};
  EXPECT_DOUBLE_EQ(filtered_rank(s, 0, {}), 2.0);
  EXPECT_DOUBLE_EQ(filtered_rank(s, 0, {1}), 1.0);
  const std::vector<double> ties = {1.0, 1.0, 1.0, 0.0};
  EXPECT_DOUBLE_EQ(filtered_rank(ties, 0, {}), 2.0);
  // The true tail listed in its own filter is still ranked.
  EXPECT_DOUBLE_EQ(filtered_rank(s, 0, {0, 1}), 1.0);
}

TEST(FilteredRank, MissingTrueTailIsRejected) {
  const std::vector<double> s = {1.0, 2.0};
  EXPECT_THROW(filtered_rank(s, 2, {}), Error);
  EXPECT_THROW(filtered_rank(s, -1, {}), Error);
}

TEST(FilteredRank, PropertiesAgainstOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> level(0, 4);  // coarse scores force ties
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 40);
    std::vector<double> s(n);
    for (auto& v : s) v = level(rng);
    const int truth = static_cast<int>(rng() % n);
    std::vector<int> filter;
    for (int e = 0; e < n; ++e)
      if (rng() % 3 == 0) filter.push_back(e);
    const double filtered = filtered_rank(s, truth, filter);
    const double raw = filtered_rank(s, truth, {});
    EXPECT_DOUBLE_EQ(filtered, rank_oracle(s, truth, filter));
    EXPECT_LE(filtered, raw);
    EXPECT_GE(filtered, 1.0);
    EXPECT_LE(raw, static_cast<double>(n));
  }
}

TEST(RankResult, MetricsFromRanks) {
  const auto r = RankResult::from_ranks({1.0, 2.0, 4.0});
  EXPECT_NEAR(r.mrr, (1.0 + 0.5 + 0.25) / 3.0, 1e-15);
  EXPECT_NEAR(r.mrr, 0.58333, 1e-5);
  EXPECT_DOUBLE_EQ(r.hits1, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.hits3, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.hits10, 1.0);
  const auto empty = RankResult::from_ranks({});
  EXPECT_EQ(empty.mrr, 0.0);
}

TEST(RankResult, HitsAreMonotoneInK) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> ranks(1 + rng() % 50);
    for (auto& k : ranks) k = 1.0 + static_cast<double>(rng() % 40) / 2.0;
    const auto r = RankResult::from_ranks(ranks);
    EXPECT_LE(r.hits1, r.hits3);
    EXPECT_LE(r.hits3, r.hits10);
    EXPECT_LE(r.hits1, r.mrr + 1e-15);
    EXPECT_LE(r.mrr, 1.0);
  }
}

kg::QuerySet query_set(std::size_t entities, std::size_t count) {
  kg::QuerySet qs;
  for (std::size_t i = 0; i < count; ++i)
    qs.queries.push_back({static_cast<int>(i % entities), 0, static_cast<int>((i * 7) % entities)});
  return qs;
}

TEST(EvaluateWith, PerfectScorer) {
  const std::size_t E = 30;
  const auto qs = query_set(E, 25);
  Scorer perfect = [&](const Triple& q, std::uint64_t, std::size_t, std::string*) {
    std::vector<double> s(E, 0.0);
    s[q.tail] = 1.0;
    return std::optional<std::vector<double>>(s);
  };
  const auto r = evaluate_with(perfect, qs, default_seeds());
  EXPECT_EQ(r.seeds.size(), 5u);
  EXPECT_DOUBLE_EQ(r.mrr_mean, 1.0);
  EXPECT_DOUBLE_EQ(r.hits10, 1.0);
  EXPECT_DOUBLE_EQ(r.mrr_std, 0.0);
  EXPECT_EQ(r.queries, 25u);
  EXPECT_EQ(r.skipped, 0u);
}

TEST(EvaluateWith, ConstantScorerRanksInTheMiddle) {
  const std::size_t E = 21;
  const auto qs = query_set(E, 10);
  Scorer flat = [&](const Triple&, std::uint64_t, std::size_t, std::string*) {
    return std::optional<std::vector<double>>(std::vector<double>(E, 0.5));
  };
  const auto r = evaluate_with(flat, qs, {0});
  for (double k : r.per_seed[0].ranks) EXPECT_DOUBLE_EQ(k, (E + 1) / 2.0);
}

TEST(EvaluateWith, SkippedQueriesAreCountedAndExplained) {
  const std::size_t E = 12;
  const auto qs = query_set(E, 9);
  Scorer some = [&](const Triple& q, std::uint64_t, std::size_t,
                    std::string* why) -> std::optional<std::vector<double>> {
    if (q.head % 3 == 0) {
      *why = "no context";
      return std::nullopt;
    }
    std::vector<double> s(E, 0.0);
    s[q.tail] = 1.0;
    return s;
  };
  const auto r = evaluate_with(some, qs, {0, 1});
  EXPECT_EQ(r.skipped, 3u);
  EXPECT_EQ(r.skipped_reasons.size(), 3u);
  EXPECT_EQ(r.skipped_reasons.front(), "no context");
  EXPECT_EQ(r.per_seed[0].ranks.size(), 6u);
}

TEST(EvaluateWith, StdAcrossSeedsAndSeedMixing) {
  const std::size_t E = 40;
  const auto qs = query_set(E, 30);
  // Rank depends on the per-query seed, so seeds disagree.
  Scorer noisy = [&](const Triple& q, std::uint64_t seed, std::size_t, std::string*) {
    std::mt19937_64 rng(seed);
    std::vector<double> s(E);
    for (auto& v : s) v = std::uniform_real_distribution<double>(0, 1)(rng);
    (void)q;
    return std::optional<std::vector<double>>(s);
  };
  const auto r = evaluate_with(noisy, qs, default_seeds());
  std::vector<double> m;
  for (const auto& p : r.per_seed) m.push_back(p.mrr);
  const double mean = std::accumulate(m.begin(), m.end(), 0.0) / m.size();
  double var = 0.0;
  for (double x : m) var += (x - mean) * (x - mean);
  EXPECT_NEAR(r.mrr_mean, mean, 1e-15);
  EXPECT_NEAR(r.mrr_std, std::sqrt(var / (m.size() - 1)), 1e-15);
  EXPECT_GT(r.mrr_std, 0.0);
  // Thread count does not change the result.
  const auto r4 = evaluate_with(noisy, qs, default_seeds(), 4);
  EXPECT_EQ(r4.mrr_mean, r.mrr_mean);
  EXPECT_EQ(r4.mrr_std, r.mrr_std);
}

TEST(EvaluateWith, ScorerErrorsPropagate) {
  const auto qs = query_set(5, 3);
  Scorer bad = [](const Triple&, std::uint64_t, std::size_t,
                  std::string*) -> std::optional<std::vector<double>> {
    fail(ErrorKind::kNumeric, "boom");
  };
  EXPECT_THROW(evaluate_with(bad, qs, {0}, 2), Error);
  EXPECT_THROW(evaluate_with(bad, qs, {}), Error);
}

TEST(DefaultSeeds, ZeroToFour) {
  EXPECT_EQ(default_seeds(), (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
}

// Two-hop chain data where every relation has several triples.
struct SmallWorld {
  kg::KnowledgeGraph g;
  rel::RelationGraph rg;
  kg::QuerySet queries;
  ModelParams<double> model;

  SmallWorld() : model(init_model<double>(testing::tiny_config(), 5)) {
    std::vector<Triple> ts;
    for (int i = 0; i < 8; ++i) {
      ts.push_back({i, 0, 8 + i});
      ts.push_back({8 + i, 1, (i + 3) % 8});
    }
    const auto base = make_graph(16, 2, ts);
    g = base.augment_inverses();
    rg = rel::build_relation_graph(g);
    queries = kg::build_query_set(g, {{0, 0, 8}, {1, 0, 9}}, {ts});
  }
};

TEST(ContextSweep, GridShapes) {
  SmallWorld w;
  EvalOptions base;
  base.hops = 2;
  base.node_cap = 64;
  const SweepGrid grid{{1, 2, 3, 4}, {2, 4, 6, 8}, {2}};
  const auto rows = context_sweep(w.model, w.g, w.rg, w.queries, grid, base, {0});
  ASSERT_EQ(rows.size(), 16u);
  EXPECT_EQ(rows[0].m_plus, 1u);
  EXPECT_EQ(rows[0].m_minus, 2u);
  EXPECT_EQ(rows[15].m_plus, 4u);
  EXPECT_EQ(rows[15].m_minus, 8u);
  for (const auto& r : rows) {
    EXPECT_GT(r.mrr, 0.0);
    EXPECT_LE(r.mrr, 1.0);
  }

  const auto hop_rows =
      context_sweep(w.model, w.g, w.rg, w.queries, {{2}, {4}, {0, 1, 2, 3}}, base, {0});
  ASSERT_EQ(hop_rows.size(), 4u);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(hop_rows[k].hops, k);

  EXPECT_THROW(context_sweep(w.model, w.g, w.rg, w.queries, {{}, {1}, {1}}, base, {0}), Error);

  const auto dir = scratch("sweep");
  write_sweep_csv(dir / "sweep.csv", rows);
  std::ifstream in(dir / "sweep.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "m_plus,m_minus,hops,mrr,hits10");
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 16u);

  write_sweep_json(dir / "sweep.json", hop_rows);
  std::ifstream jin(dir / "sweep.json");
  const auto j = nlohmann::json::parse(jin);
  ASSERT_EQ(j.size(), 4u);
  EXPECT_EQ(j[3]["hops"], 3);
}

TEST(Evaluate, ThreadsAndCachingDoNotChangeMetrics) {
  SmallWorld w;
  EvalOptions o;
  o.m_plus = 3;
  o.m_minus = 5;
  o.hops = 2;
  o.node_cap = 64;
  const auto a = evaluate(w.model, w.g, w.rg, w.queries, o, default_seeds(3));
  o.threads = 3;
  const auto b = evaluate(w.model, w.g, w.rg, w.queries, o, default_seeds(3));
  EXPECT_EQ(a.queries, 4u);  // two triples and their inverses
  EXPECT_EQ(a.mrr_mean, b.mrr_mean);
  EXPECT_EQ(a.hits10, b.hits10);
  o.max_queries = 1;
  EXPECT_EQ(evaluate(w.model, w.g, w.rg, w.queries, o, {0}).queries, 1u);
}

TEST(Metrics, JsonKeys) {
  const auto qs = query_set(10, 4);
  Scorer perfect = [](const Triple& q, std::uint64_t, std::size_t, std::string*) {
    std::vector<double> s(10, 0.0);
    s[q.tail] = 1.0;
    return std::optional<std::vector<double>>(s);
  };
  const auto r = evaluate_with(perfect, qs, {0, 1});
  const auto path = scratch("metrics") / "metrics.json";
  write_metrics_json(path, "toy", "inductive", r);
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  for (const char* key : {"dataset", "setting", "mrr_mean", "mrr_std", "hits1", "hits3", "hits10",
                          "skipped", "seeds", "per_seed"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["dataset"], "toy");
  EXPECT_EQ(j["per_seed"].size(), 2u);
  EXPECT_DOUBLE_EQ(j["mrr_mean"].get<double>(), 1.0);
}

TEST(ExportAttention, ShapeRowsAndLabels) {
  SmallWorld w;
  EvalOptions o;
  o.hops = 2;
  o.node_cap = 64;
  const auto context = ctx::sample_global_context(w.g, 0, 3, 4, std::nullopt, 1);
  std::vector<kg::EntityId> cands(10);
  std::iota(cands.begin(), cands.end(), 0);
  const auto path = scratch("attn") / "attention.csv";
  const auto ex = export_attention(w.model, w.g, w.rg, 0, 0, cands, context, o, path);
  ASSERT_EQ(ex.attention.rows(), 10u);
  ASSERT_EQ(ex.attention.cols(), context.size());
  for (std::size_t i = 0; i < 10; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < context.size(); ++j) {
      EXPECT_GE(ex.attention(i, j), 0.0);
      sum += ex.attention(i, j);
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
  EXPECT_EQ(ex.scores.size(), 10u);
  EXPECT_EQ(ex.row_labels[3], "e3");
  EXPECT_EQ(ex.column_labels.size(), context.size());
  EXPECT_TRUE(std::filesystem::exists(path));

  ctx::ContextSet one = context;
  one.entries.resize(1);
  const auto single = export_attention(w.model, w.g, w.rg, 0, 0, cands, one, o);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(single.attention(i, 0), 1.0, 1e-12);
}

}  // namespace
}  // namespace kgpfn::eval
