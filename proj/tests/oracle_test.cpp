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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "kgpfn/error.hpp"
#include "kgpfn/oracle.hpp"
#include "test_support.hpp"

namespace kgpfn::oracle {
namespace {

using kg::Triple;
using testing::make_graph;

// Depth-first walk count straight from the triple list.
std::uint64_t walks_by_triples(const std::vector<Triple>& ts, int src, int dst,
                               const RelationSequence& rho, std::size_t step = 0) {
  if (step == rho.size()) return src == dst ? 1 : 0;
  std::uint64_t n = 0;
  for (const auto& t : ts)
    if (t.head == src && t.relation == rho[step]) n += walks_by_triples(ts, t.tail, dst, rho, step + 1);
  return n;
}

TEST(Walks, ChainExample) {
  const auto g = make_graph(3, 2, {{0, 0, 1}, {1, 1, 2}});
  EXPECT_EQ(count_relational_walks(g, 0, 2, {0, 1}), 1u);
  EXPECT_EQ(count_relational_walks(g, 0, 2, {1, 0}), 0u);
  EXPECT_EQ(count_relational_walks(g, 2, 0, {0, 1}), 0u);
  EXPECT_EQ(count_relational_walks(g, 1, 1, {}), 1u);
}

TEST(Walks, MissingEdgeZeroesTheConjunction) {
  // Two parallel paths; removing one edge of a path removes exactly that walk.
  std::vector<Triple> ts = {{0, 0, 1}, {1, 1, 3}, {0, 0, 2}, {2, 1, 3}};
  EXPECT_EQ(count_relational_walks(make_graph(4, 2, ts), 0, 3, {0, 1}), 2u);
  ts.pop_back();
  EXPECT_EQ(count_relational_walks(make_graph(4, 2, ts), 0, 3, {0, 1}), 1u);
  ts.erase(ts.begin() + 1);
  EXPECT_EQ(count_relational_walks(make_graph(4, 2, ts), 0, 3, {0, 1}), 0u);
}

TEST(Walks, AdjacencyProductMatchesEnumeration) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t E = 2 + rng() % 29;  // at most 30 nodes
    const std::size_t R = 1 + rng() % 3;
    const auto g = testing::random_graph(rng, E, R, 3 * E);
    const std::size_t len = 1 + rng() % 4;
    RelationSequence rho(len);
    for (auto& r : rho) r = static_cast<kg::RelationId>(rng() % R);
    const auto prod = adjacency_product(g, rho);
    ASSERT_EQ(prod.size(), E * E);
    for (std::size_t s = 0; s < E; ++s)
      for (std::size_t d = 0; d < E; ++d) {
        const auto want = walks_by_triples(g.triples(), s, d, rho);
        ASSERT_EQ(prod[s * E + d], want) << "trial " << trial;
        ASSERT_EQ(count_relational_walks(g, s, d, rho), want);
      }
  }
}

TEST(Walks, MotifProfileStacksPatterns) {
  const auto g = make_graph(3, 2, {{0, 0, 1}, {1, 1, 2}, {0, 1, 2}});
  const auto p = motif_profile(g, 0, 2, {{0, 1}, {1}, {0}, {1, 0}});
  EXPECT_EQ(p, (std::vector<std::uint64_t>{1, 1, 0, 0}));
}

TEST(LinearOracle, WorkedExample) {
  // phi_q = (1, 2), support mean = (1, 2): 1*1 + 2*2 = 5.
  EXPECT_DOUBLE_EQ(linear_pfn_oracle({1, 2}, {{1, 1}, {1, 3}}, {1, 1}), 5.0);
  EXPECT_DOUBLE_EQ(linear_pfn_oracle({1, 2}, {}, {1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(linear_pfn_oracle({1, 2}, {{1, 1}, {1, 3}}, {2, 0.5}), 2.0 + 2.0);
  EXPECT_THROW(linear_pfn_oracle({1, 2}, {{1}}, {1, 1}), Error);
  EXPECT_THROW(linear_pfn_oracle({1, 2}, {{1, 1}}, {1}), Error);
}

TEST(LinearOracle, ScalesLinearlyInLambda) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> q(5), lam(5);
    std::vector<std::vector<double>> sup(4, std::vector<double>(5));
    for (auto& v : q) v = u(rng);
    for (auto& v : lam) v = u(rng);
    for (auto& row : sup)
      for (auto& v : row) v = u(rng);
    auto lam2 = lam;
    for (auto& v : lam2) v *= 3.0;
    EXPECT_NEAR(linear_pfn_oracle(q, sup, lam2), 3.0 * linear_pfn_oracle(q, sup, lam), 1e-12);
  }
}

TEST(Expressivity, ScalarCase) {
  EXPECT_LE(verify_functional_expressivity(1, 1, 0, 20), kExpressivityTolerance);
}

TEST(Expressivity, ExactConstructionMatchesOracle) {
  for (std::uint64_t seed : {0, 1, 2}) {
    const double dev = verify_functional_expressivity(8, 16, seed, 100);
    EXPECT_LE(dev, kExpressivityTolerance) << "seed " << seed;
  }
  EXPECT_LE(verify_functional_expressivity(3, 1, 7, 50), kExpressivityTolerance);
}

TEST(Expressivity, PerturbedBasisIsCaught) {
  ExpressivityOptions o;
  o.seed = 4;
  const auto report = run_theory_check(o, 0.1);
  EXPECT_EQ(report.exact.instances, 100u);
  EXPECT_LE(report.exact.max_deviation, kExpressivityTolerance);
  EXPECT_GT(report.control.min_deviation, 1e-6);
  EXPECT_LE(report.control.min_deviation, report.control.max_deviation);
}

TEST(Expressivity, ReportJson) {
  ExpressivityOptions o;
  o.instances = 10;
  const auto report = run_theory_check(o, 0.1);
  const auto path = std::filesystem::temp_directory_path() / "kgpfn_oracle_theory.json";
  write_theory_report(path, report);
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["instances"], 10);
  EXPECT_DOUBLE_EQ(j["max_deviation"].get<double>(), report.exact.max_deviation);
  EXPECT_DOUBLE_EQ(j["negative_control_min_deviation"].get<double>(),
                   report.control.min_deviation);
}

}  // namespace
}  // namespace kgpfn::oracle
