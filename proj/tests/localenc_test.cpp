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
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "kgpfn/error.hpp"
#include "kgpfn/localenc.hpp"
#include "test_support.hpp"

namespace kgpfn::local {
namespace {

using ad::Tensor;
using Model = ModelParams<double>;
using testing::make_graph;
using testing::random_tensor;

Model fresh_model(std::size_t layers = 2, std::uint64_t seed = 3) {
  ModelConfig c = testing::tiny_config();
  c.nbf_layers = layers;
  return init_model<double>(c, seed);
}

// Per-row layer norm with gain and bias, written out directly.
std::vector<double> layer_norm_row(const std::vector<double>& x, const Tensor<double>& gain,
                                   const Tensor<double>& bias) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = (x[i] - mean) / std::sqrt(var + ad::kLayerNormEps) * gain[i] + bias[i];
  return out;
}

// ReLU([h ; m] W + b) followed by layer norm, for one row.
std::vector<double> update_row(const Model& m, std::size_t layer, const std::vector<double>& h,
                               const std::vector<double>& msg) {
  const auto& p = m.layout.nbf[layer];
  const auto& w = m.params.at(p.weight);
  const auto& b = m.params.at(p.bias);
  const std::size_t d = h.size();
  std::vector<double> pre(d);
  for (std::size_t j = 0; j < d; ++j) {
    double s = b[j];
    for (std::size_t i = 0; i < d; ++i) s += h[i] * w(i, j) + msg[i] * w(d + i, j);
    pre[j] = std::max(0.0, s);
  }
  return layer_norm_row(pre, m.params.at(p.ln_gain), m.params.at(p.ln_bias));
}

std::vector<double> row_of(const Tensor<double>& t, std::size_t r) {
  auto s = t.row(r);
  return {s.begin(), s.end()};
}

kg::Subgraph manual_subgraph(std::vector<kg::EntityId> nodes, std::vector<kg::SubEdge> edges,
                             kg::EntityId anchor) {
  kg::Subgraph s;
  s.anchor = anchor;
  s.hops = 2;
  s.nodes = std::move(nodes);
  s.hop.assign(s.nodes.size(), 0);
  s.in_degree.assign(s.nodes.size(), 0);
  s.out_degree.assign(s.nodes.size(), 0);
  s.edges = std::move(edges);
  return s;
}

TEST(NbfnetEncode, IsolatedAnchorMatchesHandComputedUpdate) {
  Model m = fresh_model(1);
  std::mt19937_64 rng(1);
  const Tensor<double> rel = random_tensor(rng, 4, 4);
  ad::Tape<double> tape;
  ModelBinding<double> b(tape, m);
  const auto sub = manual_subgraph({5}, {}, 5);
  auto enc = nbfnet_encode(b, sub, 5, tape.constant(rel), 2, 1);
  ASSERT_EQ(enc.head_summaries.size(), 1u);
  const auto expect = update_row(m, 0, row_of(rel, 2), std::vector<double>(4, 0.0));
  const Tensor<double> got = enc.head_summaries[0].value();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(got[i], expect[i], 1e-12);
}

TEST(NbfnetEncode, HeadOutsideSubgraphIsRejected) {
  Model m = fresh_model();
  ad::Tape<double> tape;
  ModelBinding<double> b(tape, m);
  const auto sub = manual_subgraph({0, 1}, {{0, 0, 1}}, 0);
  EXPECT_THROW(nbfnet_encode(b, sub, 7, tape.constant(Tensor<double>::matrix(2, 4, 1.0)), 0),
               Error);
}

TEST(NbfnetEncode, UnreachableNodesShareStates) {
  Model m = fresh_model(2);
  std::mt19937_64 rng(2);
  const Tensor<double> rel = random_tensor(rng, 2, 4);
  ad::Tape<double> tape;
  ModelBinding<double> b(tape, m);
  // 0 -> 1 is the only edge; 2 and 3 never receive a message.
  const auto sub = manual_subgraph({0, 1, 2, 3}, {{0, 0, 1}}, 0);
  auto enc = nbfnet_encode(b, sub, 0, tape.constant(rel), 0);
  const Tensor<double> s = enc.states.value();
  EXPECT_EQ(row_of(s, 2), row_of(s, 3));
  const auto canon = unreachable_state(b, 2).value();
  EXPECT_EQ(row_of(s, 2), row_of(canon, 0));
}

TEST(NbfnetEncode, ChainReachesSecondNodeOnlyAtLayerTwo) {
  Model m = fresh_model(2);
  std::mt19937_64 rng(4);
  const Tensor<double> rel = random_tensor(rng, 4, 4);
  auto g = make_graph(3, 2, {{0, 0, 1}, {1, 1, 2}}).augment_inverses();
  const auto sub = kg::khop_subgraph(g, 0, 2);
  const auto b_row = static_cast<std::size_t>(*sub.local_index(2));

  auto run = [&](kg::RelationId q, std::size_t layers) {
    ad::Tape<double> tape;
    ModelBinding<double> mb(tape, m);
    auto enc = nbfnet_encode(mb, sub, 0, tape.constant(rel), q, layers);
    return std::pair{row_of(enc.states.value(), b_row),
                     row_of(unreachable_state(mb, layers).value(), 0)};
  };
  const auto [b1, canon1] = run(0, 1);
  EXPECT_EQ(b1, canon1);
  const auto [b2_q0, canon2] = run(0, 2);
  const auto [b2_q3, unused] = run(3, 2);
  EXPECT_GT(testing::max_abs_diff(Tensor<double>({4}, b2_q0), Tensor<double>({4}, canon2)), 1e-6);
  EXPECT_GT(testing::max_abs_diff(Tensor<double>({4}, b2_q0), Tensor<double>({4}, b2_q3)), 1e-6);
}

TEST(NbfnetEncode, SummariesAreHeadRowsAfterEachLayer) {
  Model m = fresh_model(3);
  std::mt19937_64 rng(5);
  auto g = testing::random_graph(rng, 12, 3, 30).augment_inverses();
  const Tensor<double> rel = random_tensor(rng, 6, 4);
  const auto sub = kg::khop_subgraph(g, 0, 3);
  const auto anchor = static_cast<std::size_t>(sub.anchor_index());
  ad::Tape<double> tape;
  ModelBinding<double> b(tape, m);
  auto full = nbfnet_encode(b, sub, 0, tape.constant(rel), 1, 3);
  for (std::size_t l = 1; l <= 3; ++l) {
    auto partial = nbfnet_encode(b, sub, 0, tape.constant(rel), 1, l);
    EXPECT_EQ(full.head_summaries[l - 1].value(), partial.head_summaries.back().value());
    EXPECT_EQ(row_of(partial.states.value(), anchor), row_of(full.head_summaries[l - 1].value(), 0));
  }
}

TEST(NbfnetEncode, LayerSummaryDependsOnlyOnItsBall) {
  std::mt19937_64 rng(6);
  Model m = fresh_model(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = testing::random_graph(rng, 40, 3, 70).augment_inverses();
    const Tensor<double> rel = random_tensor(rng, 6, 4);
    const kg::EntityId head = static_cast<kg::EntityId>(trial % 40);
    const auto big = kg::khop_subgraph(g, head, 6, 10000);
    ad::Tape<double> tape;
    ModelBinding<double> b(tape, m);
    auto full = nbfnet_encode(b, big, head, tape.constant(rel), 0, 4);
    for (std::size_t l = 1; l <= 4; ++l) {
      const auto ball = kg::khop_subgraph(g, head, static_cast<int>(l), 10000);
      auto trunc = nbfnet_encode(b, ball, head, tape.constant(rel), 0, l);
      EXPECT_EQ(trunc.head_summaries.back().value(), full.head_summaries[l - 1].value())
          << "trial " << trial << " layer " << l;
    }
  }
}

TEST(NbfnetEncode, EntityRelabelingPermutesStates) {
  std::mt19937_64 rng(7);
  Model m = fresh_model(2);
  const std::size_t E = 15;
  auto base = testing::random_graph(rng, E, 2, 30);
  std::vector<kg::EntityId> perm(E);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<kg::Triple> moved;
  for (const auto& t : base.triples()) moved.push_back({perm[t.head], t.relation, perm[t.tail]});
  auto g1 = base.augment_inverses();
  auto g2 = make_graph(E, 2, moved).augment_inverses();
  const Tensor<double> rel = random_tensor(rng, 4, 4);

  const kg::EntityId head = base.triples().front().head;
  const auto s1 = kg::khop_subgraph(g1, head, 2);
  const auto s2 = kg::khop_subgraph(g2, perm[head], 2);
  ASSERT_EQ(s1.size(), s2.size());
  ad::Tape<double> tape;
  ModelBinding<double> b(tape, m);
  auto e1 = nbfnet_encode(b, s1, head, tape.constant(rel), 1);
  auto e2 = nbfnet_encode(b, s2, perm[head], tape.constant(rel), 1);
  EXPECT_LT(testing::max_abs_diff(e1.c_loc().value(), e2.c_loc().value()), 1e-12);
  for (std::size_t i = 0; i < s1.size(); ++i) {
    const auto j = static_cast<std::size_t>(*s2.local_index(perm[s1.nodes[i]]));
    for (std::size_t c = 0; c < 4; ++c)
      EXPECT_NEAR(e1.states.value()(i, c), e2.states.value()(j, c), 1e-12);
  }

  // S_tail of every tail is unchanged by the relabeling.
  std::vector<kg::EntityId> t1(s1.nodes.begin(), s1.nodes.end()), t2;
  for (auto t : t1) t2.push_back(perm[t]);
  auto canon = unreachable_state(b, 2);
  auto z1 = enhanced_tails(b, e1.states, canon, tail_features(s1, t1));
  auto z2 = enhanced_tails(b, e2.states, canon, tail_features(s2, t2));
  auto f1 = interaction_features(e1.head_state(), e1.relation, z1);
  auto f2 = interaction_features(e2.head_state(), e2.relation, z2);
  EXPECT_LT(testing::max_abs_diff(f1.value(), f2.value()), 1e-12);
}

TEST(TailFeatures, ScalarsAndExternalSentinel) {
  auto g = make_graph(4, 1, {{0, 0, 1}, {1, 0, 2}, {2, 0, 1}}).augment_inverses();
  const auto sub = kg::khop_subgraph(g, 0, 2);
  const auto f = tail_features(sub, {1, 3});
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f.row[1], -1);
  EXPECT_DOUBLE_EQ(f.scalars[0], std::log1p(2.0));  // in-degree of 1
  EXPECT_DOUBLE_EQ(f.scalars[1], std::log1p(1.0));
  EXPECT_DOUBLE_EQ(f.scalars[2], 0.5);
  EXPECT_EQ(std::vector<double>(f.scalars.begin() + 3, f.scalars.end()),
            (std::vector<double>{0.0, 0.0, kExternalDistance}));
}

TEST(TailEnhance, ZeroOutputLayerIsIdentity) {
  Model m = fresh_model();
  m.params.at(m.layout.tail_w2).fill(0.0);
  m.params.at(m.layout.tail_b2).fill(0.0);
  std::mt19937_64 rng(8);
  const auto z = random_tensor(rng, 3, 4);
  ad::Tape<double> tape;
  ModelBinding<double> b(tape, m);
  auto out = tail_enhance(b, tape.constant(z), {0.1, 0.2, 0.3, 1, 2, 3, 0, 0, 1});
  EXPECT_EQ(out.value(), z);
}

TEST(TailEnhance, IdenticalInputsGiveIdenticalOutputs) {
  Model m = fresh_model();
  std::mt19937_64 rng(9);
  auto z = random_tensor(rng, 1, 4);
  Tensor<double> two = Tensor<double>::matrix(2, 4);
  for (std::size_t c = 0; c < 4; ++c) two(0, c) = two(1, c) = z(0, c);
  ad::Tape<double> tape;
  ModelBinding<double> b(tape, m);
  auto out = tail_enhance(b, tape.constant(two), {0.5, 0.7, 0.5, 0.5, 0.7, 0.5});
  EXPECT_EQ(row_of(out.value(), 0), row_of(out.value(), 1));
}

TEST(TailEnhance, RejectsWrongScalarCount) {
  Model m = fresh_model();
  ad::Tape<double> tape;
  ModelBinding<double> b(tape, m);
  EXPECT_THROW(tail_enhance(b, tape.constant(Tensor<double>::matrix(2, 4)), {0, 0, 1}), Error);
}

TEST(TailEnhance, ExternalTailMatchesUnreachableNodeWithSentinel) {
  Model m = fresh_model(2);
  std::mt19937_64 rng(10);
  const Tensor<double> rel = random_tensor(rng, 2, 4);
  ad::Tape<double> tape;
  ModelBinding<double> b(tape, m);
  const auto sub = manual_subgraph({0, 1, 2}, {{0, 0, 1}}, 0);
  auto enc = nbfnet_encode(b, sub, 0, tape.constant(rel), 0);
  auto canon = unreachable_state(b, 2);

  TailFeatures external;
  external.row = {-1};
  external.scalars = {0.0, 0.0, kExternalDistance};
  TailFeatures inside;
  inside.row = {2};
  inside.scalars = {0.0, 0.0, kExternalDistance};
  auto a = enhanced_tails(b, enc.states, canon, external);
  auto c = enhanced_tails(b, enc.states, canon, inside);
  EXPECT_EQ(a.value(), c.value());
}

TEST(InteractionFeatures, PerfectTranslation) {
  const std::vector<double> h{0.3, -1.0, 2.0}, r{1.0, 0.5, -0.5};
  std::vector<double> t(3);
  for (int i = 0; i < 3; ++i) t[i] = h[i] + r[i];
  const auto f = interaction_features(h, r, t);
  for (double v : f.transe) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(f.cos, 1.0, 1e-15);
}

TEST(InteractionFeatures, OnesRelationGivesHadamard) {
  const std::vector<double> h{0.3, -1.0, 2.0}, t{4.0, 0.25, -3.0};
  const auto f = interaction_features(h, {1.0, 1.0, 1.0}, t);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(f.distmult[i], h[i] * t[i]);
}

TEST(InteractionFeatures, OrthogonalGivesZeroCosine) {
  const auto f = interaction_features({1.0, 0.0}, {0.0, 1.0}, {1.0, -1.0});
  EXPECT_EQ(f.cos, 0.0);
}

TEST(InteractionFeatures, ZeroNormGivesZeroCosine) {
  EXPECT_EQ(interaction_features({1.0, 2.0}, {-1.0, -2.0}, {3.0, 4.0}).cos, 0.0);
  EXPECT_EQ(interaction_features({1.0, 2.0}, {0.0, 0.0}, {0.0, 0.0}).cos, 0.0);
}

TEST(InteractionFeatures, TailFeatureLayout) {
  const auto f = interaction_features({1.0, 2.0}, {0.5, 0.5}, {1.0, 1.0});
  const auto s = f.s_tail();
  ASSERT_EQ(s.size(), 5u);
  EXPECT_EQ(s[0], 0.5);
  EXPECT_EQ(s[1], 1.5);
  EXPECT_EQ(s[2], 0.5);
  EXPECT_EQ(s[3], 1.0);
  EXPECT_EQ(s[4], f.cos);
}

TEST(InteractionFeatures, DimensionMismatchIsRejected) {
  EXPECT_THROW(interaction_features({1.0, 2.0}, {1.0}, {1.0, 2.0}), Error);
  ad::Tape<double> tape;
  auto a = tape.constant(Tensor<double>::matrix(1, 3));
  auto b = tape.constant(Tensor<double>::matrix(1, 2));
  EXPECT_THROW(interaction_features(a, a, b), Error);
}

TEST(InteractionFeatures, TapeFormMatchesValueForm) {
  std::mt19937_64 rng(11);
  const auto h = random_tensor(rng, 1, 5), r = random_tensor(rng, 1, 5), t = random_tensor(rng, 4, 5);
  ad::Tape<double> tape;
  auto f = interaction_features(tape.constant(h), tape.constant(r), tape.constant(t)).value();
  ASSERT_EQ(f.cols(), 11u);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto want = interaction_features(row_of(h, 0), row_of(r, 0), row_of(t, i)).s_tail();
    for (std::size_t c = 0; c < 11; ++c) EXPECT_NEAR(f(i, c), want[c], 1e-12);
  }
}

TEST(InteractionFeatures, CosineStaysInUnitInterval) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> scale(-12.0, 12.0);
  std::uniform_int_distribution<int> dim(1, 8);
  for (int i = 0; i < 100000; ++i) {
    const std::size_t d = static_cast<std::size_t>(dim(rng));
    const double s = std::pow(10.0, scale(rng));
    std::vector<double> h(d), r(d), t(d);
    for (std::size_t k = 0; k < d; ++k) {
      h[k] = n(rng) * s;
      r[k] = n(rng) * s;
      // Near-parallel tails stress the rounding at the interval ends.
      t[k] = (i % 3 == 0) ? (h[k] + r[k]) * -2.0 : n(rng) * s;
    }
    const double c = interaction_features(h, r, t).cos;
    ASSERT_GE(c, -1.0);
    ASSERT_LE(c, 1.0);
  }
}

}  // namespace
}  // namespace kgpfn::local
