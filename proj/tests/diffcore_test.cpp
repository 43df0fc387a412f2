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
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "kgpfn/diffcore/gradcheck.hpp"
#include "kgpfn/diffcore/ops.hpp"
#include "test_support.hpp"

namespace kgpfn::ad {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;
using V = Var<double>;
using T = Tensor<double>;

// Reference attention written directly from the definition.
T naive_attention(const T& q, const T& k, const T& v, std::size_t heads, std::size_t groups) {
  const std::size_t nq = q.rows() / groups, nk = k.rows() / groups;
  const std::size_t dh = q.cols() / heads, dv = v.cols() / heads;
  T out = T::matrix(q.rows(), v.cols());
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < nq; ++i) {
        std::vector<double> logits(nk);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < nk; ++j) {
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += q(g * nq + i, h * dh + c) * k(g * nk + j, h * dh + c);
          logits[j] = s / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, logits[j]);
        }
        double z = 0.0;
        for (auto& l : logits) z += (l = std::exp(l - mx));
        for (std::size_t j = 0; j < nk; ++j)
          for (std::size_t c = 0; c < dv; ++c)
            out(g * nq + i, h * dv + c) += logits[j] / z * v(g * nk + j, h * dv + c);
      }
  return out;
}

TEST(Backward, SquareHasGradientSix) {
  Tape<double> tape;
  V x = tape.leaf(T::scalar(3.0));
  V y = x * x;
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 6.0);
}

TEST(Backward, SumOfSoftmaxHasZeroGradient) {
  std::mt19937_64 rng(1);
  Tape<double> tape;
  V x = tape.leaf(random_tensor(rng, 3, 7, 3.0));
  tape.backward(sum_all(softmax_rows(x)));
  const auto grad = tape.grad(x);
  for (double g : grad.storage()) EXPECT_NEAR(g, 0.0, 1e-14);
}

TEST(Backward, ScatterAddAdjointIsGather) {
  std::mt19937_64 rng(2);
  Tape<double> tape;
  V x = tape.leaf(random_tensor(rng, 5, 3));
  const Index idx{2, 0, 2, 3, 1};
  const T upstream = random_tensor(rng, 4, 3);
  V out = scatter_add_rows(x, idx, 4);
  tape.backward(sum_all(out * tape.constant(upstream)));
  const T g = tape.grad(x);
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(g(r, c), upstream(idx[r], c));
}

TEST(Backward, NonParticipatingLeafGetsZeros) {
  Tape<double> tape;
  V a = tape.leaf(T::matrix(2, 2, 1.0));
  V b = tape.leaf(T::matrix(2, 3, 1.0));
  tape.backward(sum_all(a));
  EXPECT_EQ(tape.grad(b), T::matrix(2, 3));
}

TEST(Backward, NonScalarLossIsRejected) {
  Tape<double> tape;
  V a = tape.leaf(T::matrix(2, 2, 1.0));
  try {
    tape.backward(a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST(Backward, MixingTapesIsRejected) {
  Tape<double> t1, t2;
  V a = t1.leaf(T::scalar(1.0));
  V b = t2.leaf(T::scalar(1.0));
  EXPECT_THROW(add(a, b), Error);
}

TEST(GradCheck, QuadraticFormIsNearlyExact) {
  std::mt19937_64 rng(3);
  const T a = random_tensor(rng, 4, 4);
  const auto r = grad_check(
      [&](V x) {
        V ax = matmul(x, x.tape()->constant(a));
        return sum_all(ax * x);
      },
      random_tensor(rng, 1, 4), 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, SingleAttentionLayer) {
  std::mt19937_64 rng(4);
  const T w = random_tensor(rng, 4, 8);
  std::vector<T> points{random_tensor(rng, 4, 8), random_tensor(rng, 4, 8), random_tensor(rng, 4, 8)};
  const auto r = grad_check(
      [&](Tape<double>& tape, std::span<const V> in) {
        V out = attention(in[0], in[1], in[2], {2, 1});
        return sum_all(out * tape.constant(w));
      },
      points, {1e-5, 0, 0});
  EXPECT_LT(r.max_rel_error, 1e-6) << r.describe();
}

TEST(GradCheck, ReportsNonFiniteObjective) {
  const auto r = grad_check(
      [](V x) {
        T bad = T::scalar(std::numeric_limits<double>::quiet_NaN());
        return add(sum_all(x), x.tape()->constant(bad));
      },
      T::matrix(1, 3, 1.0), 1e-5);
  EXPECT_TRUE(r.nonfinite_index.has_value());
  EXPECT_FALSE(r.ok(1e-4));
}

TEST(GradCheck, StopGradientValuesAreFrozenDuringDifferencing) {
  // d/dx [stop(x) * x] = stop(x); differencing with the frozen value agrees.
  const auto r = grad_check([](V x) { return sum_all(stop_gradient(x) * x); },
                            T({1, 3}, std::vector<double>{0.5, -1.0, 2.0}), 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-9);
}

// Every primitive against central differences at a random point.
struct OpCase {
  const char* name;
  std::function<V(std::span<const V>)> fn;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
};

class OpGradient : public ::testing::TestWithParam<int> {};

std::vector<OpCase> op_cases() {
  return {
      {"matmul", [](auto in) { return matmul(in[0], in[1]); }, {{3, 4}, {4, 2}}},
      {"matmul_nt", [](auto in) { return matmul_nt(in[0], in[1]); }, {{3, 4}, {5, 4}}},
      {"add_row", [](auto in) { return add_row(in[0], in[1]); }, {{3, 4}, {1, 4}}},
      {"mul_row", [](auto in) { return mul_row(in[0], in[1]); }, {{3, 4}, {1, 4}}},
      {"mul_col", [](auto in) { return mul_col(in[0], in[1]); }, {{3, 4}, {3, 1}}},
      {"log_sigmoid", [](auto in) { return log_sigmoid(in[0]); }, {{3, 4}}},
      {"layer_norm", [](auto in) { return layer_norm(in[0], in[1], in[2]); }, {{3, 5}, {1, 5}, {1, 5}}},
      {"softmax_rows", [](auto in) { return softmax_rows(in[0]); }, {{3, 5}}},
      {"logsumexp_rows", [](auto in) { return logsumexp_rows(in[0]); }, {{3, 5}}},
      {"gather_rows", [](auto in) { return gather_rows(in[0], {2, 0, 2}); }, {{3, 4}}},
      {"scatter_add_rows", [](auto in) { return scatter_add_rows(in[0], {1, 1, 0}, 2); }, {{3, 4}}},
      {"concat_cols", [](auto in) { return concat_cols<double>({in[0], in[1]}); }, {{3, 2}, {3, 4}}},
      {"concat_rows", [](auto in) { return concat_rows<double>({in[0], in[1]}); }, {{2, 3}, {4, 3}}},
      {"slice_cols", [](auto in) { return slice_cols(in[0], 1, 3); }, {{3, 4}}},
      {"slice_rows", [](auto in) { return slice_rows(in[0], 1, 3); }, {{4, 3}}},
      {"mean_rows", [](auto in) { return mean_rows(in[0]); }, {{4, 3}}},
      {"sum_cols", [](auto in) { return sum_cols(in[0]); }, {{4, 3}}},
      {"cosine_rows", [](auto in) { return cosine_rows(in[0], in[1]); }, {{4, 3}, {4, 3}}},
      {"transpose", [](auto in) { return transpose(in[0]); }, {{2, 5}}},
      {"rope", [](auto in) { return rope(in[0], {0, 3, 7}, 2, 10000.0); }, {{3, 8}}},
      {"attention_grouped",
       [](auto in) { return attention(in[0], in[1], in[2], {2, 2}); },
       {{4, 4}, {6, 4}, {6, 6}}},
  };
}

TEST_P(OpGradient, MatchesCentralDifferences) {
  const auto cases = op_cases();
  const auto& c = cases[GetParam()];
  std::mt19937_64 rng(100 + GetParam());
  for (int point = 0; point < 5; ++point) {
    std::vector<T> points;
    for (auto [r, cols] : c.shapes) points.push_back(random_tensor(rng, r, cols));
    const auto r = grad_check(
        [&](Tape<double>& tape, std::span<const V> in) {
          V out = c.fn(in);
          std::mt19937_64 wr(7);
          return sum_all(out * tape.constant(random_tensor(wr, out.rows(), out.cols())));
        },
        points, {1e-5, 0, 0});
    EXPECT_LT(r.max_rel_error, 1e-6) << c.name << ": " << r.describe();
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range(0, 21));

TEST(Relu, GradientIsIndicator) {
  Tape<double> tape;
  V x = tape.leaf(T({1, 4}, std::vector<double>{-2.0, -0.5, 0.5, 3.0}));
  tape.backward(sum_all(relu(x)));
  EXPECT_EQ(tape.grad(x).storage(), (std::vector<double>{0, 0, 1, 1}));
}

TEST(Matmul, AgreesWithTripleLoop) {
  std::mt19937_64 rng(5);
  const T a = random_tensor(rng, 3, 7), b = random_tensor(rng, 7, 2);
  Tape<double> tape;
  const T out = matmul(tape.constant(a), tape.constant(b)).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 7; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(out(i, j), s, 1e-13);
    }
}

TEST(LayerNorm, AgreesWithDefinition) {
  std::mt19937_64 rng(6);
  const T x = random_tensor(rng, 2, 6), g = random_tensor(rng, 1, 6), b = random_tensor(rng, 1, 6);
  Tape<double> tape;
  const T out = layer_norm(tape.constant(x), tape.constant(g), tape.constant(b)).value();
  for (std::size_t r = 0; r < 2; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 6; ++c) mean += x(r, c) / 6.0;
    for (std::size_t c = 0; c < 6; ++c) var += (x(r, c) - mean) * (x(r, c) - mean) / 6.0;
    for (std::size_t c = 0; c < 6; ++c)
      EXPECT_NEAR(out(r, c), g(0, c) * (x(r, c) - mean) / std::sqrt(var + 1e-5) + b(0, c), 1e-12);
  }
}

TEST(Attention, AgreesWithNaiveDefinition) {
  std::mt19937_64 rng(7);
  const T q = random_tensor(rng, 6, 8), k = random_tensor(rng, 9, 8), v = random_tensor(rng, 9, 4);
  Tape<double> tape;
  T probs;
  const T out = attention(tape.constant(q), tape.constant(k), tape.constant(v), {2, 3}, &probs).value();
  EXPECT_LT(max_abs_diff(out, naive_attention(q, k, v, 2, 3)), 1e-12);
  EXPECT_EQ(probs.shape(), (Shape{3, 2, 2, 3}));
  for (std::size_t row = 0; row < probs.size() / 3; ++row) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) s += probs[row * 3 + j];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Attention, RowsAreComputedIndependently) {
  std::mt19937_64 rng(8);
  const T q = random_tensor(rng, 5, 4), k = random_tensor(rng, 7, 4), v = random_tensor(rng, 7, 4);
  Tape<double> tape;
  const T all = attention(tape.constant(q), tape.constant(k), tape.constant(v), {2, 1}).value();
  for (std::size_t i = 0; i < 5; ++i) {
    T qi = T::matrix(1, 4);
    for (std::size_t c = 0; c < 4; ++c) qi(0, c) = q(i, c);
    const T one = attention(tape.constant(qi), tape.constant(k), tape.constant(v), {2, 1}).value();
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(one(0, c), all(i, c));
  }
}

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 30.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> logits(1 + trial % 17);
    for (auto& l : logits) l = n(rng);
    const auto p = softmax(logits);
    double s = 0.0;
    for (double v : p) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
    auto shifted = logits;
    for (auto& l : shifted) l += 1234.5;
    const auto q = softmax(shifted);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  const auto p = softmax(std::vector<double>{1000.0, 1000.0, -1000.0});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[2], 0.0);
}

TEST(Rope, PositionZeroIsIdentity) {
  std::mt19937_64 rng(10);
  const T x = random_tensor(rng, 1, 8);
  EXPECT_EQ(rope_apply(x, 0, 10000.0), x);
}

TEST(Rope, PreservesNorm) {
  std::mt19937_64 rng(11);
  const T x = random_tensor(rng, 1, 16);
  auto norm = [](const T& t) {
    double s = 0.0;
    for (double v : t.storage()) s += v * v;
    return std::sqrt(s);
  };
  for (std::int64_t p : {1, 5, 100, 4096}) EXPECT_NEAR(norm(rope_apply(x, p, 10000.0)), norm(x), 1e-12);
}

TEST(Rope, UnitPairRotatesByPosition) {
  const T x({1, 2}, std::vector<double>{1.0, 0.0});
  for (std::int64_t p : {1, 2, 7}) {
    const T y = rope_apply(x, p, 10000.0);
    EXPECT_NEAR(y[0], std::cos(static_cast<double>(p)), 1e-15);
    EXPECT_NEAR(y[1], std::sin(static_cast<double>(p)), 1e-15);
  }
}

TEST(Rope, HigherPairsUseSlowerFrequencies) {
  // Pair i rotates by p * base^(-2i/d).
  const double base = 100.0;
  const T x({1, 4}, std::vector<double>{0.0, 0.0, 1.0, 0.0});
  const T y = rope_apply(x, 3, base);
  const double angle = 3.0 * std::pow(base, -2.0 / 4.0);
  EXPECT_NEAR(y[2], std::cos(angle), 1e-15);
  EXPECT_NEAR(y[3], std::sin(angle), 1e-15);
}

TEST(Rope, OddExtentIsRejected) {
  try {
    rope_apply(T::matrix(1, 5, 1.0), 1, 10000.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST(Tape, ReplayIsBitIdentical) {
  auto run = [] {
    std::mt19937_64 rng(12);
    Tape<double> tape;
    V x = tape.leaf(random_tensor(rng, 4, 6));
    V w = tape.leaf(random_tensor(rng, 6, 6));
    V h = layer_norm(relu(matmul(x, w)), tape.constant(T::matrix(1, 6, 1.0)),
                     tape.constant(T::matrix(1, 6)));
    V loss = sum_all(logsumexp_rows(attention(h, h, h, {2, 1})));
    tape.backward(loss);
    return std::make_pair(loss.value().item(), tape.grad(w));
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(T({2, 3}, std::vector<double>(5)), Error);
}

TEST(Ops, FiniteInputsGiveFiniteOutputs) {
  std::mt19937_64 rng(13);
  Tape<double> tape;
  V x = tape.constant(random_tensor(rng, 5, 6, 50.0));
  for (V y : {softmax_rows(x), logsumexp_rows(x), log_sigmoid(x),
              cosine_rows(x, tape.constant(T::matrix(5, 6)))})
    EXPECT_TRUE(y.value().all_finite());
}

}  // namespace
}  // namespace kgpfn::ad
