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
#include <vector>

#include "kgpfn/diffcore/tape.hpp"

// Differentiable primitives. Every operation works on row-major matrices;
// a [c] or [1, c] tensor acts as a row vector where broadcasting is noted.
namespace kgpfn::ad {

using Index = std::vector<std::int32_t>;

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kCosineMinNorm = 1e-12;

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T factor);

// a [r, c] plus a broadcast row [1, c].
template <typename T> Var<T> add_row(Var<T> a, Var<T> row);
// a [r, c] times a broadcast row [1, c].
template <typename T> Var<T> mul_row(Var<T> a, Var<T> row);
// a [r, c] times a broadcast column [r, 1].
template <typename T> Var<T> mul_col(Var<T> a, Var<T> col);

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
// a [n, k] times b [m, k] transposed.
template <typename T> Var<T> matmul_nt(Var<T> a, Var<T> b);

template <typename T> Var<T> relu(Var<T> a);
template <typename T> Var<T> log_sigmoid(Var<T> a);

// Per-row normalization with learned gain and bias rows of length c.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, double eps = kLayerNormEps);

template <typename T> Var<T> softmax_rows(Var<T> x);
// [r, c] -> [r, 1]
template <typename T> Var<T> logsumexp_rows(Var<T> x);

template <typename T> Var<T> gather_rows(Var<T> x, const Index& index);
template <typename T>
Var<T> scatter_add_rows(Var<T> x, const Index& index, std::size_t out_rows);

template <typename T> Var<T> concat_cols(const std::vector<Var<T>>& parts);
template <typename T> Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <typename T> Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end);
template <typename T> Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end);

template <typename T> Var<T> sum_all(Var<T> x);
// Column-wise mean over rows: [r, c] -> [1, c].
template <typename T> Var<T> mean_rows(Var<T> x);
// Row sums: [r, c] -> [r, 1].
template <typename T> Var<T> sum_cols(Var<T> x);

// Row-wise cosine similarity [r, c] x [r, c] -> [r, 1]; zero (with zero
// gradient) when either row has norm below kCosineMinNorm.
template <typename T> Var<T> cosine_rows(Var<T> a, Var<T> b);

template <typename T> Var<T> stop_gradient(Var<T> x);

// While alive on the current thread, double-precision stop_gradient outputs are
// recorded in call order; after replay() they are returned from the recording
// instead of being recomputed. Finite differences then see stopped values as
// constants, matching the analytic gradient.
class StopGradientFreeze {
 public:
  StopGradientFreeze();
  ~StopGradientFreeze();
  StopGradientFreeze(const StopGradientFreeze&) = delete;
  StopGradientFreeze& operator=(const StopGradientFreeze&) = delete;

  void replay();
  std::size_t recorded() const { return values_.size(); }

 private:
  template <typename T> friend Var<T> stop_gradient(Var<T>);
  StopGradientFreeze* previous_;
  bool replaying_ = false;
  std::size_t cursor_ = 0;
  std::vector<Tensor<double>> values_;
};

template <typename T> Var<T> transpose(Var<T> x);

// Rotary embedding. Row i is rotated at positions[i]; the columns are split
// into `heads` equal chunks and each chunk rotated independently.
template <typename T>
Var<T> rope(Var<T> x, const std::vector<std::int64_t>& positions, std::size_t heads,
            double base);

// Value-level rotary rotation of the last extent of x at one position.
template <typename T>
Tensor<T> rope_apply(const Tensor<T>& x, std::int64_t position, double base);

struct AttentionShape {
  std::size_t heads = 1;
  // Rows of q/k/v are split into this many independent blocks; block g of q
  // attends only to block g of k/v.
  std::size_t groups = 1;
};

// Scaled dot-product multi-head attention core (no projections).
// q [groups * nq, D], k [groups * nk, D], v [groups * nk, Dv].
// When `probabilities` is non-null it receives the softmax weights with shape
// [groups, heads, nq, nk].
template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, AttentionShape shape,
                 Tensor<T>* probabilities = nullptr);

template <typename T>
Var<T> affine(Var<T> x, Var<T> weight, Var<T> bias) {
  return add_row(matmul(x, weight), bias);
}

template <typename T> Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T> Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <typename T> Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }

// Numerically stable softmax of a plain vector.
template <typename T> std::vector<T> softmax(const std::vector<T>& logits);

}  // namespace kgpfn::ad
