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

#include "kgpfn/diffcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kgpfn::ad {
namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
              shape_string(b.shape()));
}

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& x) {
  return Tensor<T>::matrix(x.rows(), x.cols());
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor<T> out = Tensor<T>::matrix(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape(av, bv, "sub");
  Tensor<T> out = Tensor<T>::matrix(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) {
      auto& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor<T> out = Tensor<T>::matrix(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  const auto& av = a.value();
  Tensor<T> out = Tensor<T>::matrix(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, factor](Tape<T>& t, const Tensor<T>& g) {
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> add_row(Var<T> a, Var<T> row) {
  const auto& av = a.value();
  const auto& rv = row.value();
  require(rv.size() == av.cols(), "add_row: row length " + std::to_string(rv.size()) +
                                      " != cols " + std::to_string(av.cols()));
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor<T> out = Tensor<T>::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = av(r, c) + rv[c];
  const auto ia = a.id(), ir = row.id();
  return a.tape()->record(std::move(out), {a, row},
                          [ia, ir, rows, cols](Tape<T>& t, const Tensor<T>& g) {
                            t.accumulate(ia, g);
                            if (t.requires_grad(ir)) {
                              auto& gr = t.grad_buffer(ir);
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t c = 0; c < cols; ++c) gr[c] += g(r, c);
                            }
                          });
}

template <typename T>
Var<T> mul_row(Var<T> a, Var<T> row) {
  const auto& av = a.value();
  const auto& rv = row.value();
  require(rv.size() == av.cols(), "mul_row: row length mismatch");
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor<T> out = Tensor<T>::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = av(r, c) * rv[c];
  const auto ia = a.id(), ir = row.id();
  return a.tape()->record(
      std::move(out), {a, row}, [ia, ir, rows, cols](Tape<T>& t, const Tensor<T>& g) {
        const auto& av = t.value(ia);
        const auto& rv = t.value(ir);
        if (t.requires_grad(ia)) {
          auto& ga = t.grad_buffer(ia);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) ga(r, c) += g(r, c) * rv[c];
        }
        if (t.requires_grad(ir)) {
          auto& gr = t.grad_buffer(ir);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gr[c] += g(r, c) * av(r, c);
        }
      });
}

template <typename T>
Var<T> mul_col(Var<T> a, Var<T> col) {
  const auto& av = a.value();
  const auto& cv = col.value();
  require(cv.size() == av.rows(), "mul_col: column length mismatch");
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor<T> out = Tensor<T>::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = av(r, c) * cv[r];
  const auto ia = a.id(), ic = col.id();
  return a.tape()->record(
      std::move(out), {a, col}, [ia, ic, rows, cols](Tape<T>& t, const Tensor<T>& g) {
        const auto& av = t.value(ia);
        const auto& cv = t.value(ic);
        if (t.requires_grad(ia)) {
          auto& ga = t.grad_buffer(ia);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) ga(r, c) += g(r, c) * cv[r];
        }
        if (t.requires_grad(ic)) {
          auto& gc = t.grad_buffer(ic);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gc[r] += g(r, c) * av(r, c);
        }
      });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  require(bv.rows() == k, "matmul: inner extents " + shape_string(av.shape()) + " x " +
                              shape_string(bv.shape()));
  Tensor<T> out = Tensor<T>::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    T* o = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const T x = av(i, p);
      if (x == T(0)) continue;
      const T* brow = &bv(p, 0);
      for (std::size_t j = 0; j < m; ++j) o[j] += x * brow[j];
    }
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(
      std::move(out), {a, b}, [ia, ib, n, k, m](Tape<T>& t, const Tensor<T>& g) {
        const auto& av = t.value(ia);
        const auto& bv = t.value(ib);
        if (t.requires_grad(ia)) {
          auto& ga = t.grad_buffer(ia);
          for (std::size_t i = 0; i < n; ++i) {
            const T* gi = &g(i, 0);
            for (std::size_t p = 0; p < k; ++p) {
              const T* brow = &bv(p, 0);
              T acc = 0;
              for (std::size_t j = 0; j < m; ++j) acc += gi[j] * brow[j];
              ga(i, p) += acc;
            }
          }
        }
        if (t.requires_grad(ib)) {
          auto& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < n; ++i) {
            const T* gi = &g(i, 0);
            for (std::size_t p = 0; p < k; ++p) {
              const T x = av(i, p);
              if (x == T(0)) continue;
              T* gbrow = &gb(p, 0);
              for (std::size_t j = 0; j < m; ++j) gbrow[j] += x * gi[j];
            }
          }
        }
      });
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t n = av.rows(), k = av.cols(), m = bv.rows();
  require(bv.cols() == k, "matmul_nt: inner extents mismatch");
  Tensor<T> out = Tensor<T>::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += av(i, p) * bv(j, p);
      out(i, j) = acc;
    }
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(
      std::move(out), {a, b}, [ia, ib, n, k, m](Tape<T>& t, const Tensor<T>& g) {
        const auto& av = t.value(ia);
        const auto& bv = t.value(ib);
        const bool need_a = t.requires_grad(ia), need_b = t.requires_grad(ib);
        Tensor<T>* ga = need_a ? &t.grad_buffer(ia) : nullptr;
        Tensor<T>* gb = need_b ? &t.grad_buffer(ib) : nullptr;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const T gij = g(i, j);
            if (gij == T(0)) continue;
            if (ga)
              for (std::size_t p = 0; p < k; ++p) (*ga)(i, p) += gij * bv(j, p);
            if (gb)
              for (std::size_t p = 0; p < k; ++p) (*gb)(j, p) += gij * av(i, p);
          }
      });
}

template <typename T>
Var<T> relu(Var<T> a) {
  const auto& av = a.value();
  Tensor<T> out = Tensor<T>::matrix(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape<T>& t, const Tensor<T>& g) {
    const auto& av = t.value(ia);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > T(0)) ga[i] += g[i];
  });
}

template <typename T>
Var<T> log_sigmoid(Var<T> a) {
  const auto& av = a.value();
  Tensor<T> out = Tensor<T>::matrix(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = av[i];
    out[i] = x < T(0) ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
  }
  const auto ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape<T>& t, const Tensor<T>& g) {
    const auto& av = t.value(ia);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      // d/dx log sigmoid(x) = sigmoid(-x)
      const T x = av[i];
      const T s = x >= T(0) ? std::exp(-x) / (T(1) + std::exp(-x)) : T(1) / (T(1) + std::exp(x));
      ga[i] += g[i] * s;
    }
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, double eps) {
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  require(gain.value().size() == cols && bias.value().size() == cols,
          "layer_norm: gain/bias length mismatch");
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  Tensor<T> out = Tensor<T>::matrix(rows, cols);
  // Normalized values and inverse deviations, kept for the backward pass.
  Tensor<T> xhat = Tensor<T>::matrix(rows, cols);
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += xv(r, c);
    mean /= T(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const T d = xv(r, c) - mean;
      var += d * d;
    }
    var /= T(cols);
    inv_std[r] = T(1) / std::sqrt(var + T(eps));
    for (std::size_t c = 0; c < cols; ++c) {
      xhat(r, c) = (xv(r, c) - mean) * inv_std[r];
      out(r, c) = xhat(r, c) * gv[c] + bv[c];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape()->record(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape<T>& t, const Tensor<T>& g) {
        const auto& gv = t.value(ig);
        if (t.requires_grad(ig)) {
          auto& gg = t.grad_buffer(ig);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gg[c] += g(r, c) * xhat(r, c);
        }
        if (t.requires_grad(ib)) {
          auto& gb = t.grad_buffer(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += g(r, c);
        }
        if (t.requires_grad(ix)) {
          auto& gx = t.grad_buffer(ix);
          std::vector<T> dxhat(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_d = 0, mean_dx = 0;
            for (std::size_t c = 0; c < cols; ++c) {
              dxhat[c] = g(r, c) * gv[c];
              mean_d += dxhat[c];
              mean_dx += dxhat[c] * xhat(r, c);
            }
            mean_d /= T(cols);
            mean_dx /= T(cols);
            for (std::size_t c = 0; c < cols; ++c)
              gx(r, c) += inv_std[r] * (dxhat[c] - mean_d - xhat(r, c) * mean_dx);
          }
        }
      });
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor<T> out = Tensor<T>::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, xv(r, c));
    T sum = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      out(r, c) = std::exp(xv(r, c) - mx);
      sum += out(r, c);
    }
    for (std::size_t c = 0; c < cols; ++c) out(r, c) /= sum;
  }
  const auto ix = x.id();
  Tensor<T> y = out;
  return x.tape()->record(std::move(out), {x},
                          [ix, rows, cols, y = std::move(y)](Tape<T>& t, const Tensor<T>& g) {
                            auto& gx = t.grad_buffer(ix);
                            for (std::size_t r = 0; r < rows; ++r) {
                              T dot = 0;
                              for (std::size_t c = 0; c < cols; ++c) dot += g(r, c) * y(r, c);
                              for (std::size_t c = 0; c < cols; ++c)
                                gx(r, c) += y(r, c) * (g(r, c) - dot);
                            }
                          });
}

template <typename T>
Var<T> logsumexp_rows(Var<T> x) {
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor<T> out = Tensor<T>::matrix(rows, 1);
  Tensor<T> probs = Tensor<T>::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, xv(r, c));
    T sum = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      probs(r, c) = std::exp(xv(r, c) - mx);
      sum += probs(r, c);
    }
    for (std::size_t c = 0; c < cols; ++c) probs(r, c) /= sum;
    out[r] = mx + std::log(sum);
  }
  const auto ix = x.id();
  return x.tape()->record(std::move(out), {x},
                          [ix, rows, cols, probs = std::move(probs)](Tape<T>& t,
                                                                     const Tensor<T>& g) {
                            auto& gx = t.grad_buffer(ix);
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < cols; ++c)
                                gx(r, c) += g[r] * probs(r, c);
                          });
}

template <typename T>
Var<T> gather_rows(Var<T> x, const Index& index) {
  const auto& xv = x.value();
  const std::size_t cols = xv.cols();
  Tensor<T> out = Tensor<T>::matrix(index.size(), cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && static_cast<std::size_t>(index[i]) < xv.rows(),
            "gather_rows: index out of range");
    std::copy_n(&xv(index[i], 0), cols, &out(i, 0));
  }
  const auto ix = x.id();
  return x.tape()->record(std::move(out), {x},
                          [ix, index, cols](Tape<T>& t, const Tensor<T>& g) {
                            auto& gx = t.grad_buffer(ix);
                            for (std::size_t i = 0; i < index.size(); ++i) {
                              T* dst = &gx(index[i], 0);
                              const T* src = &g(i, 0);
                              for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                            }
                          });
}

template <typename T>
Var<T> scatter_add_rows(Var<T> x, const Index& index, std::size_t out_rows) {
  const auto& xv = x.value();
  require(index.size() == xv.rows(), "scatter_add_rows: one index per source row");
  const std::size_t cols = xv.cols();
  Tensor<T> out = Tensor<T>::matrix(out_rows, cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && static_cast<std::size_t>(index[i]) < out_rows,
            "scatter_add_rows: index out of range");
    T* dst = &out(index[i], 0);
    const T* src = &xv(i, 0);
    for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
  }
  const auto ix = x.id();
  return x.tape()->record(std::move(out), {x},
                          [ix, index, cols](Tape<T>& t, const Tensor<T>& g) {
                            auto& gx = t.grad_buffer(ix);
                            for (std::size_t i = 0; i < index.size(); ++i) {
                              const T* src = &g(index[i], 0);
                              T* dst = &gx(i, 0);
                              for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                            }
                          });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols: row count mismatch");
    offsets.push_back(total);
    total += p.cols();
  }
  Tensor<T> out = Tensor<T>::matrix(rows, total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(&pv(r, 0), pv.cols(), &out(r, offsets[k]));
  }
  std::vector<std::int32_t> ids;
  for (const auto& p : parts) ids.push_back(p.id());
  return parts[0].tape()->record(
      std::move(out), parts, [ids, offsets, rows](Tape<T>& t, const Tensor<T>& g) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          auto& gp = t.grad_buffer(ids[k]);
          const std::size_t cols = gp.cols();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gp(r, c) += g(r, offsets[k] + c);
        }
      });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows: column count mismatch");
    offsets.push_back(total);
    total += p.rows();
  }
  Tensor<T> out = Tensor<T>::matrix(total, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value();
    std::copy(pv.storage().begin(), pv.storage().end(), &out(offsets[k], 0));
  }
  std::vector<std::int32_t> ids;
  for (const auto& p : parts) ids.push_back(p.id());
  return parts[0].tape()->record(
      std::move(out), parts, [ids, offsets, cols](Tape<T>& t, const Tensor<T>& g) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          auto& gp = t.grad_buffer(ids[k]);
          const T* src = &g(offsets[k], 0);
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += src[i];
        }
      });
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end) {
  const auto& xv = x.value();
  require(begin <= end && end <= xv.cols(), "slice_cols: range out of bounds");
  const std::size_t rows = xv.rows(), width = end - begin;
  Tensor<T> out = Tensor<T>::matrix(rows, width);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(&xv(r, begin), width, &out(r, 0));
  const auto ix = x.id();
  return x.tape()->record(std::move(out), {x},
                          [ix, begin, width, rows](Tape<T>& t, const Tensor<T>& g) {
                            auto& gx = t.grad_buffer(ix);
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < width; ++c)
                                gx(r, begin + c) += g(r, c);
                          });
}

template <typename T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end) {
  const auto& xv = x.value();
  require(begin <= end && end <= xv.rows(), "slice_rows: range out of bounds");
  const std::size_t cols = xv.cols();
  Tensor<T> out = Tensor<T>::matrix(end - begin, cols);
  std::copy(&xv(begin, 0), &xv(begin, 0) + (end - begin) * cols, out.storage().begin());
  const auto ix = x.id();
  return x.tape()->record(std::move(out), {x},
                          [ix, begin, cols](Tape<T>& t, const Tensor<T>& g) {
                            auto& gx = t.grad_buffer(ix);
                            T* dst = &gx(begin, 0);
                            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                          });
}

template <typename T>
Var<T> sum_all(Var<T> x) {
  const auto& xv = x.value();
  T total = 0;
  for (T v : xv.storage()) total += v;
  const auto ix = x.id();
  return x.tape()->record(Tensor<T>::scalar(total), {x},
                          [ix](Tape<T>& t, const Tensor<T>& g) {
                            auto& gx = t.grad_buffer(ix);
                            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
                          });
}

template <typename T>
Var<T> mean_rows(Var<T> x) {
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  require(rows > 0, "mean_rows: empty input");
  Tensor<T> out = Tensor<T>::matrix(1, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += xv(r, c);
  for (std::size_t c = 0; c < cols; ++c) out[c] /= T(rows);
  const auto ix = x.id();
  return x.tape()->record(std::move(out), {x},
                          [ix, rows, cols](Tape<T>& t, const Tensor<T>& g) {
                            auto& gx = t.grad_buffer(ix);
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < cols; ++c)
                                gx(r, c) += g[c] / T(rows);
                          });
}

template <typename T>
Var<T> sum_cols(Var<T> x) {
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor<T> out = Tensor<T>::matrix(rows, 1);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r] += xv(r, c);
  const auto ix = x.id();
  return x.tape()->record(std::move(out), {x},
                          [ix, rows, cols](Tape<T>& t, const Tensor<T>& g) {
                            auto& gx = t.grad_buffer(ix);
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < cols; ++c) gx(r, c) += g[r];
                          });
}

template <typename T>
Var<T> cosine_rows(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape(av, bv, "cosine_rows");
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor<T> out = Tensor<T>::matrix(rows, 1);
  std::vector<T> na(rows), nb(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T dot = 0, sa = 0, sb = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      dot += av(r, c) * bv(r, c);
      sa += av(r, c) * av(r, c);
      sb += bv(r, c) * bv(r, c);
    }
    na[r] = std::sqrt(sa);
    nb[r] = std::sqrt(sb);
    if (na[r] < T(kCosineMinNorm) || nb[r] < T(kCosineMinNorm)) continue;
    out[r] = std::clamp(dot / (na[r] * nb[r]), T(-1), T(1));
  }
  const auto ia = a.id(), ib = b.id();
  Tensor<T> cos = out;
  return a.tape()->record(
      std::move(out), {a, b},
      [ia, ib, rows, cols, na = std::move(na), nb = std::move(nb), cos = std::move(cos)](
          Tape<T>& t, const Tensor<T>& g) {
        const auto& av = t.value(ia);
        const auto& bv = t.value(ib);
        for (std::size_t r = 0; r < rows; ++r) {
          if (na[r] < T(kCosineMinNorm) || nb[r] < T(kCosineMinNorm)) continue;
          const T inv = T(1) / (na[r] * nb[r]);
          if (t.requires_grad(ia)) {
            auto& ga = t.grad_buffer(ia);
            for (std::size_t c = 0; c < cols; ++c)
              ga(r, c) += g[r] * (bv(r, c) * inv - cos[r] * av(r, c) / (na[r] * na[r]));
          }
          if (t.requires_grad(ib)) {
            auto& gb = t.grad_buffer(ib);
            for (std::size_t c = 0; c < cols; ++c)
              gb(r, c) += g[r] * (av(r, c) * inv - cos[r] * bv(r, c) / (nb[r] * nb[r]));
          }
        }
      });
}

namespace {
thread_local StopGradientFreeze* active_freeze = nullptr;
}  // namespace

StopGradientFreeze::StopGradientFreeze() : previous_(active_freeze) { active_freeze = this; }
StopGradientFreeze::~StopGradientFreeze() { active_freeze = previous_; }

void StopGradientFreeze::replay() {
  replaying_ = true;
  cursor_ = 0;
}

template <typename T>
Var<T> stop_gradient(Var<T> x) {
  if constexpr (std::is_same_v<T, double>) {
    if (StopGradientFreeze* f = active_freeze) {
      if (!f->replaying_) {
        f->values_.push_back(x.value());
      } else {
        require(f->cursor_ < f->values_.size() &&
                    f->values_[f->cursor_].shape() == x.value().shape(),
                "stop_gradient replay does not match the recorded pass");
        return x.tape()->constant(f->values_[f->cursor_++]);
      }
    }
  }
  return x.tape()->constant(x.value());
}

template <typename T>
Var<T> transpose(Var<T> x) {
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor<T> out = Tensor<T>::matrix(cols, rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(c, r) = xv(r, c);
  const auto ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix, rows, cols](Tape<T>& t, const Tensor<T>& g) {
    auto& gx = t.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) gx(r, c) += g(c, r);
  });
}

namespace {

template <typename T>
void rotate_pairs(T* x, std::size_t width, std::int64_t position, double base, bool inverse) {
  for (std::size_t i = 0; i + 1 < width; i += 2) {
    const double freq = std::pow(base, -static_cast<double>(i) / static_cast<double>(width));
    const double angle = static_cast<double>(position) * freq;
    const T c = static_cast<T>(std::cos(angle));
    const T s = static_cast<T>(inverse ? -std::sin(angle) : std::sin(angle));
    const T x0 = x[i], x1 = x[i + 1];
    x[i] = x0 * c - x1 * s;
    x[i + 1] = x0 * s + x1 * c;
  }
}

}  // namespace

template <typename T>
Tensor<T> rope_apply(const Tensor<T>& x, std::int64_t position, double base) {
  require(x.cols() % 2 == 0, "rope_apply: last extent must be even, got " +
                                 std::to_string(x.cols()));
  require(position >= 0, "rope_apply: negative position");
  Tensor<T> out = x;
  for (std::size_t r = 0; r < out.rows(); ++r)
    rotate_pairs(&out(r, 0), out.cols(), position, base, false);
  return out;
}

template <typename T>
Var<T> rope(Var<T> x, const std::vector<std::int64_t>& positions, std::size_t heads,
            double base) {
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  require(heads > 0 && cols % heads == 0, "rope: width not divisible by heads");
  const std::size_t width = cols / heads;
  require(width % 2 == 0, "rope: head dimension must be even");
  require(positions.size() == rows, "rope: one position per row");
  Tensor<T> out = xv;
  for (std::size_t r = 0; r < rows; ++r) {
    require(positions[r] >= 0, "rope: negative position");
    for (std::size_t h = 0; h < heads; ++h)
      rotate_pairs(&out(r, h * width), width, positions[r], base, false);
  }
  const auto ix = x.id();
  return x.tape()->record(
      std::move(out), {x},
      [ix, positions, heads, width, rows, base](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T> back = g;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t h = 0; h < heads; ++h)
            rotate_pairs(&back(r, h * width), width, positions[r], base, true);
        t.accumulate(ix, back);
      });
}

template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, AttentionShape shape,
                 Tensor<T>* probabilities) {
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  const std::size_t heads = shape.heads, groups = shape.groups;
  require(heads > 0 && groups > 0, "attention: heads and groups must be positive");
  require(qv.cols() == kv.cols(), "attention: query/key width mismatch");
  require(kv.rows() == vv.rows(), "attention: key/value row mismatch");
  require(qv.rows() % groups == 0 && kv.rows() % groups == 0,
          "attention: rows not divisible by groups");
  require(qv.cols() % heads == 0 && vv.cols() % heads == 0,
          "attention: width not divisible by heads");
  const std::size_t nq = qv.rows() / groups, nk = kv.rows() / groups;
  require(nk > 0, "attention: empty key set");
  const std::size_t dh = qv.cols() / heads, dv = vv.cols() / heads;
  const T scl = T(1) / std::sqrt(T(dh));

  Tensor<T> probs({groups, heads, nq, nk});
  Tensor<T> out = Tensor<T>::matrix(qv.rows(), vv.cols());
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < nq; ++i) {
        T* p = &probs[((g * heads + h) * nq + i) * nk];
        const T* qi = &qv(g * nq + i, h * dh);
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < nk; ++j) {
          const T* kj = &kv(g * nk + j, h * dh);
          T acc = 0;
          for (std::size_t c = 0; c < dh; ++c) acc += qi[c] * kj[c];
          p[j] = acc * scl;
          mx = std::max(mx, p[j]);
        }
        T sum = 0;
        for (std::size_t j = 0; j < nk; ++j) {
          p[j] = std::exp(p[j] - mx);
          sum += p[j];
        }
        for (std::size_t j = 0; j < nk; ++j) p[j] /= sum;
        T* oi = &out(g * nq + i, h * dv);
        for (std::size_t j = 0; j < nk; ++j) {
          const T* vj = &vv(g * nk + j, h * dv);
          for (std::size_t c = 0; c < dv; ++c) oi[c] += p[j] * vj[c];
        }
      }
  if (probabilities) *probabilities = probs;
  const auto iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape()->record(
      std::move(out), {q, k, v},
      [iq, ik, iv, heads, groups, nq, nk, dh, dv, scl, probs = std::move(probs)](
          Tape<T>& t, const Tensor<T>& gout) {
        const auto& qv = t.value(iq);
        const auto& kv = t.value(ik);
        const auto& vv = t.value(iv);
        Tensor<T>* gq = t.requires_grad(iq) ? &t.grad_buffer(iq) : nullptr;
        Tensor<T>* gk = t.requires_grad(ik) ? &t.grad_buffer(ik) : nullptr;
        Tensor<T>* gv = t.requires_grad(iv) ? &t.grad_buffer(iv) : nullptr;
        std::vector<T> dp(nk);
        for (std::size_t g = 0; g < groups; ++g)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < nq; ++i) {
              const T* p = &probs[((g * heads + h) * nq + i) * nk];
              const T* go = &gout(g * nq + i, h * dv);
              T dot = 0;
              for (std::size_t j = 0; j < nk; ++j) {
                const T* vj = &vv(g * nk + j, h * dv);
                T acc = 0;
                for (std::size_t c = 0; c < dv; ++c) acc += go[c] * vj[c];
                dp[j] = acc;
                dot += acc * p[j];
                if (gv) {
                  T* gvj = &(*gv)(g * nk + j, h * dv);
                  for (std::size_t c = 0; c < dv; ++c) gvj[c] += p[j] * go[c];
                }
              }
              const T* qi = &qv(g * nq + i, h * dh);
              for (std::size_t j = 0; j < nk; ++j) {
                const T ds = p[j] * (dp[j] - dot) * scl;
                if (ds == T(0)) continue;
                const T* kj = &kv(g * nk + j, h * dh);
                if (gq) {
                  T* gqi = &(*gq)(g * nq + i, h * dh);
                  for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
                }
                if (gk) {
                  T* gkj = &(*gk)(g * nk + j, h * dh);
                  for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
                }
              }
            }
      });
}

template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
  std::vector<T> out(logits.size());
  if (logits.empty()) return out;
  const T mx = *std::max_element(logits.begin(), logits.end());
  T sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& o : out) o /= sum;
  return out;
}

#define KGPFN_INSTANTIATE_OPS(T)                                                       \
  template Var<T> add<T>(Var<T>, Var<T>);                                              \
  template Var<T> sub<T>(Var<T>, Var<T>);                                              \
  template Var<T> mul<T>(Var<T>, Var<T>);                                              \
  template Var<T> scale<T>(Var<T>, T);                                                 \
  template Var<T> add_row<T>(Var<T>, Var<T>);                                          \
  template Var<T> mul_row<T>(Var<T>, Var<T>);                                          \
  template Var<T> mul_col<T>(Var<T>, Var<T>);                                          \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                           \
  template Var<T> matmul_nt<T>(Var<T>, Var<T>);                                        \
  template Var<T> relu<T>(Var<T>);                                                     \
  template Var<T> log_sigmoid<T>(Var<T>);                                              \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, double);                       \
  template Var<T> softmax_rows<T>(Var<T>);                                             \
  template Var<T> logsumexp_rows<T>(Var<T>);                                           \
  template Var<T> gather_rows<T>(Var<T>, const Index&);                                \
  template Var<T> scatter_add_rows<T>(Var<T>, const Index&, std::size_t);              \
  template Var<T> concat_cols<T>(const std::vector<Var<T>>&);                          \
  template Var<T> concat_rows<T>(const std::vector<Var<T>>&);                          \
  template Var<T> slice_cols<T>(Var<T>, std::size_t, std::size_t);                     \
  template Var<T> slice_rows<T>(Var<T>, std::size_t, std::size_t);                     \
  template Var<T> sum_all<T>(Var<T>);                                                  \
  template Var<T> mean_rows<T>(Var<T>);                                                \
  template Var<T> sum_cols<T>(Var<T>);                                                 \
  template Var<T> cosine_rows<T>(Var<T>, Var<T>);                                      \
  template Var<T> stop_gradient<T>(Var<T>);                                            \
  template Var<T> transpose<T>(Var<T>);                                                \
  template Var<T> rope<T>(Var<T>, const std::vector<std::int64_t>&, std::size_t, double); \
  template Tensor<T> rope_apply<T>(const Tensor<T>&, std::int64_t, double);            \
  template Var<T> attention<T>(Var<T>, Var<T>, Var<T>, AttentionShape, Tensor<T>*);    \
  template std::vector<T> softmax<T>(const std::vector<T>&);

KGPFN_INSTANTIATE_OPS(float)
KGPFN_INSTANTIATE_OPS(double)

}  // namespace kgpfn::ad
