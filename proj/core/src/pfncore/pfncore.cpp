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

#include "kgpfn/pfncore.hpp"

#include <fstream>
#include <numeric>
#include <type_traits>

#include "kgpfn/error.hpp"

namespace kgpfn::pfn {
namespace {

struct Positions {
  const std::vector<std::int64_t>* query = nullptr;
  const std::vector<std::int64_t>* key = nullptr;
};

// LN(x_q + MHA(x_q, x_kv)).
template <typename T>
ad::Var<T> attention_block(ModelBinding<T>& model, const AttentionParams& p, ad::Var<T> x_q,
                           ad::Var<T> x_kv, ad::AttentionShape shape, Positions pos,
                           std::type_identity_t<ad::Tensor<T>>* probabilities) {
  ad::Var<T> q = ad::matmul(x_q, model(p.wq));
  ad::Var<T> k = ad::matmul(x_kv, model(p.wk));
  ad::Var<T> v = ad::matmul(x_kv, model(p.wv));
  if (pos.query) {
    const double base = model.config().rope_base;
    q = ad::rope(q, *pos.query, shape.heads, base);
    k = ad::rope(k, *pos.key, shape.heads, base);
  }
  ad::Var<T> a = ad::matmul(ad::attention(q, k, v, shape, probabilities), model(p.wo));
  return ad::layer_norm(x_q + a, model(p.ln_gain), model(p.ln_bias));
}

}  // namespace

template <typename T>
ad::Var<T> feature_attention(ModelBinding<T>& model, ad::Var<T> tokens, std::size_t instances,
                             ad::Tensor<T>* probabilities) {
  const auto& cfg = model.config();
  const std::size_t L = cfg.nbf_layers, width = L + 2;
  require(instances > 0 && tokens.rows() == instances * width,
          "feature_attention: expected L + 2 tokens per instance");
  require(tokens.cols() == cfg.adapter_dim, "feature_attention: token width mismatch");
  ad::Var<T> refined = attention_block(model, model.layout().feature, tokens, tokens,
                                       {cfg.feature_heads, instances}, {}, probabilities);
  ad::Index ms_rows, ms_owner, triple_rows, score_rows;
  for (std::size_t i = 0; i < instances; ++i) {
    const auto base = static_cast<std::int32_t>(i * width);
    for (std::size_t l = 0; l < L; ++l) {
      ms_rows.push_back(base + static_cast<std::int32_t>(l));
      ms_owner.push_back(static_cast<std::int32_t>(i));
    }
    triple_rows.push_back(base + static_cast<std::int32_t>(L));
    score_rows.push_back(base + static_cast<std::int32_t>(L + 1));
  }
  ad::Var<T> ms_mean = ad::scale(
      ad::scatter_add_rows(ad::gather_rows(refined, ms_rows), ms_owner, instances),
      T(1) / static_cast<T>(L));
  return ad::concat_cols<T>(
      {ms_mean, ad::gather_rows(refined, triple_rows), ad::gather_rows(refined, score_rows)});
}

template <typename T>
ScoredBatch<T> score_with_context(ModelBinding<T>& model, ad::Var<T> queries,
                                  ad::Var<T> context) {
  const auto& cfg = model.config();
  const auto& lay = model.layout();
  const std::size_t m = context.rows(), nq = queries.rows();
  require(m > 0, "score_with_context: empty context");
  require(queries.cols() == cfg.pfn_width() && context.cols() == cfg.pfn_width(),
          "score_with_context: width mismatch");

  std::vector<std::int64_t> ctx_pos(m), query_pos(nq, static_cast<std::int64_t>(m));
  std::iota(ctx_pos.begin(), ctx_pos.end(), 0);
  const bool rope = cfg.positional == PositionalMode::kRope;
  const Positions self_pos = rope ? Positions{&ctx_pos, &ctx_pos} : Positions{};
  const Positions cross_pos = rope ? Positions{&query_pos, &ctx_pos} : Positions{};
  const ad::AttentionShape shape{cfg.pfn_heads, 1};

  ad::Var<T> q0 = queries, q = queries, c = context;
  ad::Tensor<T> probs;
  for (std::size_t l = 0; l < cfg.pfn_layers; ++l) {
    c = attention_block(model, lay.sample_self[l], c, c, shape, self_pos, nullptr);
    const bool last = l + 1 == cfg.pfn_layers;
    q = attention_block(model, lay.sample_cross[l], q, c, shape, cross_pos,
                        last ? &probs : nullptr);
  }
  ad::Var<T> normed = ad::layer_norm(q, model(lay.final_ln_gain), model(lay.final_ln_bias));
  ad::Var<T> scores = ad::affine(normed, model(lay.score_w), model(lay.score_b));
  if (cfg.residual_score)
    scores = scores + ad::affine(q0, model(lay.residual_w), model(lay.residual_b));

  ScoredBatch<T> out;
  out.scores = scores;
  out.attention = ad::Tensor<T>::matrix(nq, m);
  const std::size_t heads = cfg.pfn_heads;
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t j = 0; j < m; ++j)
        out.attention(i, j) += probs[(h * nq + i) * m + j] / static_cast<T>(heads);
  return out;
}

template <typename T>
ad::Var<T> linear_mode_score(ModelBinding<T>& model, ad::Var<T> queries, ad::Var<T> context) {
  require(model.config().linear_diagnostic,
          "linear_mode_score: the linear diagnostic regime is not enabled");
  require(context.rows() > 0, "linear_mode_score: empty context");
  const auto& p = model.layout().sample_cross.front();
  ad::Var<T> a = ad::matmul_nt(ad::matmul(queries, model(p.wq)), ad::matmul(context, model(p.wk)));
  return ad::scale(ad::sum_cols(a), T(1) / static_cast<T>(context.rows()));
}

void write_attention_csv(const std::filesystem::path& path, const ad::Tensor<double>& attention,
                         const std::vector<std::string>& row_labels,
                         const std::vector<std::string>& column_labels) {
  require(row_labels.size() == attention.rows() && column_labels.size() == attention.cols(),
          "write_attention_csv: label count mismatch");
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out.precision(17);
  out << "candidate";
  for (const auto& c : column_labels) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < attention.rows(); ++i) {
    out << row_labels[i];
    for (std::size_t j = 0; j < attention.cols(); ++j) out << ',' << attention(i, j);
    out << '\n';
  }
}

#define KGPFN_INSTANTIATE_PFN(T)                                                              \
  template ad::Var<T> feature_attention<T>(ModelBinding<T>&, ad::Var<T>, std::size_t,         \
                                           ad::Tensor<T>*);                                   \
  template ScoredBatch<T> score_with_context<T>(ModelBinding<T>&, ad::Var<T>, ad::Var<T>);    \
  template ad::Var<T> linear_mode_score<T>(ModelBinding<T>&, ad::Var<T>, ad::Var<T>);

KGPFN_INSTANTIATE_PFN(float)
KGPFN_INSTANTIATE_PFN(double)

}  // namespace kgpfn::pfn
