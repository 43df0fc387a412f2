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

#include "kgpfn/localenc.hpp"

#include <algorithm>
#include <cmath>

#include "kgpfn/error.hpp"

namespace kgpfn::local {
namespace {

template <typename T>
ad::Var<T> nbf_update(ModelBinding<T>& model, std::size_t layer, ad::Var<T> h, ad::Var<T> m) {
  const auto& p = model.layout().nbf[layer];
  ad::Var<T> pre = ad::affine(ad::concat_cols<T>({h, m}), model(p.weight), model(p.bias));
  return ad::layer_norm(ad::relu(pre), model(p.ln_gain), model(p.ln_bias));
}

}  // namespace

template <typename T>
LocalEncoding<T> nbfnet_encode(ModelBinding<T>& model, const kg::Subgraph& sub,
                               kg::EntityId head, ad::Var<T> rel_emb,
                               kg::RelationId query_rel, std::size_t layers) {
  const auto anchor = sub.local_index(head);
  require(anchor.has_value(), "nbfnet_encode: head is not in the subgraph");
  require(layers >= 1 && layers <= model.config().nbf_layers,
          "nbfnet_encode: layer count out of range");
  const std::size_t n = sub.size();

  LocalEncoding<T> enc;
  enc.relation = ad::gather_rows(rel_emb, {query_rel});
  ad::Var<T> h = ad::scatter_add_rows(enc.relation, {*anchor}, n);

  ad::Index src, dst, rel;
  src.reserve(sub.edges.size());
  for (const auto& e : sub.edges) {
    src.push_back(e.src);
    dst.push_back(e.dst);
    rel.push_back(e.relation);
  }
  const ad::Var<T> edge_rel = src.empty() ? ad::Var<T>{} : ad::gather_rows(rel_emb, rel);
  const std::size_t d = model.config().dim;
  for (std::size_t l = 0; l < layers; ++l) {
    ad::Var<T> m = src.empty()
                       ? model.constant(ad::Tensor<T>::matrix(n, d))
                       : ad::scatter_add_rows(ad::gather_rows(h, src) * edge_rel, dst, n);
    h = nbf_update(model, l, h, m);
    enc.head_summaries.push_back(ad::gather_rows(h, {*anchor}));
  }
  enc.states = h;
  return enc;
}

template <typename T>
ad::Var<T> unreachable_state(ModelBinding<T>& model, std::size_t layers) {
  const std::size_t d = model.config().dim;
  ad::Var<T> h = model.constant(ad::Tensor<T>::matrix(1, d));
  ad::Var<T> zero = model.constant(ad::Tensor<T>::matrix(1, d));
  for (std::size_t l = 0; l < layers; ++l) h = nbf_update(model, l, h, zero);
  return h;
}

TailFeatures tail_features(const kg::Subgraph& sub, const std::vector<kg::EntityId>& tails) {
  TailFeatures out;
  out.row.reserve(tails.size());
  out.scalars.reserve(3 * tails.size());
  for (kg::EntityId t : tails) {
    const auto idx = sub.local_index(t);
    if (!idx) {
      out.row.push_back(-1);
      out.scalars.insert(out.scalars.end(), {0.0, 0.0, kExternalDistance});
      continue;
    }
    out.row.push_back(*idx);
    const double hop = sub.hops > 0 ? static_cast<double>(sub.hop[*idx]) / sub.hops : 0.0;
    out.scalars.insert(out.scalars.end(), {std::log1p(static_cast<double>(sub.in_degree[*idx])),
                                           std::log1p(static_cast<double>(sub.out_degree[*idx])),
                                           hop});
  }
  return out;
}

template <typename T>
ad::Var<T> tail_enhance(ModelBinding<T>& model, ad::Var<T> z, const std::vector<double>& scalars) {
  const std::size_t n = z.rows();
  require(scalars.size() == 3 * n, "tail_enhance: expected 3 structural scalars per tail");
  ad::Tensor<T> s = ad::Tensor<T>::matrix(n, 3);
  for (std::size_t i = 0; i < scalars.size(); ++i) s[i] = static_cast<T>(scalars[i]);
  const auto& l = model.layout();
  ad::Var<T> hidden = ad::relu(ad::affine(ad::concat_cols<T>({z, model.constant(std::move(s))}),
                                          model(l.tail_w1), model(l.tail_b1)));
  return z + ad::affine(hidden, model(l.tail_w2), model(l.tail_b2));
}

template <typename T>
ad::Var<T> enhanced_tails(ModelBinding<T>& model, ad::Var<T> states, ad::Var<T> canonical,
                          const TailFeatures& tails) {
  const auto external = static_cast<std::int32_t>(states.rows());
  ad::Index rows;
  rows.reserve(tails.size());
  for (auto r : tails.row) rows.push_back(r < 0 ? external : r);
  ad::Var<T> z = ad::gather_rows(ad::concat_rows<T>({states, canonical}), rows);
  return tail_enhance(model, z, tails.scalars);
}

template <typename T>
ad::Var<T> interaction_features(ad::Var<T> z_h, ad::Var<T> r, ad::Var<T> z_t) {
  require(z_h.cols() == r.cols() && r.cols() == z_t.cols(),
          "interaction_features: dimension mismatch");
  require(z_h.rows() == 1 && r.rows() == 1, "interaction_features: z_h and r must be rows");
  const std::size_t n = z_t.rows();
  ad::Var<T> hr = z_h + r;
  ad::Var<T> transe = ad::add_row(ad::scale(z_t, T(-1)), hr);
  ad::Var<T> distmult = ad::mul_row(z_t, z_h * r);
  ad::Var<T> cos = ad::cosine_rows(ad::gather_rows(hr, ad::Index(n, 0)), z_t);
  return ad::concat_cols<T>({transe, distmult, cos});
}

std::vector<double> InteractionFeatures::s_tail() const {
  std::vector<double> out = transe;
  out.insert(out.end(), distmult.begin(), distmult.end());
  out.push_back(cos);
  return out;
}

InteractionFeatures interaction_features(const std::vector<double>& z_h,
                                         const std::vector<double>& r,
                                         const std::vector<double>& z_t) {
  require(z_h.size() == r.size() && r.size() == z_t.size(),
          "interaction_features: dimension mismatch");
  InteractionFeatures f;
  const std::size_t d = z_h.size();
  f.transe.resize(d);
  f.distmult.resize(d);
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double hr = z_h[i] + r[i];
    f.transe[i] = hr - z_t[i];
    f.distmult[i] = z_h[i] * r[i] * z_t[i];
    dot += hr * z_t[i];
    na += hr * hr;
    nb += z_t[i] * z_t[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na >= ad::kCosineMinNorm && nb >= ad::kCosineMinNorm)
    f.cos = std::clamp(dot / (na * nb), -1.0, 1.0);
  return f;
}

#define KGPFN_INSTANTIATE_LOCALENC(T)                                                        \
  template LocalEncoding<T> nbfnet_encode<T>(ModelBinding<T>&, const kg::Subgraph&,          \
                                             kg::EntityId, ad::Var<T>, kg::RelationId,       \
                                             std::size_t);                                   \
  template ad::Var<T> unreachable_state<T>(ModelBinding<T>&, std::size_t);                   \
  template ad::Var<T> tail_enhance<T>(ModelBinding<T>&, ad::Var<T>, const std::vector<double>&); \
  template ad::Var<T> enhanced_tails<T>(ModelBinding<T>&, ad::Var<T>, ad::Var<T>,            \
                                        const TailFeatures&);                                \
  template ad::Var<T> interaction_features<T>(ad::Var<T>, ad::Var<T>, ad::Var<T>);

KGPFN_INSTANTIATE_LOCALENC(float)
KGPFN_INSTANTIATE_LOCALENC(double)

}  // namespace kgpfn::local
