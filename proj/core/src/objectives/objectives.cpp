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

#include "kgpfn/objectives.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "kgpfn/contextkit.hpp"
#include "kgpfn/error.hpp"
#include "kgpfn/pipeline.hpp"

namespace kgpfn::train {

std::vector<double> adversarial_weights(const std::vector<double>& neg_scores, double tau) {
  require(tau > 0.0, "adversarial_weights: tau must be positive");
  std::vector<double> scaled(neg_scores.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = neg_scores[i] / tau;
  return ad::softmax(scaled);
}

template <typename T>
ad::Var<T> bce_loss(ad::Var<T> pos, ad::Var<T> neg, double tau) {
  require(tau > 0.0, "bce_loss: tau must be positive");
  require(pos.cols() == 1 && pos.rows() == neg.rows(), "bce_loss: batch shape mismatch");
  const auto B = static_cast<T>(pos.rows());
  ad::Var<T> w = ad::stop_gradient(ad::softmax_rows(ad::scale(neg, static_cast<T>(1.0 / tau))));
  ad::Var<T> neg_term = ad::sum_cols(w * ad::log_sigmoid(ad::scale(neg, T(-1))));
  return ad::scale(ad::sum_all(ad::log_sigmoid(pos) + neg_term), T(-1) / B);
}

template <typename T>
ad::Var<T> ce_loss(ad::Var<T> pos, ad::Var<T> neg) {
  require(pos.cols() == 1 && pos.rows() == neg.rows(), "ce_loss: batch shape mismatch");
  const auto B = static_cast<T>(pos.rows());
  ad::Var<T> lse = ad::logsumexp_rows(ad::concat_cols<T>({pos, neg}));
  return ad::scale(ad::sum_all(lse - pos), T(1) / B);
}

namespace {

struct BatchVars {
  ad::Tape<double> tape;
  ad::Var<double> pos, neg;
};

void load_batch(const TrainBatch& batch, BatchVars& v) {
  require(batch.positive.size() == batch.negative.size() && !batch.positive.empty(),
          "loss: malformed batch");
  const std::size_t B = batch.positive.size(), N = batch.negative.front().size();
  ad::Tensor<double> neg = ad::Tensor<double>::matrix(B, N);
  for (std::size_t i = 0; i < B; ++i) {
    require(batch.negative[i].size() == N, "loss: ragged negatives");
    for (std::size_t j = 0; j < N; ++j) neg(i, j) = batch.negative[i][j];
  }
  v.pos = v.tape.constant(ad::Tensor<double>({B, 1}, batch.positive));
  v.neg = v.tape.constant(std::move(neg));
}

}  // namespace

double bce_loss(const TrainBatch& batch) {
  BatchVars v;
  load_batch(batch, v);
  return bce_loss(v.pos, v.neg, batch.tau).value().item();
}

double ce_loss(const TrainBatch& batch) {
  BatchVars v;
  load_batch(batch, v);
  return ce_loss(v.pos, v.neg).value().item();
}

template <typename T>
double adamw_update(ad::ParamSet<T>& params, OptimizerState<T>& state,
                    std::vector<ad::Tensor<T>> grads) {
  const auto& o = state.options;
  require(grads.size() == params.size() && state.first.size() == params.size(),
          "adamw_update: gradient count mismatch");
  double sq = 0.0;
  for (const auto& g : grads)
    for (T v : g.storage()) sq += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(sq);
  if (o.clip_norm > 0.0 && norm > o.clip_norm) {
    const T factor = static_cast<T>(o.clip_norm / norm);
    for (auto& g : grads)
      for (T& v : g.storage()) v *= factor;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  const T decay = static_cast<T>(1.0 - o.lr * o.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.at(i).storage();
    auto& m = state.first[i].storage();
    auto& v = state.second[i].storage();
    const auto& g = grads[i].storage();
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] *= decay;
      m[k] = static_cast<T>(o.beta1 * m[k] + (1.0 - o.beta1) * g[k]);
      v[k] = static_cast<T>(o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k]);
      const double mh = m[k] / c1, vh = v[k] / c2;
      p[k] -= static_cast<T>(o.lr * mh / (std::sqrt(vh) + o.eps));
    }
  }
  return norm;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

TrainingData make_training_data(const kg::KnowledgeGraph& augmented,
                                const rel::RelationGraph& rg,
                                const std::vector<kg::RelationId>& relations) {
  require(augmented.augmented(), "make_training_data: graph must be inverse-augmented");
  TrainingData data;
  data.graph = &augmented;
  data.relation_graph = &rg;
  std::vector<kg::RelationId> pool = relations;
  if (pool.empty())
    for (std::size_t r = 0; r < augmented.num_relations(); ++r)
      pool.push_back(static_cast<kg::RelationId>(r));
  for (auto r : pool) {
    require(r >= 0 && static_cast<std::size_t>(r) < augmented.num_relations(),
            "make_training_data: relation out of range");
    // A positive needs at least one other triple of its relation as context.
    if (augmented.forward(r).size() < 2) continue;
    for (const auto& [h, t] : augmented.forward(r)) data.positives.push_back({h, r, t});
  }
  if (data.positives.empty())
    fail(ErrorKind::kEmptyRelation, "no training relation has two or more triples");
  return data;
}

template <typename T>
ElementLoss<T> element_loss(ModelBinding<T>& model, const TrainingData& data,
                            const TrainOptions& options, std::uint64_t seed) {
  const auto& g = *data.graph;
  std::mt19937_64 rng(seed);
  const kg::Triple query =
      data.positives[std::uniform_int_distribution<std::size_t>(0, data.positives.size() - 1)(rng)];
  const auto ctx_seed = rng();
  auto context = ctx::sample_global_context(g, query.relation, options.m_plus, options.m_minus,
                                            query, ctx_seed);

  std::vector<kg::EntityId> tails{query.tail};
  std::uniform_int_distribution<kg::EntityId> entity(
      0, static_cast<kg::EntityId>(g.num_entities()) - 1);
  for (std::size_t j = 0; j < options.negatives; ++j) {
    bool filled = false;
    for (int attempt = 0; attempt < ctx::kNegativeRetries && !filled; ++attempt) {
      const kg::EntityId t = entity(rng);
      if (g.contains({query.head, query.relation, t})) continue;
      tails.push_back(t);
      filled = true;
    }
    if (!filled)
      fail(ErrorKind::kSamplingExhausted,
           "no valid training negative for " + g.relation_name(query.relation) +
               " (batch seed " + std::to_string(seed) + ")");
  }

  ctx::Encoder<T> encoder(model, g, *data.relation_graph,
                          {options.hops, options.node_cap, model.config().mask_query_edges, 0});
  auto scored = score_candidates(encoder, query.head, query.relation, tails, context);
  const std::size_t n = tails.size();
  ad::Var<T> pos = ad::slice_rows(scored.scores, 0, 1);
  ad::Var<T> neg = ad::transpose(ad::slice_rows(scored.scores, 1, n));
  return {bce_loss(pos, neg, options.tau), ce_loss(pos, neg)};
}

namespace {

struct ElementResult {
  double bce = 0.0, ce = 0.0;
};

template <typename T>
ElementResult run_element(const ModelParams<T>& model, const TrainingData& data,
                          const TrainOptions& options, std::uint64_t seed, std::size_t batch,
                          std::vector<ad::Tensor<T>>* grads) {
  ad::Tape<T> tape;
  ModelBinding<T> binding(tape, model, grads != nullptr);
  auto loss = element_loss(binding, data, options, seed);
  ElementResult out{static_cast<double>(loss.bce.value().item()),
                    static_cast<double>(loss.ce.value().item())};
  if (!std::isfinite(out.bce) || !std::isfinite(out.ce))
    fail(ErrorKind::kNumeric, "non-finite training loss (batch seed " + std::to_string(seed) + ")");
  if (grads) {
    tape.backward(ad::scale(loss.bce + loss.ce, T(1) / static_cast<T>(batch)));
    binding.binding().accumulate_gradients(*grads);
  }
  return out;
}

template <typename T>
LossReport run_batch(const ModelParams<T>& model, const TrainingData& data,
                     const TrainOptions& options, std::uint64_t seed,
                     std::vector<ad::Tensor<T>>* grads) {
  require(options.batch >= 1 && options.negatives >= 1, "train: batch and negatives must be >= 1");
  const std::size_t B = options.batch;
  std::vector<ElementResult> results(B);
  std::vector<std::vector<ad::Tensor<T>>> partial(grads ? B : 0);
  std::vector<std::exception_ptr> errors(B);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < B; i = next++) {
      try {
        if (grads) partial[i] = model.params.zeros_like();
        results[i] = run_element(model, data, options, mix_seed(seed, i), B,
                                 grads ? &partial[i] : nullptr);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, B);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  LossReport report;
  report.seed = seed;
  for (std::size_t i = 0; i < B; ++i) {
    report.bce += results[i].bce / static_cast<double>(B);
    report.ce += results[i].ce / static_cast<double>(B);
    if (grads)
      for (std::size_t p = 0; p < grads->size(); ++p) {
        auto& dst = (*grads)[p].storage();
        const auto& src = partial[i][p].storage();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
  }
  report.total = report.bce + report.ce;
  return report;
}

}  // namespace

template <typename T>
LossReport compute_gradients(const ModelParams<T>& model, const TrainingData& data,
                             const TrainOptions& options, std::uint64_t seed,
                             std::vector<ad::Tensor<T>>& grads) {
  grads = model.params.zeros_like();
  return run_batch(model, data, options, seed, &grads);
}

template <typename T>
LossReport train_step(ModelParams<T>& model, OptimizerState<T>& opt, const TrainingData& data,
                      const TrainOptions& options, std::uint64_t seed) {
  std::vector<ad::Tensor<T>> grads;
  LossReport report = compute_gradients(model, data, options, seed, grads);
  report.grad_norm = adamw_update(model.params, opt, std::move(grads));
  return report;
}

template <typename T>
std::vector<TrainLogEntry> train(ModelParams<T>& model, OptimizerState<T>& opt,
                                 const TrainingData& data, const TrainOptions& options,
                                 std::size_t steps, std::uint64_t seed,
                                 const std::optional<std::filesystem::path>& log_path,
                                 const StepCallback& on_step) {
  std::ofstream log;
  if (log_path) {
    log.open(*log_path);
    if (!log) fail(ErrorKind::kIo, "cannot write " + log_path->string());
  }
  std::vector<TrainLogEntry> history;
  history.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t step_seed = mix_seed(seed, opt.step);
    LossReport r = train_step(model, opt, data, options, step_seed);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    TrainLogEntry entry{opt.step, r, ms};
    if (log) {
      nlohmann::json line = {{"step", entry.step}, {"bce", r.bce},     {"ce", r.ce},
                             {"total", r.total},   {"wall_ms", ms},    {"seed", r.seed}};
      log << line.dump() << '\n';
      log.flush();
    }
    if (on_step) on_step(entry);
    history.push_back(entry);
  }
  return history;
}

#define KGPFN_INSTANTIATE_OBJECTIVES(T)                                                         \
  template ElementLoss<T> element_loss<T>(ModelBinding<T>&, const TrainingData&,                \
                                          const TrainOptions&, std::uint64_t);                  \
  template ad::Var<T> bce_loss<T>(ad::Var<T>, ad::Var<T>, double);                              \
  template ad::Var<T> ce_loss<T>(ad::Var<T>, ad::Var<T>);                                       \
  template double adamw_update<T>(ad::ParamSet<T>&, OptimizerState<T>&,                         \
                                  std::vector<ad::Tensor<T>>);                                  \
  template LossReport compute_gradients<T>(const ModelParams<T>&, const TrainingData&,          \
                                           const TrainOptions&, std::uint64_t,                  \
                                           std::vector<ad::Tensor<T>>&);                        \
  template LossReport train_step<T>(ModelParams<T>&, OptimizerState<T>&, const TrainingData&,   \
                                    const TrainOptions&, std::uint64_t);                        \
  template std::vector<TrainLogEntry> train<T>(ModelParams<T>&, OptimizerState<T>&,             \
                                               const TrainingData&, const TrainOptions&,        \
                                               std::size_t, std::uint64_t,                      \
                                               const std::optional<std::filesystem::path>&,     \
                                               const StepCallback&);

KGPFN_INSTANTIATE_OBJECTIVES(float)
KGPFN_INSTANTIATE_OBJECTIVES(double)

}  // namespace kgpfn::train
