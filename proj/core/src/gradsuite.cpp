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

#include "kgpfn/gradsuite.hpp"

#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <random>

#include <nlohmann/json.hpp>

#include "kgpfn/contextkit.hpp"
#include "kgpfn/diffcore/gradcheck.hpp"
#include "kgpfn/error.hpp"
#include "kgpfn/localenc.hpp"
#include "kgpfn/objectives.hpp"
#include "kgpfn/pfncore.hpp"
#include "kgpfn/relgraph.hpp"

namespace kgpfn::check {
namespace {

using Tensor = ad::Tensor<double>;
using Var = ad::Var<double>;
using Model = ModelParams<double>;

Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.storage()) v = n(rng);
  return t;
}

// Deterministic scalar readout sum(out * R) with a fixed random R.
Var readout(Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Var r = out.tape()->constant(random_matrix(out.rows(), out.cols(), rng));
  return ad::sum_all(out * r);
}

kg::KnowledgeGraph tiny_graph(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ent(0, 7), rel(0, 1);
  std::vector<kg::Triple> triples;
  for (int i = 0; i < 16; ++i) triples.push_back({ent(rng), rel(rng), ent(rng)});
  for (int i = 0; i < 7; ++i) triples.push_back({i, 0, i + 1});
  std::vector<std::string> ents, rels{"p", "q"};
  for (int i = 0; i < 8; ++i) ents.push_back("e" + std::to_string(i));
  return kg::KnowledgeGraph::from_triples(kg::Vocabulary(ents), kg::Vocabulary(rels), triples)
      .augment_inverses();
}

// Gradient check where the listed parameters and the extra inputs are leaves.
struct BlockSetup {
  std::vector<std::size_t> params;
  std::vector<Tensor> inputs;
  std::function<Var(ModelBinding<double>&, std::span<const Var> inputs)> body;
  std::size_t coords = 0;
};

ad::GradCheckResult run_setup(Model& model, const BlockSetup& setup, const GradSuiteOptions& o,
                              std::uint64_t seed) {
  std::vector<Tensor> points;
  for (auto p : setup.params) points.push_back(model.params.at(p));
  for (const auto& x : setup.inputs) points.push_back(x);
  ad::Objective objective = [&](ad::Tape<double>& tape, std::span<const Var> leaves) {
    ModelBinding<double> binding(tape, model, false);
    for (std::size_t i = 0; i < setup.params.size(); ++i) binding.bind(setup.params[i], leaves[i]);
    return setup.body(binding, leaves.subspan(setup.params.size()));
  };
  return ad::grad_check(objective, points, {o.step, setup.coords, seed});
}

void append(std::vector<std::size_t>& v, const AttentionParams& a) {
  v.insert(v.end(), {a.wq, a.wk, a.wv, a.wo, a.ln_gain, a.ln_bias});
}
void append(std::vector<std::size_t>& v, const AdapterParams& a) {
  v.insert(v.end(), {a.w1, a.b1, a.w2, a.b2, a.ln_gain, a.ln_bias});
}

BlockSetup make_block(const std::string& block, const Model& model, std::uint64_t seed,
                      const GradSuiteOptions& o) {
  const auto& cfg = model.config;
  const auto& lay = model.layout;
  const std::size_t d = cfg.dim, L = cfg.nbf_layers, dp = cfg.adapter_dim, w = cfg.pfn_width();
  std::mt19937_64 rng(seed ^ 0xA5A5A5A5ULL);
  BlockSetup s;
  if (block == "relation_mpnn") {
    for (const auto& l : lay.rel)
      s.params.insert(s.params.end(), {l.type_vectors, l.weight, l.bias, l.ln_gain, l.ln_bias});
    auto g = std::make_shared<kg::KnowledgeGraph>(tiny_graph(seed));
    auto rg = std::make_shared<rel::RelationGraph>(rel::build_relation_graph(*g));
    s.body = [rg, seed](ModelBinding<double>& m, std::span<const Var>) {
      return readout(rel::relation_mpnn(m, *rg, 1), seed);
    };
  } else if (block == "nbfnet") {
    for (const auto& l : lay.nbf) s.params.insert(s.params.end(), {l.weight, l.bias, l.ln_gain, l.ln_bias});
    auto g = std::make_shared<kg::KnowledgeGraph>(tiny_graph(seed));
    auto sub = std::make_shared<kg::Subgraph>(kg::khop_subgraph(*g, 0, cfg.hops));
    s.inputs.push_back(random_matrix(g->num_relations(), d, rng));
    s.body = [sub, seed](ModelBinding<double>& m, std::span<const Var> in) {
      auto enc = local::nbfnet_encode(m, *sub, 0, in[0], 0);
      return readout(enc.c_loc(), seed) + readout(enc.states, seed + 1);
    };
  } else if (block == "tail_enhance") {
    s.params = {lay.tail_w1, lay.tail_b1, lay.tail_w2, lay.tail_b2};
    s.inputs.push_back(random_matrix(5, d, rng));
    auto scalars = std::make_shared<std::vector<double>>();
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int i = 0; i < 15; ++i) scalars->push_back(u(rng));
    s.body = [scalars, seed](ModelBinding<double>& m, std::span<const Var> in) {
      return readout(local::tail_enhance(m, in[0], *scalars), seed);
    };
  } else if (block == "interaction_features") {
    s.inputs = {random_matrix(1, d, rng), random_matrix(1, d, rng), random_matrix(4, d, rng)};
    s.body = [seed](ModelBinding<double>&, std::span<const Var> in) {
      return readout(local::interaction_features(in[0], in[1], in[2]), seed);
    };
  } else if (block == "adapters") {
    append(s.params, lay.multi_scale);
    append(s.params, lay.triple);
    append(s.params, lay.score);
    s.params.insert(s.params.end(), {lay.layer_offsets, lay.label_embedding});
    s.inputs = {random_matrix(2 * L, d, rng), random_matrix(3, 3 * d, rng),
                random_matrix(3, 2 * d + 1, rng)};
    s.body = [seed](ModelBinding<double>& m, std::span<const Var> in) {
      ctx::InstanceBatch<double> batch{in[0], {0, 1, 1}, in[1], in[2]};
      return readout(ctx::fuse_instances(
                         m, batch, {ctx::Label::kPositive, ctx::Label::kNegative, ctx::Label::kMasked}),
                     seed);
    };
  } else if (block == "feature_attention") {
    append(s.params, lay.feature);
    s.inputs.push_back(random_matrix(2 * (L + 2), dp, rng));
    s.body = [seed](ModelBinding<double>& m, std::span<const Var> in) {
      return readout(pfn::feature_attention(m, in[0], 2), seed);
    };
  } else if (block == "sample_attention" || block == "score_head") {
    if (block == "sample_attention") {
      for (std::size_t l = 0; l < cfg.pfn_layers; ++l) {
        append(s.params, lay.sample_self[l]);
        append(s.params, lay.sample_cross[l]);
      }
    } else {
      s.params = {lay.final_ln_gain, lay.final_ln_bias, lay.score_w,
                  lay.score_b,       lay.residual_w,    lay.residual_b};
    }
    s.inputs = {random_matrix(3, w, rng), random_matrix(4, w, rng)};
    s.body = [seed](ModelBinding<double>& m, std::span<const Var> in) {
      return readout(pfn::score_with_context(m, in[0], in[1]).scores, seed);
    };
  } else if (block == "bce_loss" || block == "ce_loss") {
    s.inputs = {random_matrix(2, 1, rng, 2.0), random_matrix(2, 4, rng, 2.0)};
    const bool bce = block == "bce_loss";
    s.body = [bce](ModelBinding<double>&, std::span<const Var> in) {
      return bce ? train::bce_loss(in[0], in[1], 1.0) : train::ce_loss(in[0], in[1]);
    };
  } else if (block == "full_loss") {
    for (std::size_t i = 0; i < model.params.size(); ++i) s.params.push_back(i);
    s.coords = o.full_loss_coords;
    auto g = std::make_shared<kg::KnowledgeGraph>(tiny_graph(seed));
    auto rg = std::make_shared<rel::RelationGraph>(rel::build_relation_graph(*g));
    auto data = std::make_shared<train::TrainingData>(train::make_training_data(*g, *rg, {}));
    train::TrainOptions t;
    t.batch = 2;
    t.negatives = 4;
    t.m_plus = 2;
    t.m_minus = 4;
    t.hops = cfg.hops;
    s.body = [g, rg, data, t, seed](ModelBinding<double>& m, std::span<const Var>) {
      Var total;
      for (std::size_t i = 0; i < t.batch; ++i) {
        auto loss = train::element_loss(m, *data, t, train::mix_seed(seed, i));
        Var part = ad::scale(loss.bce + loss.ce, 1.0 / static_cast<double>(t.batch));
        total = total.valid() ? total + part : part;
      }
      return total;
    };
  } else {
    fail(ErrorKind::kConfig, "unknown gradient block '" + block + "'");
  }
  return s;
}

}  // namespace

ModelConfig micro_config() {
  ModelConfig c;
  c.dim = 4;
  c.nbf_layers = 2;
  c.rel_layers = 2;
  c.hops = 2;
  c.node_cap = 64;
  c.adapter_dim = 4;
  c.feature_heads = 2;
  c.pfn_layers = 2;
  c.pfn_heads = 2;
  c.tail_hidden = 4;
  return c;
}

std::vector<std::string> gradient_blocks() {
  return {"relation_mpnn",     "nbfnet",           "tail_enhance", "interaction_features",
          "adapters",          "feature_attention", "sample_attention", "score_head",
          "bce_loss",          "ce_loss",          "full_loss"};
}

BlockResult check_block(const std::string& block, const GradSuiteOptions& options) {
  BlockResult result;
  result.block = block;
  for (std::size_t p = 0; p < options.points; ++p) {
    const std::uint64_t seed = train::mix_seed(options.seed, p);
    Model model = init_model<double>(micro_config(), seed);
    // Move every parameter off its structured initial value.
    std::mt19937_64 rng(seed + 17);
    std::normal_distribution<double> noise(0.0, 0.2);
    for (std::size_t i = 0; i < model.params.size(); ++i)
      for (auto& v : model.params.at(i).storage()) v += noise(rng);
    const BlockSetup setup = make_block(block, model, seed, options);
    const auto r = run_setup(model, setup, options, seed);
    result.points += 1;
    result.coords += r.coords_checked;
    if (r.nonfinite_index) {
      result.max_rel_error = std::numeric_limits<double>::infinity();
      result.detail = "point " + std::to_string(p) + ": " + r.describe();
    } else if (r.max_rel_error >= result.max_rel_error) {
      result.max_rel_error = r.max_rel_error;
      result.detail = "point " + std::to_string(p) + ": " + r.describe();
    }
  }
  result.ok = result.max_rel_error < options.tolerance;
  return result;
}

std::vector<BlockResult> run_gradient_suite(const GradSuiteOptions& options) {
  std::vector<BlockResult> out;
  for (const auto& b : gradient_blocks()) out.push_back(check_block(b, options));
  return out;
}

void write_gradient_report(const std::filesystem::path& path,
                           const std::vector<BlockResult>& results, double tolerance) {
  nlohmann::json blocks = nlohmann::json::array();
  bool ok = true;
  for (const auto& r : results) {
    ok = ok && r.ok;
    blocks.push_back({{"block", r.block},
                      {"points", r.points},
                      {"coords", r.coords},
                      {"max_rel_error", r.max_rel_error},
                      {"ok", r.ok},
                      {"detail", r.detail}});
  }
  nlohmann::json j = {{"tolerance", tolerance}, {"passed", ok}, {"blocks", blocks}};
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace kgpfn::check
