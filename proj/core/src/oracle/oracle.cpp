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

#include "kgpfn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "kgpfn/error.hpp"
#include "kgpfn/model.hpp"
#include "kgpfn/pfncore.hpp"

namespace kgpfn::oracle {
namespace {

void check_sequence(const kg::KnowledgeGraph& g, const RelationSequence& rho) {
  for (auto r : rho)
    require(r >= 0 && static_cast<std::size_t>(r) < g.num_relations(),
            "relation sequence holds an invalid relation id");
}

std::uint64_t walk(const kg::KnowledgeGraph& g, kg::EntityId at, kg::EntityId dst,
                   const RelationSequence& rho, std::size_t depth) {
  if (depth == rho.size()) return at == dst ? 1 : 0;
  std::uint64_t total = 0;
  for (const auto& a : g.out_edges(at))
    if (a.relation == rho[depth]) total += walk(g, a.entity, dst, rho, depth + 1);
  return total;
}

}  // namespace

std::uint64_t count_relational_walks(const kg::KnowledgeGraph& g, kg::EntityId src,
                                     kg::EntityId dst, const RelationSequence& rho) {
  check_sequence(g, rho);
  const auto E = static_cast<kg::EntityId>(g.num_entities());
  if (src < 0 || src >= E || dst < 0 || dst >= E) fail(ErrorKind::kId, "walk endpoint out of range");
  return walk(g, src, dst, rho, 0);
}

std::vector<std::uint64_t> adjacency_product(const kg::KnowledgeGraph& g,
                                             const RelationSequence& rho) {
  check_sequence(g, rho);
  const std::size_t E = g.num_entities();
  std::vector<std::uint64_t> acc(E * E, 0);
  for (std::size_t i = 0; i < E; ++i) acc[i * E + i] = 1;
  for (auto r : rho) {
    std::vector<std::uint64_t> adj(E * E, 0);
    for (const auto& [h, t] : g.forward(r)) adj[static_cast<std::size_t>(h) * E + t] += 1;
    std::vector<std::uint64_t> next(E * E, 0);
    for (std::size_t i = 0; i < E; ++i)
      for (std::size_t k = 0; k < E; ++k) {
        const std::uint64_t a = acc[i * E + k];
        if (a == 0) continue;
        for (std::size_t j = 0; j < E; ++j) next[i * E + j] += a * adj[k * E + j];
      }
    acc = std::move(next);
  }
  return acc;
}

std::vector<std::uint64_t> motif_profile(const kg::KnowledgeGraph& g, kg::EntityId src,
                                         kg::EntityId dst,
                                         const std::vector<RelationSequence>& patterns) {
  std::vector<std::uint64_t> out;
  out.reserve(patterns.size());
  for (const auto& p : patterns) out.push_back(count_relational_walks(g, src, dst, p));
  return out;
}

double linear_pfn_oracle(const std::vector<double>& phi_q,
                         const std::vector<std::vector<double>>& phi_support,
                         const std::vector<double>& lambdas) {
  const std::size_t n = lambdas.size();
  require(phi_q.size() == n, "linear_pfn_oracle: query profile length mismatch");
  for (const auto& s : phi_support)
    require(s.size() == n, "linear_pfn_oracle: support profile length mismatch");
  if (n == 0 || phi_support.empty()) return 0.0;
  double score = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double mean = 0.0;
    for (const auto& s : phi_support) mean += s[k];
    mean /= static_cast<double>(phi_support.size());
    score += lambdas[k] * phi_q[k] * mean;
  }
  return score;
}

namespace {

// Columns of a width x n matrix with orthogonal columns of squared norm
// lambda_k (modified Gram-Schmidt on Gaussian draws).
std::vector<std::vector<double>> motif_basis(std::size_t width, const std::vector<double>& lambdas,
                                             std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> cols;
  while (cols.size() < lambdas.size()) {
    std::vector<double> v(width);
    for (auto& x : v) x = normal(rng);
    for (const auto& c : cols) {
      double dot = 0.0;
      for (std::size_t i = 0; i < width; ++i) dot += v[i] * c[i];
      for (std::size_t i = 0; i < width; ++i) v[i] -= dot * c[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;
    for (auto& x : v) x /= norm;
    cols.push_back(std::move(v));
  }
  for (std::size_t k = 0; k < cols.size(); ++k)
    for (auto& x : cols[k]) x *= std::sqrt(lambdas[k]);
  return cols;
}

double one_instance(const ExpressivityOptions& o, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = o.motifs, K = o.support;
  // Linear-mode PFN whose first cross-attention projections are identities.
  ModelConfig cfg;
  cfg.dim = 1;
  cfg.nbf_layers = 1;
  cfg.rel_layers = 0;
  cfg.adapter_dim = std::max<std::size_t>(1, (n + 2) / 3);
  cfg.feature_heads = 1;
  cfg.pfn_heads = 1;
  cfg.pfn_layers = 1;
  cfg.positional = PositionalMode::kNone;
  cfg.residual_score = false;
  cfg.linear_diagnostic = true;
  auto model = init_model<double>(cfg, seed);
  const std::size_t w = cfg.pfn_width();
  const auto& cross = model.layout.sample_cross.front();
  for (auto idx : {cross.wq, cross.wk}) {
    auto& m = model.params.at(idx);
    m.fill(0.0);
    for (std::size_t i = 0; i < w; ++i) m(i, i) = 1.0;
  }

  std::uniform_real_distribution<double> lam(o.lambda_min, o.lambda_max);
  std::vector<double> lambdas(n);
  for (auto& l : lambdas) l = lam(rng);
  auto basis = motif_basis(w, lambdas, rng);
  if (o.perturbation > 0.0) {
    std::normal_distribution<double> noise(0.0, o.perturbation);
    for (auto& c : basis)
      for (auto& x : c) x += noise(rng);
  }
  std::uniform_int_distribution<int> count(0, o.max_count);
  auto draw = [&] {
    std::vector<double> phi(n);
    for (auto& c : phi) c = count(rng);
    return phi;
  };
  auto embed = [&](const std::vector<double>& phi, ad::Tensor<double>& z, std::size_t row) {
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < w; ++i) z(row, i) += basis[k][i] * phi[k];
  };
  const auto phi_q = draw();
  std::vector<std::vector<double>> support(K);
  for (auto& s : support) s = draw();

  ad::Tensor<double> zq = ad::Tensor<double>::matrix(1, w), zs = ad::Tensor<double>::matrix(K, w);
  embed(phi_q, zq, 0);
  for (std::size_t s = 0; s < K; ++s) embed(support[s], zs, s);
  ad::Tape<double> tape;
  ModelBinding<double> binding(tape, model, false);
  const double got =
      pfn::linear_mode_score(binding, tape.constant(zq), tape.constant(zs)).value().item();
  return std::abs(got - linear_pfn_oracle(phi_q, support, lambdas));
}

}  // namespace

ExpressivityReport measure_functional_expressivity(const ExpressivityOptions& options) {
  require(options.motifs >= 1 && options.support >= 1 && options.instances >= 1,
          "functional expressivity: motifs, support and instances must be positive");
  ExpressivityReport report;
  report.instances = options.instances;
  report.min_deviation = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < options.instances; ++i) {
    const std::uint64_t seed = options.seed + i;
    const double dev = one_instance(options, seed);
    if (i == 0 || dev > report.max_deviation) {
      report.max_deviation = dev;
      report.worst_seed = seed;
    }
    report.min_deviation = std::min(report.min_deviation, dev);
  }
  return report;
}

double verify_functional_expressivity(std::size_t n, std::size_t K, std::uint64_t seed,
                                      std::size_t instances) {
  ExpressivityOptions o;
  o.motifs = n;
  o.support = K;
  o.seed = seed;
  o.instances = instances;
  const auto report = measure_functional_expressivity(o);
  if (report.max_deviation > kExpressivityTolerance)
    fail(ErrorKind::kVerification, "linear-mode score deviates from the motif oracle by " +
                                       std::to_string(report.max_deviation) + " at seed " +
                                       std::to_string(report.worst_seed));
  return report.max_deviation;
}

TheoryReport run_theory_check(const ExpressivityOptions& options, double control_perturbation) {
  TheoryReport report;
  ExpressivityOptions exact = options;
  exact.perturbation = 0.0;
  report.exact = measure_functional_expressivity(exact);
  ExpressivityOptions control = options;
  control.perturbation = control_perturbation;
  report.control = measure_functional_expressivity(control);
  return report;
}

void write_theory_report(const std::filesystem::path& path, const TheoryReport& report) {
  nlohmann::json j = {{"instances", report.exact.instances},
                      {"max_deviation", report.exact.max_deviation},
                      {"worst_seed", report.exact.worst_seed},
                      {"negative_control_min_deviation", report.control.min_deviation},
                      {"tolerance", kExpressivityTolerance},
                      {"passed", report.exact.max_deviation <= kExpressivityTolerance}};
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace kgpfn::oracle
