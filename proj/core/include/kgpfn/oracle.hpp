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
#include <filesystem>
#include <vector>

#include "kgpfn/kgstore.hpp"

namespace kgpfn::oracle {

using RelationSequence = std::vector<kg::RelationId>;

// Walks src -> dst whose i-th edge carries relation rho[i], by enumeration.
std::uint64_t count_relational_walks(const kg::KnowledgeGraph& g, kg::EntityId src,
                                     kg::EntityId dst, const RelationSequence& rho);

// Dense integer product A_rho[0] * ... * A_rho[l-1], row-major E x E.
std::vector<std::uint64_t> adjacency_product(const kg::KnowledgeGraph& g,
                                             const RelationSequence& rho);

// Count vector of walks src -> dst for each pattern.
std::vector<std::uint64_t> motif_profile(const kg::KnowledgeGraph& g, kg::EntityId src,
                                         kg::EntityId dst,
                                         const std::vector<RelationSequence>& patterns);

// sum_k lambda_k * phi_q[k] * mean_s phi_support[s][k]
double linear_pfn_oracle(const std::vector<double>& phi_q,
                         const std::vector<std::vector<double>>& phi_support,
                         const std::vector<double>& lambdas);

struct ExpressivityOptions {
  std::size_t motifs = 8;         // n
  std::size_t support = 16;       // K
  std::size_t instances = 100;
  std::uint64_t seed = 0;
  int max_count = 6;              // counts drawn from [0, max_count]
  double lambda_min = 0.5, lambda_max = 2.0;
  // Negative control: add N(0, perturbation^2) noise to the motif basis so its
  // columns stop being orthogonal. 0 keeps the exact construction.
  double perturbation = 0.0;
};

struct ExpressivityReport {
  std::size_t instances = 0;
  double max_deviation = 0.0;
  double min_deviation = 0.0;
  std::uint64_t worst_seed = 0;
};

inline constexpr double kExpressivityTolerance = 1e-9;

// Embeds random count vectors as z = W_M phi with orthogonal W_M columns of
// squared norm lambda_k, scores them with the linear PFN mode (W_Q = W_K = I)
// and compares against linear_pfn_oracle. Does not throw on deviation.
ExpressivityReport measure_functional_expressivity(const ExpressivityOptions& options);

// Same, but fails with a verification error naming the offending seed when
// the deviation exceeds kExpressivityTolerance.
double verify_functional_expressivity(std::size_t n, std::size_t K, std::uint64_t seed,
                                      std::size_t instances = 100);

struct TheoryReport {
  ExpressivityReport exact;
  ExpressivityReport control;
};

TheoryReport run_theory_check(const ExpressivityOptions& options, double control_perturbation);

// JSON {instances, max_deviation, negative_control_min_deviation}.
void write_theory_report(const std::filesystem::path& path, const TheoryReport& report);

}  // namespace kgpfn::oracle
