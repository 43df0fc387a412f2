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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgpfn/diffcore/ops.hpp"
#include "kgpfn/diffcore/tape.hpp"

namespace kgpfn::ad {

// Builds a scalar from leaves already placed on the tape (one per point).
using Objective = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every coordinate; otherwise a seeded subset per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  // max |analytic - central difference| / max(1, |analytic|)
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
  // Set when the objective produced a non-finite value.
  std::optional<std::size_t> nonfinite_tensor;
  std::optional<std::size_t> nonfinite_index;

  bool ok(double tolerance) const {
    return !nonfinite_index && max_rel_error < tolerance;
  }
  std::string describe() const;
};

GradCheckResult grad_check(const Objective& objective,
                           const std::vector<Tensor<double>>& points,
                           const GradCheckOptions& options = {});

// Single-point convenience form.
GradCheckResult grad_check(const std::function<Var<double>(Var<double>)>& function,
                           const Tensor<double>& point, double step);

}  // namespace kgpfn::ad
