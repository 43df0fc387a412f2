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

#include "kgpfn/diffcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace kgpfn::ad {
namespace {

double evaluate(const Objective& objective, const std::vector<Tensor<double>>& points,
                StopGradientFreeze& freeze) {
  freeze.replay();
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  leaves.reserve(points.size());
  for (const auto& p : points) leaves.push_back(tape.leaf(p));
  const Var<double> out = objective(tape, leaves);
  require(out.value().size() == 1, "grad_check objective must return a scalar");
  return out.value()[0];
}

}  // namespace

std::string GradCheckResult::describe() const {
  std::ostringstream os;
  if (nonfinite_index) {
    os << "non-finite objective at tensor " << *nonfinite_tensor << " coordinate "
       << *nonfinite_index;
  } else {
    os << "max relative error " << max_rel_error << " at tensor " << worst_tensor
       << " coordinate " << worst_index << " (" << coords_checked << " coordinates)";
  }
  return os.str();
}

GradCheckResult grad_check(const Objective& objective,
                           const std::vector<Tensor<double>>& points,
                           const GradCheckOptions& options) {
  require(options.step > 0.0, "grad_check: step must be positive");
  GradCheckResult result;
  StopGradientFreeze freeze;

  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (const auto& p : points) leaves.push_back(tape.leaf(p));
    const Var<double> out = objective(tape, leaves);
    require(out.value().size() == 1, "grad_check objective must return a scalar");
    if (!std::isfinite(out.value()[0])) {
      result.nonfinite_tensor = 0;
      result.nonfinite_index = 0;
      return result;
    }
    tape.backward(out);
    for (const auto& leaf : leaves) analytic.push_back(tape.grad(leaf));
  }

  std::mt19937_64 rng(options.seed);
  std::vector<Tensor<double>> work = points;
  for (std::size_t t = 0; t < points.size(); ++t) {
    std::vector<std::size_t> coords(points[t].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_tensor > 0 && coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double saved = work[t][i];
      work[t][i] = saved + options.step;
      const double up = evaluate(objective, work, freeze);
      work[t][i] = saved - options.step;
      const double down = evaluate(objective, work, freeze);
      work[t][i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        result.nonfinite_tensor = t;
        result.nonfinite_index = i;
        return result;
      }
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[t][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      ++result.coords_checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_tensor = t;
        result.worst_index = i;
      }
    }
  }
  return result;
}

GradCheckResult grad_check(const std::function<Var<double>(Var<double>)>& function,
                           const Tensor<double>& point, double step) {
  GradCheckOptions options;
  options.step = step;
  return grad_check(
      [&function](Tape<double>&, std::span<const Var<double>> leaves) {
        return function(leaves[0]);
      },
      {point}, options);
}

}  // namespace kgpfn::ad
