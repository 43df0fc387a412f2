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
#include <string>
#include <vector>

#include "kgpfn/model.hpp"

namespace kgpfn::check {

struct GradSuiteOptions {
  std::size_t points = 5;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  // Coordinates sampled per tensor for the end-to-end loss (0 = all).
  std::size_t full_loss_coords = 3;
};

struct BlockResult {
  std::string block;
  std::size_t points = 0;
  std::size_t coords = 0;
  double max_rel_error = 0.0;
  bool ok = false;
  std::string detail;  // worst point description
};

// Small configuration whose blocks are cheap to difference.
ModelConfig micro_config();

std::vector<std::string> gradient_blocks();
BlockResult check_block(const std::string& block, const GradSuiteOptions& options);
std::vector<BlockResult> run_gradient_suite(const GradSuiteOptions& options);

void write_gradient_report(const std::filesystem::path& path,
                           const std::vector<BlockResult>& results, double tolerance);

}  // namespace kgpfn::check
