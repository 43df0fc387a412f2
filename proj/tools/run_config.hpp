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

namespace kgpfn::cli {

inline const std::vector<std::string> kCommands = {
    "ingest", "train", "eval", "sweep", "theory-check", "export-attention", "gradcheck"};

struct RunConfig {
  std::string command;

  // Data
  std::string data_dir;
  std::string synthetic_spec;
  std::string out_dir = "runs/latest";
  std::string checkpoint_dir;  // defaults to out_dir
  std::string dataset_name;

  // Model
  std::size_t dim = 64;
  std::size_t nbf_layers = 6;
  std::size_t rel_layers = 6;
  int hops = 3;
  std::size_t node_cap = 2000;
  std::size_t adapter_dim = 64;
  std::size_t feature_heads = 4;
  std::size_t pfn_layers = 3;
  std::size_t pfn_heads = 4;
  std::string positional = "rope";
  double rope_base = 10000.0;
  bool residual_score = true;
  std::size_t tail_hidden = 0;
  bool mask_query_edges = true;

  // Context
  std::size_t m_plus = 20;
  std::size_t m_minus = 60;

  // Training
  double lr = 5e-4;
  double weight_decay = 1e-6;
  double tau = 1.0;
  std::size_t negatives = 64;
  std::size_t batch = 8;
  std::size_t steps = 1000;
  double clip_norm = 10.0;
  std::vector<std::string> train_relations;

  // Seeds and execution
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> eval_seeds = {0, 1, 2, 3, 4};
  std::size_t max_queries = 0;
  std::string precision = "float32";
  std::size_t threads = 0;  // 0: KGPFN_THREADS, then hardware concurrency

  // Sweep grid
  std::vector<std::size_t> sweep_m_plus = {5, 10, 15, 20};
  std::vector<std::size_t> sweep_m_minus = {20, 40, 60, 80};
  std::vector<int> sweep_hops = {3};

  // Attention export
  std::size_t attention_query = 0;
  std::size_t attention_true = 5;
  std::size_t attention_wrong = 20;
  std::size_t attention_m_plus = 5;
  std::size_t attention_m_minus = 20;

  // Theory check
  std::size_t theory_motifs = 8;
  std::size_t theory_support = 16;
  std::size_t theory_instances = 100;
  double theory_control = 0.1;

  // Gradient check
  std::size_t gradcheck_points = 5;
  double gradcheck_step = 1e-5;

  ModelConfig model_config() const;
  std::filesystem::path out() const { return out_dir; }
  std::filesystem::path checkpoint() const {
    return checkpoint_dir.empty() ? std::filesystem::path(out_dir) : std::filesystem::path(checkpoint_dir);
  }
  void validate() const;
};

// Parses argv: `kgpfn <command> [--config file.json] [--<field> value ...]`.
// File values override defaults and flags override the file.
RunConfig parse_config(int argc, const char* const* argv);
RunConfig parse_config_json(const std::string& text, RunConfig base = {});

std::string config_to_json(const RunConfig& config);

// --threads, else KGPFN_THREADS, else the number of hardware threads.
std::size_t resolve_threads(const RunConfig& config);

// Returns the process exit status; writes an error record on failure.
int dispatch(const RunConfig& config);

// Entry point used by main(): parse, dispatch and report errors.
int run(int argc, const char* const* argv);

}  // namespace kgpfn::cli
