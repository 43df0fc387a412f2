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

#include "run_config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kgpfn/error.hpp"

namespace kgpfn::cli {

// Every user-visible RunConfig field, in echo order.
#define KGPFN_RUN_CONFIG_FIELDS(X) \
  X(data_dir)                      \
  X(synthetic_spec)                \
  X(out_dir)                       \
  X(checkpoint_dir)                \
  X(dataset_name)                  \
  X(dim)                           \
  X(nbf_layers)                    \
  X(rel_layers)                    \
  X(hops)                          \
  X(node_cap)                      \
  X(adapter_dim)                   \
  X(feature_heads)                 \
  X(pfn_layers)                    \
  X(pfn_heads)                     \
  X(positional)                    \
  X(rope_base)                     \
  X(residual_score)                \
  X(tail_hidden)                   \
  X(mask_query_edges)              \
  X(m_plus)                        \
  X(m_minus)                       \
  X(lr)                            \
  X(weight_decay)                  \
  X(tau)                           \
  X(negatives)                     \
  X(batch)                         \
  X(steps)                         \
  X(clip_norm)                     \
  X(train_relations)               \
  X(seed)                          \
  X(eval_seeds)                    \
  X(max_queries)                   \
  X(precision)                     \
  X(threads)                       \
  X(sweep_m_plus)                  \
  X(sweep_m_minus)                 \
  X(sweep_hops)                    \
  X(attention_query)               \
  X(attention_true)                \
  X(attention_wrong)               \
  X(attention_m_plus)              \
  X(attention_m_minus)             \
  X(theory_motifs)                 \
  X(theory_support)                \
  X(theory_instances)              \
  X(theory_control)                \
  X(gradcheck_points)              \
  X(gradcheck_step)

namespace {

std::string kebab(std::string name) {
  std::replace(name.begin(), name.end(), '_', '-');
  return name;
}

[[noreturn]] void config_error(const std::string& msg) { fail(ErrorKind::kConfig, msg); }

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig c;
  c.dim = dim;
  c.nbf_layers = nbf_layers;
  c.rel_layers = rel_layers;
  c.hops = hops;
  c.node_cap = node_cap;
  c.adapter_dim = adapter_dim;
  c.feature_heads = feature_heads;
  c.pfn_layers = pfn_layers;
  c.pfn_heads = pfn_heads;
  c.positional = positional_mode_from_string(positional);
  c.rope_base = rope_base;
  c.residual_score = residual_score;
  c.tail_hidden = tail_hidden;
  c.mask_query_edges = mask_query_edges;
  return c;
}

void RunConfig::validate() const {
  if (!command.empty() && std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end())
    config_error("unknown command '" + command + "'");
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) config_error(std::string(name) + " must be >= 1");
  };
  positive(batch, "batch");
  positive(negatives, "negatives");
  positive(m_plus + m_minus, "m_plus + m_minus");
  positive(attention_m_plus + attention_m_minus, "attention_m_plus + attention_m_minus");
  positive(theory_motifs, "theory_motifs");
  positive(theory_support, "theory_support");
  positive(theory_instances, "theory_instances");
  positive(gradcheck_points, "gradcheck_points");
  if (hops < 0 || hops > 16) config_error("hops must lie in [0, 16]");
  if (!(lr > 0.0 && lr < 1.0)) config_error("lr must lie in (0, 1)");
  if (weight_decay < 0.0 || lr * weight_decay >= 1.0) config_error("weight_decay out of range");
  if (!(tau > 0.0)) config_error("tau must be > 0");
  if (!(clip_norm >= 0.0)) config_error("clip_norm must be >= 0");
  if (!(gradcheck_step > 0.0 && gradcheck_step < 1.0)) config_error("gradcheck_step must lie in (0, 1)");
  if (!(theory_control >= 0.0)) config_error("theory_control must be >= 0");
  if (precision != "float32" && precision != "float64")
    config_error("precision must be 'float32' or 'float64'");
  if (eval_seeds.empty()) config_error("eval_seeds must not be empty");
  if (sweep_m_plus.empty() || sweep_m_minus.empty() || sweep_hops.empty())
    config_error("sweep grids must not be empty");
  for (int k : sweep_hops)
    if (k < 0 || k > 16) config_error("sweep_hops entries must lie in [0, 16]");
  if (out_dir.empty()) config_error("out_dir must not be empty");
  model_config().validate();
}

RunConfig parse_config_json(const std::string& text, RunConfig base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("config file: ") + e.what());
  }
  if (!j.is_object()) config_error("config file must hold a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    try {
      if (key == "command") {
        base.command = it->get<std::string>();
        continue;
      }
#define KGPFN_FROM_JSON(name)          \
  if (key == #name) {                  \
    it->get_to(base.name);             \
    continue;                          \
  }
      KGPFN_RUN_CONFIG_FIELDS(KGPFN_FROM_JSON)
#undef KGPFN_FROM_JSON
    } catch (const nlohmann::json::exception& e) {
      config_error("config key '" + key + "': " + e.what());
    }
    config_error("unknown config key '" + key + "'");
  }
  return base;
}

std::string config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["command"] = c.command;
#define KGPFN_TO_JSON(name) j[#name] = c.name;
  KGPFN_RUN_CONFIG_FIELDS(KGPFN_TO_JSON)
#undef KGPFN_TO_JSON
  return j.dump(2);
}

template <typename V>
void list_option(CLI::Option*, const V&) {}
template <typename V>
void list_option(CLI::Option* option, const std::vector<V>&) {
  option->delimiter(',');
}

RunConfig parse_config(int argc, const char* const* argv) {
  CLI::App app{"kgpfn: in-context link prediction on knowledge graphs"};
  app.set_help_all_flag("--help-all");
  RunConfig flags;
  std::string command, config_path;
  app.add_option("command", command, "ingest|train|eval|sweep|theory-check|export-attention|gradcheck")
      ->required();
  app.add_option("--config", config_path, "JSON config file");
#define KGPFN_ADD_FLAG(name)                                                               \
  list_option(app.add_option("--" + kebab(#name) + (kebab(#name) == #name ? "" : ",--" #name), \
                             flags.name),                                                   \
              flags.name);
  KGPFN_RUN_CONFIG_FIELDS(KGPFN_ADD_FLAG)
#undef KGPFN_ADD_FLAG
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    throw;
  } catch (const CLI::ParseError& e) {
    config_error(e.what());
  }

  RunConfig config;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) fail(ErrorKind::kIo, "cannot open config " + config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    config = parse_config_json(ss.str(), config);
  }
#define KGPFN_OVERRIDE(name) \
  if (app.get_option("--" + kebab(#name))->count() > 0) config.name = flags.name;
  KGPFN_RUN_CONFIG_FIELDS(KGPFN_OVERRIDE)
#undef KGPFN_OVERRIDE
  config.command = command;
  config.validate();
  return config;
}

std::size_t resolve_threads(const RunConfig& config) {
  if (config.threads > 0) return config.threads;
  if (const char* env = std::getenv("KGPFN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      config_error(std::string("KGPFN_THREADS must be a positive integer, got '") + env + "'");
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace kgpfn::cli
