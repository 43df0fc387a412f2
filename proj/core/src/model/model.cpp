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

#include "kgpfn/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace kgpfn {
namespace {

enum class Init { kXavier, kZero, kOne, kSmall, kUnit };

using Registrar =
    std::function<std::size_t(const std::string&, std::size_t, std::size_t, Init)>;

AttentionParams register_attention(const Registrar& reg, const std::string& prefix,
                                   std::size_t width) {
  AttentionParams a{};
  a.wq = reg(prefix + ".wq", width, width, Init::kXavier);
  a.wk = reg(prefix + ".wk", width, width, Init::kXavier);
  a.wv = reg(prefix + ".wv", width, width, Init::kXavier);
  a.wo = reg(prefix + ".wo", width, width, Init::kXavier);
  a.ln_gain = reg(prefix + ".ln_g", 1, width, Init::kOne);
  a.ln_bias = reg(prefix + ".ln_b", 1, width, Init::kZero);
  return a;
}

AdapterParams register_adapter(const Registrar& reg, const std::string& prefix,
                               std::size_t in, std::size_t out) {
  AdapterParams a{};
  a.w1 = reg(prefix + ".w1", in, out, Init::kXavier);
  a.b1 = reg(prefix + ".b1", 1, out, Init::kZero);
  a.w2 = reg(prefix + ".w2", out, out, Init::kXavier);
  a.b2 = reg(prefix + ".b2", 1, out, Init::kZero);
  a.ln_gain = reg(prefix + ".ln_g", 1, out, Init::kOne);
  a.ln_bias = reg(prefix + ".ln_b", 1, out, Init::kZero);
  return a;
}

ModelLayout build_layout(const ModelConfig& c, const Registrar& reg) {
  ModelLayout l{};
  const std::size_t d = c.dim, dp = c.adapter_dim, w = c.pfn_width();
  for (std::size_t i = 0; i < c.rel_layers; ++i) {
    const std::string p = "rel." + std::to_string(i);
    l.rel.push_back({reg(p + ".type", 4, d, Init::kUnit), reg(p + ".w", 2 * d, d, Init::kXavier),
                     reg(p + ".b", 1, d, Init::kZero), reg(p + ".ln_g", 1, d, Init::kOne),
                     reg(p + ".ln_b", 1, d, Init::kZero)});
  }
  for (std::size_t i = 0; i < c.nbf_layers; ++i) {
    const std::string p = "nbf." + std::to_string(i);
    l.nbf.push_back({reg(p + ".w", 2 * d, d, Init::kXavier), reg(p + ".b", 1, d, Init::kZero),
                     reg(p + ".ln_g", 1, d, Init::kOne), reg(p + ".ln_b", 1, d, Init::kZero)});
  }
  const std::size_t th = c.tail_hidden_dim();
  l.tail_w1 = reg("tail.w1", d + 3, th, Init::kXavier);
  l.tail_b1 = reg("tail.b1", 1, th, Init::kZero);
  l.tail_w2 = reg("tail.w2", th, d, Init::kXavier);
  l.tail_b2 = reg("tail.b2", 1, d, Init::kZero);
  l.multi_scale = register_adapter(reg, "adapter.ms", d, dp);
  l.triple = register_adapter(reg, "adapter.triple", 3 * d, dp);
  l.score = register_adapter(reg, "adapter.score", 2 * d + 1, dp);
  l.layer_offsets = reg("adapter.layer_offsets", c.nbf_layers, dp, Init::kSmall);
  l.label_embedding = reg("label_embedding", 3, dp, Init::kSmall);
  l.feature = register_attention(reg, "feat_attn", dp);
  for (std::size_t i = 0; i < c.pfn_layers; ++i) {
    const std::string p = "pfn." + std::to_string(i);
    l.sample_self.push_back(register_attention(reg, p + ".self", w));
    l.sample_cross.push_back(register_attention(reg, p + ".cross", w));
  }
  l.final_ln_gain = reg("head.ln_g", 1, w, Init::kOne);
  l.final_ln_bias = reg("head.ln_b", 1, w, Init::kZero);
  l.score_w = reg("head.w", w, 1, Init::kXavier);
  l.score_b = reg("head.b", 1, 1, Init::kZero);
  l.residual_w = reg("head.res_w", w, 1, Init::kXavier);
  l.residual_b = reg("head.res_b", 1, 1, Init::kZero);
  return l;
}

}  // namespace

std::string to_string(PositionalMode mode) {
  return mode == PositionalMode::kRope ? "rope" : "none";
}

PositionalMode positional_mode_from_string(const std::string& name) {
  if (name == "rope") return PositionalMode::kRope;
  if (name == "none") return PositionalMode::kNone;
  fail(ErrorKind::kConfig, "positional mode must be 'rope' or 'none', got '" + name + "'");
}

void ModelConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::kConfig, what);
  };
  check(dim >= 1, "dim must be >= 1");
  check(nbf_layers >= 1, "nbf_layers must be >= 1");
  check(hops >= 0, "hops must be >= 0");
  check(node_cap >= 1, "node_cap must be >= 1");
  check(adapter_dim >= 1, "adapter_dim must be >= 1");
  check(feature_heads >= 1 && adapter_dim % feature_heads == 0,
        "adapter_dim must be divisible by feature_heads");
  check(pfn_heads >= 1 && pfn_width() % pfn_heads == 0,
        "3 * adapter_dim must be divisible by pfn_heads");
  check(pfn_layers >= 1, "pfn_layers must be >= 1");
  if (positional == PositionalMode::kRope)
    check((pfn_width() / pfn_heads) % 2 == 0, "rotary head dimension must be even");
  check(rope_base > 1.0, "rope_base must be > 1");
}

template <typename T>
ModelParams<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams<T> model;
  model.config = config;
  std::mt19937_64 rng(seed);
  Registrar reg = [&](const std::string& name, std::size_t rows, std::size_t cols, Init init) {
    ad::Tensor<T> t = ad::Tensor<T>::matrix(rows, cols);
    switch (init) {
      case Init::kXavier: {
        const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
        std::uniform_real_distribution<double> u(-a, a);
        for (auto& v : t.storage()) v = static_cast<T>(u(rng));
        break;
      }
      case Init::kUnit: {
        std::uniform_real_distribution<double> u(-std::sqrt(3.0), std::sqrt(3.0));
        for (auto& v : t.storage()) v = static_cast<T>(u(rng));
        break;
      }
      case Init::kSmall: {
        std::normal_distribution<double> n(0.0, 0.1);
        for (auto& v : t.storage()) v = static_cast<T>(n(rng));
        break;
      }
      case Init::kOne: t.fill(T(1)); break;
      case Init::kZero: break;
    }
    return model.params.add(name, std::move(t));
  };
  model.layout = build_layout(config, reg);
  return model;
}

ModelLayout layout_for(const ModelConfig& config, const std::vector<std::string>& names) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < names.size(); ++i) index.emplace(names[i], i);
  Registrar reg = [&](const std::string& name, std::size_t, std::size_t, Init) {
    auto it = index.find(name);
    if (it == index.end()) fail(ErrorKind::kConfig, "checkpoint lacks parameter " + name);
    return it->second;
  };
  return build_layout(config, reg);
}

CheckpointPaths CheckpointPaths::in(const std::filesystem::path& dir) {
  return {dir / "checkpoint.json", dir / "checkpoint.bin"};
}

namespace {

constexpr int kFormatVersion = 1;

nlohmann::json config_json(const ModelConfig& c) {
  return {{"dim", c.dim},
          {"nbf_layers", c.nbf_layers},
          {"rel_layers", c.rel_layers},
          {"hops", c.hops},
          {"node_cap", c.node_cap},
          {"adapter_dim", c.adapter_dim},
          {"feature_heads", c.feature_heads},
          {"pfn_layers", c.pfn_layers},
          {"pfn_heads", c.pfn_heads},
          {"positional", to_string(c.positional)},
          {"rope_base", c.rope_base},
          {"residual_score", c.residual_score},
          {"tail_hidden", c.tail_hidden},
          {"mask_query_edges", c.mask_query_edges},
          {"linear_diagnostic", c.linear_diagnostic}};
}

ModelConfig config_from(const nlohmann::json& j) {
  ModelConfig c;
  c.dim = j.at("dim");
  c.nbf_layers = j.at("nbf_layers");
  c.rel_layers = j.at("rel_layers");
  c.hops = j.at("hops");
  c.node_cap = j.at("node_cap");
  c.adapter_dim = j.at("adapter_dim");
  c.feature_heads = j.at("feature_heads");
  c.pfn_layers = j.at("pfn_layers");
  c.pfn_heads = j.at("pfn_heads");
  c.positional = positional_mode_from_string(j.at("positional"));
  c.rope_base = j.at("rope_base");
  c.residual_score = j.at("residual_score");
  c.tail_hidden = j.at("tail_hidden");
  c.mask_query_edges = j.at("mask_query_edges");
  c.linear_diagnostic = j.value("linear_diagnostic", false);
  return c;
}

template <typename U>
void write_little_endian(std::ofstream& out, U value) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint writer assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(&value), sizeof(U));
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) {
  return config_json(config).dump(2);
}

ModelConfig model_config_from_json(const std::string& text) {
  try {
    return config_from(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("model config: ") + e.what());
  }
}

template <typename T>
void save_checkpoint(const ModelParams<T>& model, const CheckpointPaths& paths) {
  if (paths.manifest.has_parent_path())
    std::filesystem::create_directories(paths.manifest.parent_path());
  std::ofstream data(paths.data, std::ios::binary);
  if (!data) fail(ErrorKind::kIo, "cannot write " + paths.data.string());
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto& t = model.params.at(i);
    for (T v : t.storage()) write_little_endian(data, v);
    tensors.push_back({{"name", model.params.name(i)},
                       {"shape", t.shape()},
                       {"offset", offset},
                       {"count", t.size()}});
    offset += t.size() * sizeof(T);
  }
  nlohmann::json manifest = {{"format_version", kFormatVersion},
                             {"precision", sizeof(T) == 4 ? "float32" : "float64"},
                             {"data_file", paths.data.filename().string()},
                             {"config", config_json(model.config)},
                             {"tensors", tensors}};
  std::ofstream out(paths.manifest);
  if (!out) fail(ErrorKind::kIo, "cannot write " + paths.manifest.string());
  out << manifest.dump(2) << '\n';
}

template <typename T>
ModelParams<T> load_checkpoint(const CheckpointPaths& paths) {
  std::ifstream in(paths.manifest);
  if (!in) fail(ErrorKind::kIo, "missing checkpoint " + paths.manifest.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("checkpoint manifest: ") + e.what());
  }
  if (manifest.value("format_version", 0) != kFormatVersion)
    fail(ErrorKind::kParse, "unsupported checkpoint format version");
  const std::string precision = manifest.at("precision");
  const std::size_t width = precision == "float32" ? 4 : 8;
  std::ifstream data(paths.data, std::ios::binary);
  if (!data) fail(ErrorKind::kIo, "missing checkpoint data " + paths.data.string());

  ModelParams<T> model;
  model.config = config_from(manifest.at("config"));
  std::vector<std::string> names;
  for (const auto& entry : manifest.at("tensors")) {
    const std::vector<std::size_t> shape = entry.at("shape");
    const std::size_t count = entry.at("count");
    const std::size_t offset = entry.at("offset");
    data.seekg(static_cast<std::streamoff>(offset));
    std::vector<T> values(count);
    for (auto& v : values) {
      if (width == 4) {
        float f;
        data.read(reinterpret_cast<char*>(&f), 4);
        v = static_cast<T>(f);
      } else {
        double f;
        data.read(reinterpret_cast<char*>(&f), 8);
        v = static_cast<T>(f);
      }
    }
    if (!data) fail(ErrorKind::kParse, "checkpoint data file is truncated");
    names.push_back(entry.at("name"));
    model.params.add(names.back(), ad::Tensor<T>(shape, std::move(values)));
  }
  model.layout = layout_for(model.config, names);
  return model;
}

template ModelParams<float> init_model<float>(const ModelConfig&, std::uint64_t);
template ModelParams<double> init_model<double>(const ModelConfig&, std::uint64_t);
template void save_checkpoint<float>(const ModelParams<float>&, const CheckpointPaths&);
template void save_checkpoint<double>(const ModelParams<double>&, const CheckpointPaths&);
template ModelParams<float> load_checkpoint<float>(const CheckpointPaths&);
template ModelParams<double> load_checkpoint<double>(const CheckpointPaths&);

}  // namespace kgpfn
