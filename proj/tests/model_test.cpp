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

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "kgpfn/error.hpp"
#include "kgpfn/model.hpp"
#include "test_support.hpp"

namespace kgpfn {
namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("kgpfn_model_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::kIo;
}

template <typename A, typename B>
void expect_same_params(const ModelParams<A>& a, const ModelParams<B>& b, double tol) {
  ASSERT_EQ(a.params.size(), b.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    ASSERT_EQ(a.params.name(i), b.params.name(i));
    ASSERT_EQ(a.params.at(i).shape(), b.params.at(i).shape());
    for (std::size_t k = 0; k < a.params.at(i).size(); ++k)
      ASSERT_NEAR(static_cast<double>(a.params.at(i)[k]), static_cast<double>(b.params.at(i)[k]),
                  tol)
          << a.params.name(i);
  }
}

TEST(Model, InitIsSeeded) {
  const auto c = testing::tiny_config();
  const auto a = init_model<double>(c, 1);
  const auto b = init_model<double>(c, 1);
  const auto d = init_model<double>(c, 2);
  expect_same_params(a, b, 0.0);
  bool differs = false;
  for (std::size_t i = 0; i < a.params.size(); ++i)
    for (std::size_t k = 0; k < a.params.at(i).size(); ++k)
      differs |= a.params.at(i)[k] != d.params.at(i)[k];
  EXPECT_TRUE(differs);
  EXPECT_EQ(a.layout.nbf.size(), c.nbf_layers);
  EXPECT_EQ(a.layout.rel.size(), c.rel_layers);
  EXPECT_EQ(a.layout.sample_cross.size(), c.pfn_layers);
}

TEST(Model, CheckpointRoundTripDouble) {
  const auto dir = scratch("f64");
  const auto m = init_model<double>(testing::tiny_config(), 3);
  save_checkpoint(m, CheckpointPaths::in(dir));
  const auto back = load_checkpoint<double>(CheckpointPaths::in(dir));
  expect_same_params(m, back, 0.0);
  EXPECT_EQ(model_config_to_json(back.config), model_config_to_json(m.config));
  EXPECT_EQ(back.layout.score_w, m.layout.score_w);
}

TEST(Model, CheckpointRoundTripFloatAndCrossPrecision) {
  const auto dir = scratch("f32");
  const auto m = init_model<float>(testing::tiny_config(), 4);
  save_checkpoint(m, CheckpointPaths::in(dir));
  expect_same_params(m, load_checkpoint<float>(CheckpointPaths::in(dir)), 0.0);
  // Float values widen exactly.
  expect_same_params(m, load_checkpoint<double>(CheckpointPaths::in(dir)), 0.0);

  const auto dir64 = scratch("narrow");
  const auto wide = init_model<double>(testing::tiny_config(), 4);
  save_checkpoint(wide, CheckpointPaths::in(dir64));
  expect_same_params(wide, load_checkpoint<float>(CheckpointPaths::in(dir64)), 1e-6);
}

TEST(Model, MissingOrBrokenCheckpoint) {
  const auto dir = scratch("missing");
  EXPECT_EQ(kind_of([&] { load_checkpoint<float>(CheckpointPaths::in(dir)); }), ErrorKind::kIo);
  std::ofstream(dir / "checkpoint.json") << "{not json";
  EXPECT_EQ(kind_of([&] { load_checkpoint<float>(CheckpointPaths::in(dir)); }),
            ErrorKind::kParse);

  const auto trunc = scratch("trunc");
  save_checkpoint(init_model<double>(testing::tiny_config(), 0), CheckpointPaths::in(trunc));
  std::filesystem::resize_file(trunc / "checkpoint.bin", 16);
  EXPECT_EQ(kind_of([&] { load_checkpoint<double>(CheckpointPaths::in(trunc)); }),
            ErrorKind::kParse);
}

TEST(Model, ConfigJsonRoundTrip) {
  ModelConfig c = testing::tiny_config();
  c.positional = PositionalMode::kNone;
  c.residual_score = false;
  c.rope_base = 500.0;
  c.linear_diagnostic = true;
  const auto back = model_config_from_json(model_config_to_json(c));
  EXPECT_EQ(back.dim, c.dim);
  EXPECT_EQ(back.positional, PositionalMode::kNone);
  EXPECT_FALSE(back.residual_score);
  EXPECT_DOUBLE_EQ(back.rope_base, 500.0);
  EXPECT_TRUE(back.linear_diagnostic);
  EXPECT_EQ(model_config_to_json(back), model_config_to_json(c));
  EXPECT_EQ(kind_of([] { model_config_from_json("{\"dim\": 3}"); }), ErrorKind::kConfig);
}

TEST(Model, Validation) {
  auto bad = [](auto edit) {
    ModelConfig c = testing::tiny_config();
    edit(c);
    return kind_of([&] { c.validate(); });
  };
  EXPECT_EQ(bad([](ModelConfig& c) { c.dim = 0; }), ErrorKind::kConfig);
  EXPECT_EQ(bad([](ModelConfig& c) { c.hops = -1; }), ErrorKind::kConfig);
  EXPECT_EQ(bad([](ModelConfig& c) { c.feature_heads = 3; }), ErrorKind::kConfig);
  EXPECT_EQ(bad([](ModelConfig& c) { c.pfn_heads = 5; }), ErrorKind::kConfig);
  EXPECT_EQ(bad([](ModelConfig& c) { c.rope_base = 1.0; }), ErrorKind::kConfig);
  // 3 * 4 / 12 = 1 is odd: fine without rotary positions, rejected with them.
  EXPECT_EQ(bad([](ModelConfig& c) { c.pfn_heads = 12; }), ErrorKind::kConfig);
  ModelConfig ok = testing::tiny_config();
  ok.pfn_heads = 12;
  ok.positional = PositionalMode::kNone;
  EXPECT_NO_THROW(ok.validate());
  EXPECT_NO_THROW(ModelConfig{}.validate());
}

TEST(Model, PositionalModeStrings) {
  EXPECT_EQ(positional_mode_from_string("rope"), PositionalMode::kRope);
  EXPECT_EQ(positional_mode_from_string("none"), PositionalMode::kNone);
  EXPECT_EQ(to_string(PositionalMode::kRope), "rope");
  EXPECT_EQ(kind_of([] { positional_mode_from_string("sinusoid"); }), ErrorKind::kConfig);
}

TEST(Model, DerivedWidths) {
  ModelConfig c;
  EXPECT_EQ(c.pfn_width(), 192u);
  EXPECT_EQ(c.tokens(), 8u);
  EXPECT_EQ(c.tail_hidden_dim(), 64u);
  c.tail_hidden = 7;
  EXPECT_EQ(c.tail_hidden_dim(), 7u);
}

}  // namespace
}  // namespace kgpfn
