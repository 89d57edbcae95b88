/* Copyright 2026 The ulrseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "ulrseg/checkpoint.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "ulrseg/hashing.h"

namespace ulrseg::checkpoint {
namespace {

std::filesystem::path TempPath(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ulrseg_ckpt_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

Checkpoint Sample() {
  std::mt19937_64 rng(4);
  Checkpoint c;
  c.config_text = "name = x\ntrain.lr = 0.0001\n";
  c.metadata["stage"] = "2";
  c.metadata["val_miou"] = "0.5";
  c.sections["generator"] = {{"w", Tensor::RandomNormal({2, 3, 3, 3}, rng)},
                             {"b", Tensor::RandomNormal({2}, rng)}};
  c.sections["optimizer"] = {{"m/w", Tensor::RandomNormal({4}, rng)}};
  c.sections["buffers"] = {{"scalar", Tensor({1}, 3.5)}, {"empty", Tensor({0})}};
  return c;
}

TEST(CheckpointTest, RoundTripIsExact) {
  const auto path = TempPath("rt.bin");
  const Checkpoint c = Sample();
  Save(c, path);
  const Checkpoint r = Load(path);
  EXPECT_EQ(r.format_version, kFormatVersion);
  EXPECT_EQ(r.config_text, c.config_text);
  EXPECT_EQ(r.metadata, c.metadata);
  ASSERT_EQ(r.sections.size(), c.sections.size());
  for (const auto& [name, tensors] : c.sections) {
    const auto& got = r.Section(name);
    ASSERT_EQ(got.size(), tensors.size());
    for (size_t i = 0; i < tensors.size(); ++i) {
      EXPECT_EQ(got[i].first, tensors[i].first);
      EXPECT_TRUE(got[i].second == tensors[i].second);
    }
  }
}

TEST(CheckpointTest, RefsAndCopiesWriteIdenticalBytes) {
  const Checkpoint c = Sample();
  CheckpointRefs refs;
  refs.config_text = c.config_text;
  refs.metadata = c.metadata;
  for (const auto& [name, tensors] : c.sections)
    for (const auto& [tname, t] : tensors) refs.sections[name].emplace_back(tname, &t);
  Save(c, TempPath("a.bin"));
  Save(refs, TempPath("b.bin"));
  EXPECT_EQ(Sha256File(TempPath("a.bin")), Sha256File(TempPath("b.bin")));
}

TEST(CheckpointTest, RejectsForeignAndTruncatedFiles) {
  const auto bogus = TempPath("bogus.bin");
  std::ofstream(bogus) << "definitely not a checkpoint";
  EXPECT_THROW(Load(bogus), std::runtime_error);
  EXPECT_THROW(Load(TempPath("missing.bin")), std::runtime_error);

  const auto path = TempPath("trunc.bin");
  Save(Sample(), path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 5);
  EXPECT_THROW(Load(path), std::runtime_error);
}

TEST(CheckpointTest, InferenceOnlyDropsTrainingState) {
  Checkpoint c = Sample();
  c.sections["discriminator"] = {{"d", Tensor({1}, 1.0)}};
  const Checkpoint inf = c.InferenceOnly();
  EXPECT_TRUE(inf.Has("generator"));
  EXPECT_TRUE(inf.Has("buffers"));
  EXPECT_FALSE(inf.Has("optimizer"));
  EXPECT_FALSE(inf.Has("discriminator"));
  EXPECT_EQ(inf.metadata.at("inference_only"), "true");
  EXPECT_EQ(inf.config_text, c.config_text);
}

TEST(CheckpointTest, RestoreChecksNamesAndShapes) {
  nn::ParamList params{{"w", nn::Parameter(Tensor({2}, 0.0))}};
  Restore({{"w", Tensor({2}, 7.0)}}, params, "net");
  EXPECT_EQ(params[0].var.value()[1], 7.0);
  EXPECT_THROW(Restore({{"w", Tensor({3}, 1.0)}}, params, "net"),
               std::runtime_error);
  EXPECT_THROW(Restore({{"v", Tensor({2}, 1.0)}}, params, "net"),
               std::runtime_error);
  Tensor buf({1}, 0.0);
  nn::BufferList buffers{{"b", &buf}};
  Restore({{"b", Tensor({1}, 2.0)}}, buffers, "net");
  EXPECT_EQ(buf[0], 2.0);
}

TEST(HashingTest, KnownVectors) {
  EXPECT_EQ(Sha256Hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(Sha256Hex(std::string_view("")),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const auto path = TempPath("abc.txt");
  std::ofstream(path, std::ios::binary) << "abc";
  EXPECT_EQ(Sha256File(path), Sha256Hex(std::string_view("abc")));
}

TEST(HashingTest, ParamHashTracksValues) {
  nn::ParamList params{{"w", nn::Parameter(Tensor({3}, 1.0))}};
  const std::string before = HashParams(params);
  EXPECT_EQ(before, HashParams(params));
  nn::Var(params[0].var).mutable_value()[2] = 1.0 + 1e-15;
  EXPECT_NE(before, HashParams(params));
}

}  // namespace
}  // namespace ulrseg::checkpoint
