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
#include "ulrseg/srgen.h"

#include <random>
#include <string>

#include <gtest/gtest.h>

#include "oracles/finite_difference.h"

namespace ulrseg::srgen {
namespace {

using nn::Var;

int64_t ConvCount(int64_t in, int64_t out) { return in * out * 9 + out; }

// Layer-shape formula for the parameter count.
int64_t HandCount(const GeneratorConfig& c) {
  const int64_t nf = c.base_channels, gc = c.growth_channels;
  int64_t dense = 0;
  for (int k = 0; k < c.convs_per_dense_block; ++k) {
    dense += ConvCount(nf + k * gc, k + 1 < c.convs_per_dense_block ? gc : nf);
  }
  return ConvCount(3, nf) +
         int64_t{c.num_rrdb} * c.dense_blocks_per_rrdb * dense +
         ConvCount(nf, nf) * (2 + static_cast<int64_t>(c.upsample_stages.size())) +
         ConvCount(nf, 3);
}

Tensor RandomLr(const GeneratorConfig& c, int64_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor::RandomUniform({n, 3, c.lr_size, c.lr_size}, rng, 0.0, 1.0);
}

TEST(GeneratorConfigTest, FullConfigIsValid) {
  const GeneratorConfig c = FullGeneratorConfig();
  EXPECT_NO_THROW(c.Validate());
  EXPECT_EQ(c.num_rrdb, 23);
  EXPECT_EQ(c.dense_blocks_per_rrdb, 3);
  EXPECT_EQ(c.convs_per_dense_block, 5);
  EXPECT_EQ(c.hr_size(), 384);
}

TEST(GeneratorConfigTest, RejectsStageMismatch) {
  GeneratorConfig c = ToyGeneratorConfig();
  c.upsample_stages = {2, 3};
  EXPECT_THROW(c.Validate(), InvalidArgument);
  EXPECT_THROW(Generator::Build(c, 1), InvalidArgument);
  c = ToyGeneratorConfig();
  c.num_rrdb = 0;
  EXPECT_THROW(c.Validate(), InvalidArgument);
}

TEST(GeneratorTest, ParameterCountMatchesLayerFormula) {
  const GeneratorConfig toy = ToyGeneratorConfig();
  EXPECT_EQ(nn::CountParameters(Generator::Build(toy, 3).Params()), HandCount(toy));
  const GeneratorConfig full = FullGeneratorConfig();
  EXPECT_EQ(nn::CountParameters(Generator::Build(full, 3).Params()),
            HandCount(full));
}

TEST(GeneratorTest, SeededInitialization) {
  const Generator a = Generator::Build(ToyGeneratorConfig(), 9);
  const Generator b = Generator::Build(ToyGeneratorConfig(), 9);
  const Generator c = Generator::Build(ToyGeneratorConfig(), 10);
  const auto pa = a.Params(), pb = b.Params(), pc = c.Params();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_TRUE(pa[i].var.value() == pb[i].var.value()) << pa[i].name;
    any_diff |= !(pa[i].var.value() == pc[i].var.value());
  }
  EXPECT_TRUE(any_diff);
}

TEST(GeneratorTest, OutputShapeAndRange) {
  const GeneratorConfig c = ToyGeneratorConfig();
  const Generator g = Generator::Build(c, 1);
  nn::NoGradGuard guard;
  std::mt19937_64 rng(2);
  Var y = g.Forward(nn::Constant(Tensor::RandomNormal({2, 3, 8, 8}, rng, 20.0)));
  EXPECT_EQ(y.shape(), (Shape{2, 3, 32, 32}));
  for (double v : y.value().data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(g.Generate(Unstack(RandomLr(c, 1, 3), 0)).shape(), (Shape{3, 32, 32}));
}

TEST(GeneratorTest, RejectsWrongInputShape) {
  const Generator g = Generator::Build(ToyGeneratorConfig(), 1);
  EXPECT_THROW(g.Forward(nn::Constant(Tensor({1, 3, 16, 16}))), InvalidArgument);
  EXPECT_THROW(g.Forward(nn::Constant(Tensor({1, 1, 8, 8}))), InvalidArgument);
}

TEST(GeneratorTest, DeterministicForward) {
  const Generator g = Generator::Build(ToyGeneratorConfig(), 4);
  const Tensor x = Unstack(RandomLr(ToyGeneratorConfig(), 1, 5), 0);
  EXPECT_TRUE(g.Generate(x) == g.Generate(x));
}

TEST(GeneratorTest, ZeroedResidualBranchesLeaveUpsamplingPath) {
  const GeneratorConfig c = ToyGeneratorConfig();
  const Generator g = Generator::Build(c, 6);
  const std::string last = ".conv" + std::to_string(c.convs_per_dense_block - 1) + ".";
  Var conv_first_w, conv_first_b, hr_w, hr_b, last_w, last_b;
  std::vector<Var> up_w, up_b;
  for (const auto& p : g.Params()) {
    const std::string& n = p.name;
    Var v = p.var;
    if (n.find(last) != std::string::npos || n.rfind("trunk_conv", 0) == 0) {
      v.mutable_value().Fill(0.0);
    }
    if (n == "conv_first.weight") conv_first_w = v;
    if (n == "conv_first.bias") conv_first_b = v;
    if (n == "hr_conv.weight") hr_w = v;
    if (n == "hr_conv.bias") hr_b = v;
    if (n == "conv_last.weight") last_w = v;
    if (n == "conv_last.bias") last_b = v;
    if (n.rfind("up", 0) == 0 && n.find(".weight") != std::string::npos) up_w.push_back(v);
    if (n.rfind("up", 0) == 0 && n.find(".bias") != std::string::npos) up_b.push_back(v);
  }
  nn::NoGradGuard guard;
  Var x = nn::Constant(RandomLr(c, 1, 7));
  const nn::ConvOptions same{1, 1, 1};
  Var fea = nn::Conv2d(x, conv_first_w, conv_first_b, same);
  for (size_t i = 0; i < up_w.size(); ++i) {
    fea = nn::LeakyRelu(nn::Conv2d(nn::UpsampleNearest(fea, c.upsample_stages[i]),
                                   up_w[i], up_b[i], same),
                        0.2);
  }
  Var expect = nn::Clamp(
      nn::Conv2d(nn::LeakyRelu(nn::Conv2d(fea, hr_w, hr_b, same), 0.2), last_w,
                 last_b, same),
      0.0, 1.0);
  EXPECT_TRUE(g.Forward(x).value() == expect.value());
}

TEST(GeneratorTest, InputGradientMatchesFiniteDifferences) {
  const GeneratorConfig c = ToyGeneratorConfig();
  const Generator g = Generator::Build(c, 8);
  Tensor x = RandomLr(c, 1, 9);
  Var xv = nn::Parameter(x);
  nn::Backward(nn::Mean(g.Forward(xv)));
  const Tensor analytic = xv.grad();
  for (double v : analytic.data()) EXPECT_NE(v, 0.0);
  auto f = [&]() {
    nn::NoGradGuard guard;
    return nn::Mean(g.Forward(nn::Constant(x))).value()[0];
  };
  auto r = testing::CheckGradient(f, x, analytic, 0, 1, 1e-6, 1e-8);
  EXPECT_LT(r.max_rel_error, 1e-4) << "worst " << r.worst_index;
}

TEST(GeneratorTest, ParameterGradientsMatchFiniteDifferences) {
  const GeneratorConfig c = ToyGeneratorConfig();
  const Generator g = Generator::Build(c, 10);
  const Tensor x = RandomLr(c, 2, 11);
  std::mt19937_64 rng(12);
  const Tensor proj = Tensor::RandomNormal({2, 3, 32, 32}, rng);
  Tensor base;
  {
    nn::NoGradGuard guard;
    base = g.Forward(nn::Constant(x)).value();
  }
  // Centering on the unperturbed output keeps the checked scalar near zero,
  // so finite differences are not swamped by roundoff of a large sum.
  auto loss = [&]() {
    return nn::Sum(nn::Mul(nn::Sub(g.Forward(nn::Constant(x)), nn::Constant(base)),
                           nn::Constant(proj)));
  };
  nn::Backward(loss());
  int checked = 0;
  for (const auto& p : g.Params()) {
    if (p.name.find("rrdb1.db0") == std::string::npos &&
        p.name.rfind("conv_first", 0) != 0 && p.name.rfind("up1", 0) != 0 &&
        p.name.rfind("conv_last", 0) != 0) {
      continue;
    }
    Var v = p.var;
    const Tensor analytic = v.grad();
    auto f = [&]() {
      nn::NoGradGuard guard;
      return loss().value()[0];
    };
    const double floor = std::max(1e-8, 1e-3 * analytic.MaxAbs());
    auto r = testing::CheckGradient(f, v.mutable_value(), analytic, 6, 13,
                                    1e-6, floor);
    EXPECT_LT(r.max_rel_error, 1e-4) << p.name;
    ++checked;
  }
  EXPECT_GT(checked, 6);
}

}  // namespace
}  // namespace ulrseg::srgen
