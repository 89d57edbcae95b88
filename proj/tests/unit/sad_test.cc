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
#include "ulrseg/sad.h"

#include <cmath>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "oracles/finite_difference.h"
#include "oracles/svd_oracle.h"
#include "ulrseg/segnet.h"

namespace ulrseg::sad {
namespace {

using nn::Var;

Tensor Rand(Shape s, uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  return Tensor::RandomUniform(std::move(s), rng, lo, hi);
}

TEST(DiscConfigTest, Validation) {
  EXPECT_NO_THROW(DiscConfig().Validate());
  DiscConfig c;
  c.widths = {64, 128};
  EXPECT_THROW(c.Validate(), InvalidArgument);
  c = DiscConfig();
  c.power_iterations = 0;
  EXPECT_THROW(c.Validate(), InvalidArgument);
}

TEST(DiscriminatorTest, OneLogitPerSample) {
  Discriminator d = Discriminator::Build(ToyDiscConfig(), 7, 1);
  Var y = d.Forward(nn::Constant(Rand({2, 7, 32, 32}, 2)), false);
  EXPECT_EQ(y.shape(), (Shape{2}));
  EXPECT_TRUE(y.value().AllFinite());
  EXPECT_THROW(d.Forward(nn::Constant(Tensor({2, 6, 32, 32})), false),
               InvalidArgument);
}

TEST(DiscriminatorTest, FullWidthsAcceptThreePlusC) {
  Discriminator d = Discriminator::Build(DiscConfig(), 3 + 37, 1);
  EXPECT_EQ(d.in_channels(), 40);
  EXPECT_EQ(d.Params().front().var.shape(), (Shape{64, 40, 3, 3}));
}

TEST(DiscriminatorTest, ZeroHeadGivesZeroLogit) {
  Discriminator d = Discriminator::Build(ToyDiscConfig(), 7, 3);
  for (const auto& p : d.Params()) {
    if (p.name.rfind("fc.", 0) == 0) {
      Var v = p.var;
      v.mutable_value().Fill(0.0);
    }
  }
  Var y = d.Forward(nn::Constant(Rand({2, 7, 16, 16}, 4)), true);
  for (double v : y.value().data()) {
    EXPECT_EQ(v, 0.0);
    EXPECT_EQ(1.0 / (1.0 + std::exp(-v)), 0.5);
  }
}

TEST(DiscriminatorTest, EvaluationModeHasNoSideEffects) {
  Discriminator d = Discriminator::Build(ToyDiscConfig(), 4, 5);
  auto snapshot = [&d]() {
    std::vector<Tensor> out;
    for (const auto& b : d.Buffers()) out.push_back(*b.tensor);
    return out;
  };
  const auto before = snapshot();
  const Tensor z = Rand({1, 4, 16, 16}, 6);
  Var a = d.Forward(nn::Constant(z), false);
  EXPECT_EQ(snapshot(), before);
  EXPECT_TRUE(d.Forward(nn::Constant(z), false).value() == a.value());
  d.Forward(nn::Constant(z), true);
  EXPECT_NE(snapshot(), before);
}

TEST(DiscriminatorTest, GradientsMatchFiniteDifferences) {
  Discriminator d = Discriminator::Build(ToyDiscConfig(), 5, 7);
  Tensor z = Rand({2, 5, 16, 16}, 8, -1.0, 1.0);
  Var zv = nn::Parameter(z);
  auto logit_sum = [&](const Var& in) { return nn::Sum(d.Forward(in, false)); };
  nn::Backward(logit_sum(zv));
  auto f = [&]() {
    nn::NoGradGuard guard;
    return logit_sum(nn::Constant(z)).value()[0];
  };
  const Tensor gz = zv.grad();
  auto r = testing::CheckGradient(f, z, gz, 80, 1, 1e-6,
                                  std::max(1e-8, 1e-3 * gz.MaxAbs()));
  EXPECT_LT(r.max_rel_error, 1e-4) << "input";
  for (const auto& p : d.Params()) {
    Var v = p.var;
    const Tensor g = v.grad();
    auto rp = testing::CheckGradient(f, v.mutable_value(), g, 5, 2, 1e-6,
                                     std::max(1e-8, 1e-3 * g.MaxAbs()));
    EXPECT_LT(rp.max_rel_error, 1e-4) << p.name;
  }
}

TEST(DiscriminatorTest, NormalizedWeightsHaveUnitSpectralNorm) {
  Discriminator d = Discriminator::Build(ToyDiscConfig(), 7, 9);
  // Five training-mode passes give each weight five power iterations.
  const Tensor z = Rand({1, 7, 16, 16}, 10);
  for (int i = 0; i < 5; ++i) d.Forward(nn::Constant(z), true);
  const auto params = d.Params();
  const auto buffers = d.Buffers();
  size_t b = 0;
  for (const auto& p : params) {
    if (p.name.ends_with(".bias")) continue;
    nn::SpectralNormState st{*buffers[b].tensor, *buffers[b + 1].tensor};
    b += 2;
    const double sigma = nn::SigmaEstimate(p.var.value(), st);
    const double top = testing::TopSingularValue(p.var.value()) / sigma;
    EXPECT_GE(top, 0.95) << p.name;
    EXPECT_LE(top, 1.05) << p.name;
  }
  EXPECT_EQ(b, buffers.size());
  for (const auto& [name, s] : d.NormalizedSigmas()) {
    EXPECT_GT(s, 0.5) << name;
    EXPECT_LT(s, 2.0) << name;
  }
}

TEST(DiscriminatorTest, LipschitzProbe) {
  const DiscConfig cfg = ToyDiscConfig();
  Discriminator d = Discriminator::Build(cfg, 4, 11);
  EXPECT_DOUBLE_EQ(d.LipschitzBound(), std::pow(3.0, 2 * cfg.conv_blocks));
  const Tensor warm = Rand({1, 4, 16, 16}, 12);
  for (int i = 0; i < 200; ++i) d.Forward(nn::Constant(warm), true);
  std::mt19937_64 rng(13);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Tensor a = Tensor::RandomNormal({1, 4, 16, 16}, rng);
    Tensor b = a;
    b.AddInPlace(Tensor::RandomNormal({1, 4, 16, 16}, rng, t % 2 ? 1e-2 : 1.0));
    Tensor diff = b;
    diff.AddInPlace(a, -1.0);
    double norm = 0.0;
    for (double v : diff.data()) norm += v * v;
    const double gap = std::abs(d.Forward(nn::Constant(a), false).value()[0] -
                                d.Forward(nn::Constant(b), false).value()[0]);
    worst = std::max(worst, gap / std::sqrt(norm));
  }
  EXPECT_LE(worst, d.LipschitzBound() * (1.0 + 1e-9));
}

TEST(PairTest, RealPairStacksOnehot) {
  const Tensor hr = Rand({1, 3, 32, 32}, 14);
  LabelMap lab(32, 32, 1);
  lab[5] = 3;
  lab[6] = kIgnoreIndex;
  Var z = MakeRealPair(hr, {lab}, 4);
  EXPECT_EQ(z.shape(), (Shape{1, 7, 32, 32}));
  const int64_t hw = 32 * 32;
  for (int64_t i = 0; i < hw; ++i) {
    double sum = 0.0;
    for (int c = 3; c < 7; ++c) sum += z.value()[c * hw + i];
    EXPECT_EQ(sum, i == 6 ? 0.0 : 1.0);
    EXPECT_EQ(z.value()[i], hr[i]);
  }
  EXPECT_EQ(z.value()[(3 + 3) * hw + 5], 1.0);
  EXPECT_THROW(MakeRealPair(hr, {LabelMap(16, 16)}, 4), InvalidArgument);
  EXPECT_THROW(MakeRealPair(hr, {lab, lab}, 4), InvalidArgument);
}

TEST(PairTest, FakePairIsSoftmaxAndKeepsArgmax) {
  const Tensor sr = Rand({2, 3, 8, 8}, 15);
  std::mt19937_64 rng(16);
  const Tensor logits = Tensor::RandomNormal({2, 4, 8, 8}, rng, 3.0);
  Var z = MakeFakePair(nn::Constant(sr), nn::Constant(logits));
  ASSERT_EQ(z.shape(), (Shape{2, 7, 8, 8}));
  for (int64_t n = 0; n < 2; ++n) {
    Tensor probs({4, 8, 8});
    for (int64_t i = 0; i < 4 * 64; ++i) probs[i] = z.value()[(n * 7 + 3) * 64 + i];
    for (int64_t i = 0; i < 64; ++i) {
      double s = 0.0;
      for (int c = 0; c < 4; ++c) s += probs[c * 64 + i];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    Tensor own({4, 8, 8});
    for (int64_t i = 0; i < 4 * 64; ++i) own[i] = logits[n * 4 * 64 + i];
    EXPECT_EQ(segnet::PredictLabels(probs), segnet::PredictLabels(own));
  }
  EXPECT_THROW(MakeFakePair(nn::Constant(sr), nn::Constant(Tensor({2, 4, 4, 4}))),
               InvalidArgument);
}

TEST(PairTest, AdversarialGradientReachesBothInputs) {
  Discriminator d = Discriminator::Build(ToyDiscConfig(), 7, 17);
  Tensor sr = Rand({1, 3, 16, 16}, 18);
  std::mt19937_64 rng(19);
  Tensor logits = Tensor::RandomNormal({1, 4, 16, 16}, rng);
  auto score = [&]() {
    nn::NoGradGuard guard;
    return d.Forward(MakeFakePair(nn::Constant(sr), nn::Constant(logits)), false)
        .value()[0];
  };
  Var sv = nn::Parameter(sr), lv = nn::Parameter(logits);
  nn::Backward(nn::Sum(d.Forward(MakeFakePair(sv, lv), false)));
  const double dsr = testing::CentralDifference(score, sr, 37);
  const double dlog = testing::CentralDifference(score, logits, 300);
  EXPECT_NE(dsr, 0.0);
  EXPECT_NE(dlog, 0.0);
  EXPECT_LT(testing::RelativeError(sv.grad()[37], dsr, 1e-10), 1e-4);
  EXPECT_LT(testing::RelativeError(lv.grad()[300], dlog, 1e-10), 1e-4);
}

}  // namespace
}  // namespace ulrseg::sad
