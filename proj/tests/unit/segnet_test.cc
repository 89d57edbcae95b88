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
#include "ulrseg/segnet.h"

#include <random>
#include <string>

#include <gtest/gtest.h>

#include "oracles/finite_difference.h"

namespace ulrseg::segnet {
namespace {

using nn::Var;

Tensor RandomImages(Shape s, uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor::RandomUniform(std::move(s), rng, 0.0, 1.0);
}

TEST(SegConfigTest, Validation) {
  EXPECT_NO_THROW(FullSegConfig(37).Validate());
  SegConfig c = TinySegConfig(4);
  c.aspp_rates = {6, 6};
  EXPECT_THROW(c.Validate(), InvalidArgument);
  c = TinySegConfig(4);
  c.aspp_rates = {};
  EXPECT_THROW(c.Validate(), InvalidArgument);
  c = TinySegConfig(1);
  EXPECT_THROW(c.Validate(), InvalidArgument);
  c = TinySegConfig(4);
  c.output_stride = 32;
  EXPECT_THROW(c.Validate(), InvalidArgument);
  EXPECT_EQ(ParseBackbone("full"), Backbone::kFull);
  EXPECT_THROW(ParseBackbone("huge"), InvalidArgument);
}

TEST(SegNetTest, TinyShapeContract) {
  for (int os : {8, 16}) {
    SegConfig c = TinySegConfig(4);
    c.output_stride = os;
    SegNet net = SegNet::Build(c, 1);
    nn::NoGradGuard guard;
    Var y = net.Forward(nn::Constant(RandomImages({2, 3, 32, 32}, 2)), true);
    EXPECT_EQ(y.shape(), (Shape{2, 4, 32, 32}));
    EXPECT_TRUE(y.value().AllFinite());
    EXPECT_EQ(net.Segment(RandomImages({3, 32, 48}, 3)).shape(),
              (Shape{4, 32, 48}));
  }
}

TEST(SegNetTest, RejectsIndivisibleInput) {
  SegNet net = SegNet::Build(TinySegConfig(4), 1);
  EXPECT_THROW(net.Forward(nn::Constant(Tensor({1, 3, 24, 24})), false),
               InvalidArgument);
  EXPECT_THROW(net.Forward(nn::Constant(Tensor({1, 4, 32, 32})), false),
               InvalidArgument);
}

TEST(SegNetTest, FullBackboneMatchesResNet101Count) {
  SegNet net = SegNet::Build(FullSegConfig(37), 1);
  int64_t backbone = 0;
  for (const auto& p : net.Params()) {
    if (p.name.rfind("stem", 0) == 0 || p.name.rfind("stage", 0) == 0) {
      backbone += p.var.value().numel();
    }
  }
  // ResNet-101 without its classifier has 42,500,160 parameters; the extra
  // strided 3x3 stem convolution (64 -> 64) and its normalization add 36,992.
  EXPECT_EQ(backbone, 42500160 + 36864 + 128);
}

TEST(SegNetTest, SeededAndDeterministic) {
  SegNet a = SegNet::Build(TinySegConfig(4), 5);
  SegNet b = SegNet::Build(TinySegConfig(4), 5);
  const Tensor img = RandomImages({3, 32, 32}, 6);
  EXPECT_TRUE(a.Segment(img) == b.Segment(img));
  EXPECT_TRUE(a.Segment(img) == a.Segment(img));
}

TEST(SegNetTest, RunningStatsUpdateOnlyWhenRecording) {
  SegNet net = SegNet::Build(TinySegConfig(4), 7);
  auto snapshot = [&net]() {
    std::vector<Tensor> out;
    for (const auto& b : net.Buffers()) out.push_back(*b.tensor);
    return out;
  };
  const auto before = snapshot();
  const Tensor x = RandomImages({2, 3, 32, 32}, 8);
  {
    nn::NoGradGuard guard;
    net.Forward(nn::Constant(x), true);
  }
  EXPECT_EQ(snapshot(), before);
  net.Forward(nn::Constant(x), false);
  EXPECT_EQ(snapshot(), before);
  net.Forward(nn::Constant(x), true);
  EXPECT_NE(snapshot(), before);
}

void CheckSegGradients(bool batch_stats) {
  SegConfig c = TinySegConfig(3);
  c.width = 4;
  c.aspp_channels = 4;
  c.low_level_channels = 4;
  c.decoder_channels = 4;
  c.output_stride = 8;
  SegNet net = SegNet::Build(c, 9);
  // With zero shifts, dead receptive fields put pre-activations exactly on the
  // ReLU kink, where central differences are meaningless.
  std::mt19937_64 shift_rng(13);
  for (const auto& p : net.Params()) {
    if (p.name.ends_with(".beta")) {
      Var v = p.var;
      v.mutable_value() = Tensor::RandomNormal(v.shape(), shift_rng, 0.1);
    }
  }
  Tensor x = RandomImages({2, 3, 16, 16}, 10);
  std::mt19937_64 rng(11);
  const Tensor proj = Tensor::RandomNormal({2, 3, 16, 16}, rng);
  Tensor base;
  {
    nn::NoGradGuard guard;
    base = net.Forward(nn::Constant(x), batch_stats).value();
  }
  Var xv = nn::Parameter(x);
  auto loss = [&](const Var& in) {
    return nn::Sum(nn::Mul(nn::Sub(net.Forward(in, batch_stats), nn::Constant(base)),
                           nn::Constant(proj)));
  };
  // Running statistics must not drift while probing.
  nn::BufferList buffers = net.Buffers();
  std::vector<Tensor> saved;
  for (const auto& b : buffers) saved.push_back(*b.tensor);
  nn::Backward(loss(xv));
  for (size_t i = 0; i < buffers.size(); ++i) *buffers[i].tensor = saved[i];

  auto f = [&]() {
    nn::NoGradGuard guard;
    return loss(nn::Constant(x)).value()[0];
  };
  const Tensor gx = xv.grad();
  auto rx = testing::CheckGradient(f, x, gx, 60, 1, 1e-6,
                                   std::max(1e-8, 1e-3 * gx.MaxAbs()));
  EXPECT_LT(rx.max_rel_error, 1e-4) << "input";
  for (const auto& p : net.Params()) {
    Var v = p.var;
    const Tensor g = v.grad();
    auto r = testing::CheckGradient(f, v.mutable_value(), g, 3, 2, 1e-6,
                                    std::max(1e-8, 1e-3 * g.MaxAbs()));
    EXPECT_LT(r.max_rel_error, 1e-4) << p.name;
  }
}

TEST(SegNetTest, GradientsMatchFiniteDifferencesBatchStats) {
  CheckSegGradients(true);
}

TEST(SegNetTest, GradientsMatchFiniteDifferencesRunningStats) {
  CheckSegGradients(false);
}

TEST(PredictLabelsTest, DominantChannel) {
  Tensor logits({4, 3, 3}, 0.0);
  for (int64_t i = 0; i < 9; ++i) logits[2 * 9 + i] = 1.0;
  const LabelMap m = PredictLabels(logits);
  for (int32_t v : m.data()) EXPECT_EQ(v, 2);
}

TEST(PredictLabelsTest, TiesGoToLowestIndex) {
  const LabelMap m = PredictLabels(Tensor({5, 2, 3}, 0.25));
  for (int32_t v : m.data()) EXPECT_EQ(v, 0);
  Tensor logits({3, 1, 1}, 0.0);
  logits[1] = 2.0;
  logits[2] = 2.0;
  EXPECT_EQ(PredictLabels(logits)[0], 1);
}

TEST(PredictLabelsTest, MatchesBruteForceAndShiftInvariance) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = Tensor::RandomNormal({4, 3, 3}, rng);
    const LabelMap m = PredictLabels(logits);
    for (int64_t i = 0; i < 9; ++i) {
      int32_t best = 0;
      for (int32_t k = 1; k < 4; ++k)
        if (logits[k * 9 + i] > logits[best * 9 + i]) best = k;
      EXPECT_EQ(m[i], best);
    }
    Tensor shifted = logits;
    for (int64_t i = 0; i < 9; ++i) {
      const double shift = std::uniform_real_distribution<double>(-5, 5)(rng);
      for (int k = 0; k < 4; ++k) shifted[k * 9 + i] += shift;
    }
    EXPECT_EQ(PredictLabels(shifted), m);
  }
}

}  // namespace
}  // namespace ulrseg::segnet
