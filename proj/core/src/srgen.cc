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

namespace ulrseg::srgen {
namespace {

constexpr double kSlope = 0.2;
constexpr nn::ConvOptions kSame{1, 1, 1};

}  // namespace

void GeneratorConfig::Validate() const {
  if (num_rrdb < 1 || dense_blocks_per_rrdb < 1 || convs_per_dense_block < 1 ||
      base_channels < 1 || growth_channels < 1 || lr_size < 1) {
    throw InvalidArgument("generator counts and widths must be >= 1");
  }
  if (!(residual_scale > 0.0 && residual_scale <= 1.0)) {
    throw InvalidArgument("residual_scale must lie in (0, 1]");
  }
  if (upsample_stages.empty()) {
    throw InvalidArgument("upsample_stages must not be empty");
  }
  int64_t product = 1;
  for (int f : upsample_stages) {
    if (f < 1) throw InvalidArgument("upsample factors must be >= 1");
    product *= f;
  }
  if (product != scale) {
    throw InvalidArgument("upsample stages multiply to " +
                          std::to_string(product) + " but scale is " +
                          std::to_string(scale));
  }
}

GeneratorConfig FullGeneratorConfig() { return GeneratorConfig(); }

GeneratorConfig ToyGeneratorConfig() {
  GeneratorConfig c;
  c.num_rrdb = 2;
  c.dense_blocks_per_rrdb = 2;
  c.convs_per_dense_block = 3;
  c.base_channels = 16;
  c.growth_channels = 8;
  c.upsample_stages = {2, 2};
  c.lr_size = 8;
  c.scale = 4;
  return c;
}

Generator Generator::Build(const GeneratorConfig& cfg, uint64_t seed) {
  cfg.Validate();
  std::mt19937_64 rng(seed);
  const int64_t nf = cfg.base_channels, gc = cfg.growth_channels;
  Generator g;
  g.cfg_ = cfg;
  g.conv_first_ = nn::Conv2dLayer::Create(3, nf, 3, kSame, true, rng);
  for (int r = 0; r < cfg.num_rrdb; ++r) {
    Rrdb rrdb;
    for (int b = 0; b < cfg.dense_blocks_per_rrdb; ++b) {
      DenseBlock db;
      const int n = cfg.convs_per_dense_block;
      for (int k = 0; k < n; ++k) {
        const int64_t out = k + 1 < n ? gc : nf;
        // Small residual branches keep the deep trunk near identity at init.
        db.convs.push_back(nn::Conv2dLayer::Create(nf + k * gc, out, 3, kSame,
                                                   true, rng, 0.1));
      }
      rrdb.blocks.push_back(std::move(db));
    }
    g.trunk_.push_back(std::move(rrdb));
  }
  g.trunk_conv_ = nn::Conv2dLayer::Create(nf, nf, 3, kSame, true, rng);
  for (size_t s = 0; s < cfg.upsample_stages.size(); ++s) {
    g.up_convs_.push_back(nn::Conv2dLayer::Create(nf, nf, 3, kSame, true, rng));
  }
  g.hr_conv_ = nn::Conv2dLayer::Create(nf, nf, 3, kSame, true, rng);
  g.conv_last_ = nn::Conv2dLayer::Create(nf, 3, 3, kSame, true, rng, 0.1);
  g.conv_last_.bias.mutable_value().Fill(0.5);
  return g;
}

nn::Var Generator::DenseForward(const DenseBlock& db, const nn::Var& x) const {
  std::vector<nn::Var> features{x};
  const size_t n = db.convs.size();
  for (size_t k = 0; k + 1 < n; ++k) {
    features.push_back(
        nn::LeakyRelu(db.convs[k](nn::ConcatChannels(features)), kSlope));
  }
  nn::Var last = db.convs[n - 1](nn::ConcatChannels(features));
  return nn::Add(x, nn::Scale(last, cfg_.residual_scale));
}

nn::Var Generator::Forward(const nn::Var& lr) const {
  const Shape& s = lr.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != cfg_.lr_size ||
      s[3] != cfg_.lr_size) {
    throw InvalidArgument("generator expects (N, 3, " +
                          std::to_string(cfg_.lr_size) + ", " +
                          std::to_string(cfg_.lr_size) + "), got " +
                          ShapeToString(s));
  }
  nn::Var fea = conv_first_(lr);
  nn::Var trunk = fea;
  for (const Rrdb& rrdb : trunk_) {
    nn::Var h = trunk;
    for (const DenseBlock& db : rrdb.blocks) h = DenseForward(db, h);
    trunk = nn::Add(trunk, nn::Scale(h, cfg_.residual_scale));
  }
  fea = nn::Add(fea, trunk_conv_(trunk));
  for (size_t i = 0; i < up_convs_.size(); ++i) {
    fea = nn::LeakyRelu(
        up_convs_[i](nn::UpsampleNearest(fea, cfg_.upsample_stages[i])),
        kSlope);
  }
  nn::Var out = conv_last_(nn::LeakyRelu(hr_conv_(fea), kSlope));
  return nn::Clamp(out, 0.0, 1.0);
}

Tensor Generator::Generate(const Tensor& lr) const {
  if (lr.ndim() != 3) {
    throw InvalidArgument("Generate expects a (3, s, s) image, got " +
                          ShapeToString(lr.shape()));
  }
  nn::NoGradGuard guard;
  Tensor x = lr.Reshaped({1, lr.dim(0), lr.dim(1), lr.dim(2)});
  return Unstack(Forward(nn::Constant(std::move(x))).value(), 0);
}

nn::ParamList Generator::Params() const {
  nn::ParamList out;
  conv_first_.AddParams("conv_first", out);
  for (size_t r = 0; r < trunk_.size(); ++r)
    for (size_t b = 0; b < trunk_[r].blocks.size(); ++b)
      for (size_t k = 0; k < trunk_[r].blocks[b].convs.size(); ++k) {
        trunk_[r].blocks[b].convs[k].AddParams(
            "rrdb" + std::to_string(r) + ".db" + std::to_string(b) + ".conv" +
                std::to_string(k),
            out);
      }
  trunk_conv_.AddParams("trunk_conv", out);
  for (size_t i = 0; i < up_convs_.size(); ++i)
    up_convs_[i].AddParams("up" + std::to_string(i), out);
  hr_conv_.AddParams("hr_conv", out);
  conv_last_.AddParams("conv_last", out);
  return out;
}

}  // namespace ulrseg::srgen
