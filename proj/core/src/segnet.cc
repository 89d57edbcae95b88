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

namespace ulrseg::segnet {
namespace {

std::string Idx(const std::string& base, size_t i) {
  return base + std::to_string(i);
}

}  // namespace

void SegConfig::Validate() const {
  if (num_classes < 2) throw InvalidArgument("num_classes must be >= 2");
  if (aspp_rates.empty()) throw InvalidArgument("aspp_rates must not be empty");
  for (size_t i = 0; i < aspp_rates.size(); ++i) {
    if (aspp_rates[i] < 1 || (i > 0 && aspp_rates[i] <= aspp_rates[i - 1])) {
      throw InvalidArgument("aspp_rates must be positive and strictly increasing");
    }
  }
  if (output_stride != 8 && output_stride != 16) {
    throw InvalidArgument("output_stride must be 8 or 16, got " +
                          std::to_string(output_stride));
  }
  if (width < 1 || aspp_channels < 1 || low_level_channels < 1 ||
      decoder_channels < 1) {
    throw InvalidArgument("segmentation widths must be >= 1");
  }
}

SegConfig FullSegConfig(int num_classes) {
  SegConfig c;
  c.backbone = Backbone::kFull;
  c.num_classes = num_classes;
  return c;
}

SegConfig TinySegConfig(int num_classes) {
  SegConfig c;
  c.num_classes = num_classes;
  c.width = 16;
  c.aspp_channels = 32;
  c.low_level_channels = 16;
  c.decoder_channels = 32;
  return c;
}

Backbone ParseBackbone(const std::string& name) {
  if (name == "tiny") return Backbone::kTiny;
  if (name == "full") return Backbone::kFull;
  throw InvalidArgument("unknown backbone '" + name + "' (tiny|full)");
}

std::string BackboneName(Backbone b) {
  return b == Backbone::kTiny ? "tiny" : "full";
}

SegNet SegNet::Build(const SegConfig& cfg, uint64_t seed) {
  cfg.Validate();
  std::mt19937_64 rng(seed);
  auto conv_bn = [&rng](int64_t in, int64_t out, int k, nn::ConvOptions o) {
    return ConvBn{nn::Conv2dLayer::Create(in, out, k, o, false, rng),
                  nn::BatchNormLayer::Create(out)};
  };
  SegNet net;
  net.cfg_ = cfg;
  const bool full = cfg.backbone == Backbone::kFull;

  // Stem reaches stride 4 with two strided convolutions.
  const int64_t stem_w = full ? 64 : cfg.width;
  net.stem_.push_back(conv_bn(3, stem_w, full ? 7 : 3, {2, full ? 3 : 1, 1}));
  net.stem_.push_back(conv_bn(stem_w, stem_w, 3, {2, 1, 1}));

  const std::vector<int> depths =
      full ? std::vector<int>{3, 4, 23, 3} : std::vector<int>{1, 1, 1, 1};
  const int expansion = full ? 4 : 1;
  const int64_t base = full ? 64 : cfg.width;
  // (stride, dilation) per stage for the requested output stride.
  std::vector<std::pair<int, int>> geometry = {{1, 1}, {2, 1}, {2, 1}, {1, 2}};
  if (cfg.output_stride == 8) geometry = {{1, 1}, {2, 1}, {1, 2}, {1, 4}};

  int64_t in = stem_w;
  for (size_t s = 0; s < depths.size(); ++s) {
    const int64_t mid = base << s;
    const int64_t out = mid * expansion;
    std::vector<Block> stage;
    for (int b = 0; b < depths[s]; ++b) {
      const int stride = b == 0 ? geometry[s].first : 1;
      const int dil = geometry[s].second;
      Block blk;
      auto add = [&](int64_t ci, int64_t co, int k, nn::ConvOptions o) {
        blk.convs.push_back(nn::Conv2dLayer::Create(ci, co, k, o, false, rng));
        blk.bns.push_back(nn::BatchNormLayer::Create(co));
      };
      if (full) {
        add(in, mid, 1, {});
        add(mid, mid, 3, {stride, dil, dil});
        add(mid, out, 1, {});
      } else {
        add(in, out, 3, {stride, dil, dil});
        add(out, out, 3, {1, dil, dil});
      }
      if (stride != 1 || in != out) {
        blk.has_shortcut = true;
        blk.shortcut = nn::Conv2dLayer::Create(in, out, 1, {stride, 0, 1},
                                               false, rng);
        blk.shortcut_bn = nn::BatchNormLayer::Create(out);
      }
      stage.push_back(std::move(blk));
      in = out;
    }
    net.stages_.push_back(std::move(stage));
  }
  const int64_t low_in = base * expansion;
  const int64_t high_in = in;

  const int64_t a = cfg.aspp_channels;
  net.aspp_.push_back(conv_bn(high_in, a, 1, {}));
  for (int r : cfg.aspp_rates) net.aspp_.push_back(conv_bn(high_in, a, 3, {1, r, r}));
  // The pooled branch sees a 1x1 map, so it carries a bias instead of a
  // normalization layer.
  net.aspp_pool_ = nn::Conv2dLayer::Create(high_in, a, 1, {}, true, rng);
  const int64_t branches = static_cast<int64_t>(net.aspp_.size()) + 1;
  net.aspp_project_ = conv_bn(branches * a, a, 1, {});
  net.low_project_ = conv_bn(low_in, cfg.low_level_channels, 1, {});
  net.refine_ = conv_bn(a + cfg.low_level_channels, cfg.decoder_channels, 3,
                        {1, 1, 1});
  net.classifier_ = nn::Conv2dLayer::Create(cfg.decoder_channels,
                                            cfg.num_classes, 1, {}, true, rng);
  return net;
}

nn::Var SegNet::ConvBnRelu(ConvBn& cb, const nn::Var& x, bool bs) {
  return cb.bn.WithRelu(cb.conv(x), bs);
}

nn::Var SegNet::BlockForward(Block& b, const nn::Var& x, bool bs) {
  nn::Var h = x;
  const size_t n = b.convs.size();
  for (size_t i = 0; i < n; ++i) {
    h = i + 1 < n ? b.bns[i].WithRelu(b.convs[i](h), bs)
                  : b.bns[i](b.convs[i](h), bs);
  }
  nn::Var skip = b.has_shortcut ? b.shortcut_bn(b.shortcut(x), bs) : x;
  return nn::AddRelu(h, skip);
}

nn::Var SegNet::Forward(const nn::Var& x, bool use_batch_stats) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != 3) {
    throw InvalidArgument("segmenter expects (N, 3, H, W), got " +
                          ShapeToString(s));
  }
  const int64_t h = s[2], w = s[3];
  if (h % cfg_.output_stride != 0 || w % cfg_.output_stride != 0) {
    throw InvalidArgument("input " + std::to_string(h) + "x" +
                          std::to_string(w) +
                          " is not divisible by output stride " +
                          std::to_string(cfg_.output_stride));
  }
  const bool bs = use_batch_stats;
  nn::Var f = x;
  for (ConvBn& cb : stem_) f = ConvBnRelu(cb, f, bs);
  nn::Var low;
  for (size_t st = 0; st < stages_.size(); ++st) {
    for (Block& b : stages_[st]) f = BlockForward(b, f, bs);
    if (st == 0) low = f;
  }

  std::vector<nn::Var> branches;
  for (ConvBn& cb : aspp_) branches.push_back(ConvBnRelu(cb, f, bs));
  const int64_t fh = f.shape()[2], fw = f.shape()[3];
  branches.push_back(nn::BroadcastSpatial(
      nn::Relu(aspp_pool_(nn::GlobalAvgPool(f))), fh, fw));
  nn::Var context = ConvBnRelu(aspp_project_, nn::ConcatChannels(branches), bs);

  const int64_t lh = low.shape()[2], lw = low.shape()[3];
  nn::Var merged = nn::ConcatChannels(
      {nn::ResizeBilinear(context, lh, lw), ConvBnRelu(low_project_, low, bs)});
  nn::Var logits = classifier_(ConvBnRelu(refine_, merged, bs));
  return nn::ResizeBilinear(logits, h, w);
}

Tensor SegNet::Segment(const Tensor& img) {
  if (img.ndim() != 3) {
    throw InvalidArgument("Segment expects (3, H, W), got " +
                          ShapeToString(img.shape()));
  }
  nn::NoGradGuard guard;
  Tensor x = img.Reshaped({1, img.dim(0), img.dim(1), img.dim(2)});
  return Unstack(Forward(nn::Constant(std::move(x)), false).value(), 0);
}

template <typename Self, typename ConvFn, typename BnFn>
void SegNet::VisitLayers(Self& self, ConvFn f, BnFn g) {
  for (size_t i = 0; i < self.stem_.size(); ++i) {
    f(Idx("stem", i), self.stem_[i].conv);
    g(Idx("stem", i) + ".bn", self.stem_[i].bn);
  }
  for (size_t s = 0; s < self.stages_.size(); ++s)
    for (size_t b = 0; b < self.stages_[s].size(); ++b) {
      auto& blk = self.stages_[s][b];
      const std::string p = Idx("stage", s + 1) + Idx(".block", b);
      for (size_t i = 0; i < blk.convs.size(); ++i) {
        f(Idx(p + ".conv", i), blk.convs[i]);
        g(Idx(p + ".bn", i), blk.bns[i]);
      }
      if (blk.has_shortcut) {
        f(p + ".shortcut", blk.shortcut);
        g(p + ".shortcut_bn", blk.shortcut_bn);
      }
    }
  for (size_t i = 0; i < self.aspp_.size(); ++i) {
    f(Idx("aspp.branch", i), self.aspp_[i].conv);
    g(Idx("aspp.branch", i) + ".bn", self.aspp_[i].bn);
  }
  f("aspp.pool", self.aspp_pool_);
  f("aspp.project", self.aspp_project_.conv);
  g("aspp.project.bn", self.aspp_project_.bn);
  f("decoder.low", self.low_project_.conv);
  g("decoder.low.bn", self.low_project_.bn);
  f("decoder.refine", self.refine_.conv);
  g("decoder.refine.bn", self.refine_.bn);
  f("classifier", self.classifier_);
}

nn::ParamList SegNet::Params() const {
  nn::ParamList out;
  VisitLayers(
      *this,
      [&out](const std::string& n, const nn::Conv2dLayer& c) { c.AddParams(n, out); },
      [&out](const std::string& n, const nn::BatchNormLayer& b) { b.AddParams(n, out); });
  return out;
}

nn::BufferList SegNet::Buffers() {
  nn::BufferList out;
  VisitLayers(
      *this, [](const std::string&, nn::Conv2dLayer&) {},
      [&out](const std::string& n, nn::BatchNormLayer& b) { b.AddBuffers(n, out); });
  return out;
}

LabelMap PredictLabels(const Tensor& logits) {
  if (logits.ndim() != 3) {
    throw InvalidArgument("PredictLabels expects (C, H, W), got " +
                          ShapeToString(logits.shape()));
  }
  const int64_t c = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  const int64_t hw = h * w;
  LabelMap out(h, w, 0);
  for (int64_t i = 0; i < hw; ++i) {
    double best = logits[i];
    for (int64_t k = 1; k < c; ++k) {
      if (logits[k * hw + i] > best) {
        best = logits[k * hw + i];
        out[i] = static_cast<int32_t>(k);
      }
    }
  }
  return out;
}

}  // namespace ulrseg::segnet
