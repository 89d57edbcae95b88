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

#include "ulrseg/datakit.h"

namespace ulrseg::sad {
namespace {

constexpr double kSlope = 0.2;

}  // namespace

void DiscConfig::Validate() const {
  if (conv_blocks < 1) throw InvalidArgument("conv_blocks must be >= 1");
  if (static_cast<int>(widths.size()) != conv_blocks) {
    throw InvalidArgument("discriminator widths must have one entry per block");
  }
  for (int w : widths)
    if (w < 1) throw InvalidArgument("discriminator widths must be >= 1");
  if (power_iterations < 1 || verify_iterations < 1) {
    throw InvalidArgument("power iteration counts must be >= 1");
  }
}

DiscConfig ToyDiscConfig() {
  DiscConfig c;
  c.conv_blocks = 3;
  c.widths = {16, 32, 32};
  return c;
}

Discriminator Discriminator::Build(const DiscConfig& cfg, int64_t in_channels,
                                   uint64_t seed) {
  cfg.Validate();
  if (in_channels < 1) throw InvalidArgument("in_channels must be >= 1");
  std::mt19937_64 rng(seed);
  Discriminator d;
  d.cfg_ = cfg;
  d.in_channels_ = in_channels;
  int64_t in = in_channels;
  for (int w : cfg.widths) {
    for (int stride : {1, 2}) {
      SnConv sc;
      sc.conv = nn::Conv2dLayer::Create(in, w, 3, {stride, 1, 1}, true, rng);
      sc.state = nn::InitSpectralNormState(sc.conv.weight.value(), rng);
      d.convs_.push_back(std::move(sc));
      in = w;
    }
  }
  d.fc_weight_ = nn::Parameter(
      Tensor::RandomNormal({1, in}, rng, std::sqrt(1.0 / static_cast<double>(in))));
  d.fc_bias_ = nn::Parameter(Tensor({1}, 0.0));
  d.fc_state_ = nn::InitSpectralNormState(d.fc_weight_.value(), rng);
  return d;
}

nn::Var Discriminator::Forward(const nn::Var& z, bool train) {
  const Shape& s = z.shape();
  if (s.size() != 4 || s[1] != in_channels_) {
    throw InvalidArgument("discriminator expects (N, " +
                          std::to_string(in_channels_) + ", H, W), got " +
                          ShapeToString(s));
  }
  const int iters = train ? cfg_.power_iterations : 0;
  nn::Var h = z;
  for (SnConv& sc : convs_) {
    nn::Var w = nn::SpectralNormWeight(sc.conv.weight, sc.state, iters);
    h = nn::LeakyRelu(nn::Conv2d(h, w, sc.conv.bias, sc.conv.opts), kSlope);
  }
  const int64_t n = s[0], c = h.shape()[1];
  nn::Var pooled = nn::Reshape(nn::GlobalAvgPool(h), {n, c});
  nn::Var w = nn::SpectralNormWeight(fc_weight_, fc_state_, iters);
  return nn::Reshape(nn::Linear(pooled, w, fc_bias_), {n});
}

std::vector<std::pair<std::string, double>> Discriminator::NormalizedSigmas()
    const {
  std::vector<std::pair<std::string, double>> out;
  auto probe = [this, &out](const std::string& name, const Tensor& w,
                            const nn::SpectralNormState& st) {
    nn::SpectralNormState copy = st;
    const double sigma = nn::SigmaEstimate(w, copy);
    if (sigma <= nn::kSigmaFloor) {
      out.emplace_back(name, 0.0);
      return;
    }
    Tensor normalized = w;
    normalized.Scale(1.0 / sigma);
    out.emplace_back(name,
                     nn::PowerIterate(normalized, copy, cfg_.verify_iterations));
  };
  for (size_t i = 0; i < convs_.size(); ++i) {
    probe("conv" + std::to_string(i), convs_[i].conv.weight.value(),
          convs_[i].state);
  }
  probe("fc", fc_weight_.value(), fc_state_);
  return out;
}

double Discriminator::LipschitzBound() const {
  return std::pow(3.0, static_cast<double>(convs_.size()));
}

nn::ParamList Discriminator::Params() const {
  nn::ParamList out;
  for (size_t i = 0; i < convs_.size(); ++i)
    convs_[i].conv.AddParams("conv" + std::to_string(i), out);
  out.push_back({"fc.weight", fc_weight_});
  out.push_back({"fc.bias", fc_bias_});
  return out;
}

nn::BufferList Discriminator::Buffers() {
  nn::BufferList out;
  for (size_t i = 0; i < convs_.size(); ++i) {
    const std::string p = "conv" + std::to_string(i);
    out.push_back({p + ".sn_u", &convs_[i].state.u});
    out.push_back({p + ".sn_v", &convs_[i].state.v});
  }
  out.push_back({"fc.sn_u", &fc_state_.u});
  out.push_back({"fc.sn_v", &fc_state_.v});
  return out;
}

nn::Var MakeRealPair(const Tensor& hr, const std::vector<LabelMap>& labels,
                     int num_classes, int32_t ignore_index) {
  if (hr.ndim() != 4 || hr.dim(1) != 3) {
    throw InvalidArgument("real pair expects (N, 3, H, W) images, got " +
                          ShapeToString(hr.shape()));
  }
  const int64_t n = hr.dim(0), h = hr.dim(2), w = hr.dim(3);
  if (static_cast<int64_t>(labels.size()) != n) {
    throw InvalidArgument("real pair: image and label batch sizes differ");
  }
  std::vector<Tensor> onehots;
  for (const LabelMap& l : labels) {
    if (l.height() != h || l.width() != w) {
      throw InvalidArgument("real pair: label size differs from image size");
    }
    onehots.push_back(datakit::EncodeOnehot(l, num_classes, ignore_index));
  }
  return nn::ConcatChannels({nn::Constant(hr), nn::Constant(Stack(onehots))});
}

nn::Var MakeFakePair(const nn::Var& sr, const nn::Var& seg_logits) {
  const Shape& a = sr.shape();
  const Shape& b = seg_logits.shape();
  if (a.size() != 4 || b.size() != 4 || a[1] != 3 || a[0] != b[0] ||
      a[2] != b[2] || a[3] != b[3]) {
    throw InvalidArgument("fake pair: image " + ShapeToString(a) +
                          " and logits " + ShapeToString(b) +
                          " are inconsistent");
  }
  return nn::ConcatChannels({sr, nn::SoftmaxChannels(seg_logits)});
}

}  // namespace ulrseg::sad
