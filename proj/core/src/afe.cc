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
#include "ulrseg/afe.h"

#include <map>
#include <mutex>
#include <random>

namespace ulrseg::afe {
namespace {

std::mutex& RegistryMutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, ExtractorFactory>& Registry() {
  static std::map<std::string, ExtractorFactory> r;
  return r;
}

nn::Conv2dLayer Frozen(nn::Conv2dLayer layer) {
  layer.weight = nn::Constant(layer.weight.value());
  layer.bias = nn::Constant(layer.bias.value());
  return layer;
}

}  // namespace

StubExtractor::StubExtractor(int64_t channels, uint64_t seed)
    : channels_(channels) {
  if (channels < 2) throw InvalidArgument("extractor channels must be >= 2");
  std::mt19937_64 rng(seed);
  const int64_t mid = std::max<int64_t>(1, channels / 2);
  conv1_ = Frozen(nn::Conv2dLayer::Create(3, mid, 3, {2, 1, 1}, true, rng));
  conv2_ = Frozen(nn::Conv2dLayer::Create(mid, channels, 3, {2, 1, 1}, true, rng));
}

nn::Var StubExtractor::Extract(const nn::Var& img) const {
  return nn::LeakyRelu(conv2_(nn::LeakyRelu(conv1_(img), 0.2)), 0.2);
}

void RegisterExtractor(const std::string& kind, ExtractorFactory factory) {
  std::lock_guard<std::mutex> lock(RegistryMutex());
  if (kind == "stub" || Registry().count(kind)) {
    throw InvalidArgument("feature extractor '" + kind + "' already registered");
  }
  Registry()[kind] = std::move(factory);
}

std::unique_ptr<FeatureExtractor> MakeExtractor(const std::string& kind,
                                                int64_t channels, uint64_t seed) {
  if (kind == "stub") return std::make_unique<StubExtractor>(channels, seed);
  ExtractorFactory factory;
  {
    std::lock_guard<std::mutex> lock(RegistryMutex());
    auto it = Registry().find(kind);
    if (it == Registry().end()) {
      throw InvalidArgument("unknown feature extractor '" + kind + "'");
    }
    factory = it->second;
  }
  return factory(channels, seed);
}

nn::Var ExtractChecked(const FeatureExtractor& fx, const nn::Var& img) {
  const Shape& s = img.shape();
  if (s.size() != 4 || s[1] != 3) {
    throw InvalidArgument("extractor expects (N, 3, H, W), got " +
                          ShapeToString(s));
  }
  if (s[2] < fx.min_resolution() || s[3] < fx.min_resolution()) {
    throw InvalidArgument("image " + std::to_string(s[2]) + "x" +
                          std::to_string(s[3]) + " is below the " + fx.kind() +
                          " extractor minimum of " +
                          std::to_string(fx.min_resolution()));
  }
  return fx.Extract(img);
}

FeatureLossTerms FeatureLoss(const nn::Var& f_real, const nn::Var& f_fake) {
  if (f_real.shape() != f_fake.shape() || f_real.shape().size() != 4) {
    throw InvalidArgument("feature loss: shapes " +
                          ShapeToString(f_real.shape()) + " and " +
                          ShapeToString(f_fake.shape()) + " differ");
  }
  const Shape& s = f_real.shape();
  const double positions = static_cast<double>(s[0] * s[2] * s[3]);
  nn::Var a = nn::ChannelL2Normalize(f_real);
  nn::Var b = nn::ChannelL2Normalize(f_fake);
  FeatureLossTerms t;
  t.l1 = nn::Scale(nn::Sum(nn::Abs(nn::Sub(a, b))), 1.0 / positions);
  t.cos = nn::AddScalar(nn::Scale(nn::Sum(nn::Mul(a, b)), -1.0 / positions), 1.0);
  t.total = nn::Add(t.l1, t.cos);
  return t;
}

}  // namespace ulrseg::afe
