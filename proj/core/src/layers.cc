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
#include "ulrseg/layers.h"

#include <cmath>

namespace ulrseg::nn {

Conv2dLayer Conv2dLayer::Create(int64_t in, int64_t out, int kernel,
                                ConvOptions opts, bool with_bias,
                                std::mt19937_64& rng, double gain) {
  if (in < 1 || out < 1 || kernel < 1) {
    throw InvalidArgument("Conv2dLayer: channel counts and kernel must be >= 1");
  }
  const double fan_in = static_cast<double>(in * kernel * kernel);
  Conv2dLayer layer;
  layer.weight = Parameter(Tensor::RandomNormal(
      {out, in, kernel, kernel}, rng, gain * std::sqrt(2.0 / fan_in)));
  if (with_bias) layer.bias = Parameter(Tensor({out}, 0.0));
  layer.opts = opts;
  return layer;
}

void Conv2dLayer::AddParams(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

BatchNormLayer BatchNormLayer::Create(int64_t channels) {
  BatchNormLayer bn;
  bn.gamma = Parameter(Tensor({channels}, 1.0));
  bn.beta = Parameter(Tensor({channels}, 0.0));
  bn.running_mean = Tensor({channels}, 0.0);
  bn.running_var = Tensor({channels}, 1.0);
  return bn;
}

void BatchNormLayer::AddParams(const std::string& prefix,
                               ParamList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

void BatchNormLayer::AddBuffers(const std::string& prefix, BufferList& out) {
  out.push_back({prefix + ".running_mean", &running_mean});
  out.push_back({prefix + ".running_var", &running_var});
}

}  // namespace ulrseg::nn
