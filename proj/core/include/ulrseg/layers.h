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
#ifndef ULRSEG_LAYERS_H_
#define ULRSEG_LAYERS_H_

#include <random>
#include <string>

#include "ulrseg/ops.h"

// Parameter-owning building blocks shared by the networks.
namespace ulrseg::nn {

struct Conv2dLayer {
  Var weight;  // (out, in, k, k)
  Var bias;    // (out) or undefined
  ConvOptions opts;

  // He-normal weights (std = gain * sqrt(2 / fan_in)), zero bias.
  static Conv2dLayer Create(int64_t in, int64_t out, int kernel,
                            ConvOptions opts, bool with_bias,
                            std::mt19937_64& rng, double gain = 1.0);

  Var operator()(const Var& x) const { return Conv2d(x, weight, bias, opts); }
  int64_t in_channels() const { return weight.shape()[1]; }
  int64_t out_channels() const { return weight.shape()[0]; }
  void AddParams(const std::string& prefix, ParamList& out) const;
};

struct BatchNormLayer {
  Var gamma;
  Var beta;
  Tensor running_mean;
  Tensor running_var;

  static BatchNormLayer Create(int64_t channels);

  Var operator()(const Var& x, bool use_batch_stats) {
    return BatchNorm(x, gamma, beta, running_mean, running_var,
                     use_batch_stats);
  }
  Var WithRelu(const Var& x, bool use_batch_stats) {
    return BatchNormRelu(x, gamma, beta, running_mean, running_var,
                         use_batch_stats);
  }
  void AddParams(const std::string& prefix, ParamList& out) const;
  void AddBuffers(const std::string& prefix, BufferList& out);
};

}  // namespace ulrseg::nn

#endif  // ULRSEG_LAYERS_H_
