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
#ifndef ULRSEG_OPS_H_
#define ULRSEG_OPS_H_

#include <optional>
#include <vector>

#include "ulrseg/autograd.h"

// Differentiable tensor operations over NCHW activations.
namespace ulrseg::nn {

struct ConvOptions {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

// x: (N, Cin, H, W); weight: (Cout, Cin, kh, kw); bias: (Cout) or undefined.
Var Conv2d(const Var& x, const Var& weight, const Var& bias,
           ConvOptions opts = {});

// x: (N, F); weight: (O, F); bias: (O) or undefined.
Var Linear(const Var& x, const Var& weight, const Var& bias);

Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Scale(const Var& a, double factor);
Var AddScalar(const Var& a, double offset);

Var Relu(const Var& x);
Var LeakyRelu(const Var& x, double negative_slope);
Var Clamp(const Var& x, double lo, double hi);
// Subgradient 0 at the origin.
Var Abs(const Var& x);
// log(1 + e^x) without overflow.
Var Softplus(const Var& x);

// Concatenation along the channel axis of NCHW tensors.
Var ConcatChannels(const std::vector<Var>& xs);

Var UpsampleNearest(const Var& x, int factor);
// Bilinear resize with half-pixel centers (align_corners = false).
Var ResizeBilinear(const Var& x, int64_t out_h, int64_t out_w);

// (N, C, H, W) -> (N, C, 1, 1)
Var GlobalAvgPool(const Var& x);
// (N, C, 1, 1) -> (N, C, H, W)
Var BroadcastSpatial(const Var& x, int64_t h, int64_t w);
Var Reshape(const Var& x, Shape shape);

// Per-channel normalization. With `use_batch_stats` the batch mean and
// biased variance normalize the input and the running buffers are updated;
// otherwise the running buffers are used as constants.
Var BatchNorm(const Var& x, const Var& gamma, const Var& beta,
              Tensor& running_mean, Tensor& running_var, bool use_batch_stats,
              double momentum = 0.1, double eps = 1e-5);

// Relu(BatchNorm(...)) and Relu(Add(a, b)) without keeping the pre-activation
// tensor alive in the graph.
Var BatchNormRelu(const Var& x, const Var& gamma, const Var& beta,
                  Tensor& running_mean, Tensor& running_var,
                  bool use_batch_stats, double momentum = 0.1,
                  double eps = 1e-5);
Var AddRelu(const Var& a, const Var& b);

// Softmax over the channel axis at every (n, h, w).
Var SoftmaxChannels(const Var& x);

// Divides each channel vector by max(||v||_2, eps).
Var ChannelL2Normalize(const Var& x, double eps = 1e-12);

Var Sum(const Var& x);
Var Mean(const Var& x);
// sum_i weights[i] * scalars[i]; every scalar must hold one element.
Var WeightedSum(const std::vector<Var>& scalars,
                const std::vector<double>& weights);

}  // namespace ulrseg::nn

#endif  // ULRSEG_OPS_H_
