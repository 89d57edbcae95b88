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
#ifndef ULRSEG_SPECTRAL_NORM_H_
#define ULRSEG_SPECTRAL_NORM_H_

#include <random>

#include "ulrseg/autograd.h"

namespace ulrseg::nn {

// Smallest singular-value estimate used as a divisor; a zero weight is
// returned unchanged instead of producing NaNs.
inline constexpr double kSigmaFloor = 1e-12;

// Persistent power-iteration vectors for one weight. The weight is viewed as
// a (rows, cols) matrix with rows = dim(0) and cols = numel / dim(0), so
// (out, in, kh, kw) kernels flatten to (out, in * kh * kw).
struct SpectralNormState {
  Tensor u;  // (rows)
  Tensor v;  // (cols)
};

// Random unit u followed by `warmup` power iterations against `weight`
// (15 matches the common parametrized implementation).
SpectralNormState InitSpectralNormState(const Tensor& weight,
                                        std::mt19937_64& rng, int warmup = 15);

// Runs `iters` power iterations, updating `state`, and returns the estimate
// sigma = u^T W v.
double PowerIterate(const Tensor& weight, SpectralNormState& state, int iters);

// sigma estimate from the current vectors, without updating them.
double SigmaEstimate(const Tensor& weight, const SpectralNormState& state);

// W / sigma after `iters` (>= 1) in-place power iterations.
Tensor SpectralNormalize(const Tensor& weight, SpectralNormState& state,
                         int iters);

// Differentiable W / sigma. `iters` may be 0 to reuse the stored vectors
// (evaluation mode). The backward pass treats u and v as constants:
// dL/dW = (G - <G, W/sigma> u v^T) / sigma.
Var SpectralNormWeight(const Var& weight, SpectralNormState& state, int iters);

}  // namespace ulrseg::nn

#endif  // ULRSEG_SPECTRAL_NORM_H_
