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
#include <benchmark/benchmark.h>

#include <random>

#include "ulrseg/ops.h"
#include "ulrseg/spectral_norm.h"

namespace ulrseg {
namespace {

// 3x3 convolution, channels in = out = range(0), on a 32x32 map.
void BM_Conv3x3Forward(benchmark::State& state) {
  const int64_t c = state.range(0);
  std::mt19937_64 rng(1);
  const nn::Var x = nn::Constant(Tensor::RandomNormal({1, c, 32, 32}, rng));
  const nn::Var w = nn::Constant(Tensor::RandomNormal({c, c, 3, 3}, rng));
  const nn::Var b = nn::Constant(Tensor({c}, 0.0));
  nn::NoGradGuard guard;
  for (auto _ : state) {
    benchmark::DoNotOptimize(nn::Conv2d(x, w, b, {1, 1, 1}).value().raw());
  }
  state.SetItemsProcessed(state.iterations() * 2 * c * c * 9 * 32 * 32);
}
BENCHMARK(BM_Conv3x3Forward)->Arg(16)->Arg(64);

void BM_Conv3x3ForwardBackward(benchmark::State& state) {
  const int64_t c = state.range(0);
  std::mt19937_64 rng(2);
  const Tensor xt = Tensor::RandomNormal({1, c, 32, 32}, rng);
  const Tensor wt = Tensor::RandomNormal({c, c, 3, 3}, rng);
  for (auto _ : state) {
    nn::Var x = nn::Parameter(xt);
    nn::Var w = nn::Parameter(wt);
    nn::Backward(nn::Sum(nn::Conv2d(x, w, nn::Var(), {1, 1, 1})));
    benchmark::DoNotOptimize(w.grad().raw());
  }
}
BENCHMARK(BM_Conv3x3ForwardBackward)->Arg(16)->Arg(64);

void BM_SpectralNormalize(benchmark::State& state) {
  const int64_t n = state.range(0);
  std::mt19937_64 rng(3);
  const Tensor w = Tensor::RandomNormal({n, n}, rng);
  nn::SpectralNormState st = nn::InitSpectralNormState(w, rng, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nn::SpectralNormalize(w, st, 1).raw());
  }
}
BENCHMARK(BM_SpectralNormalize)->Arg(64)->Arg(512);

}  // namespace
}  // namespace ulrseg
