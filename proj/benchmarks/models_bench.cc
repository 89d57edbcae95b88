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

#include "ulrseg/sad.h"
#include "ulrseg/segnet.h"
#include "ulrseg/srgen.h"

namespace ulrseg {
namespace {

void BM_ToyGenerator(benchmark::State& state) {
  const srgen::GeneratorConfig c = srgen::ToyGeneratorConfig();
  const srgen::Generator g = srgen::Generator::Build(c, 1);
  std::mt19937_64 rng(1);
  const Tensor lr = Tensor::RandomUniform({3, c.lr_size, c.lr_size}, rng, 0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(g.Generate(lr).raw());
}
BENCHMARK(BM_ToyGenerator)->Unit(benchmark::kMillisecond);

void BM_TinySegmenter(benchmark::State& state) {
  segnet::SegConfig c = segnet::TinySegConfig(6);
  c.output_stride = 8;
  segnet::SegNet net = segnet::SegNet::Build(c, 2);
  std::mt19937_64 rng(2);
  const Tensor img = Tensor::RandomUniform({3, 32, 32}, rng, 0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(net.Segment(img).raw());
}
BENCHMARK(BM_TinySegmenter)->Unit(benchmark::kMillisecond);

void BM_ToyDiscriminator(benchmark::State& state) {
  sad::Discriminator d = sad::Discriminator::Build(sad::ToyDiscConfig(), 9, 3);
  std::mt19937_64 rng(3);
  const nn::Var z = nn::Constant(Tensor::RandomUniform({4, 9, 32, 32}, rng, 0, 1));
  nn::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(d.Forward(z, false).value().raw());
}
BENCHMARK(BM_ToyDiscriminator)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace ulrseg
