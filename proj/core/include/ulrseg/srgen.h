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
#ifndef ULRSEG_SRGEN_H_
#define ULRSEG_SRGEN_H_

#include <cstdint>
#include <vector>

#include "ulrseg/layers.h"

// Residual-in-residual dense super-resolution generator.
namespace ulrseg::srgen {

struct GeneratorConfig {
  int num_rrdb = 23;
  int dense_blocks_per_rrdb = 3;
  int convs_per_dense_block = 5;
  int base_channels = 64;
  int growth_channels = 32;
  double residual_scale = 0.2;
  std::vector<int> upsample_stages{2, 2, 2, 3};
  int64_t lr_size = 16;
  int64_t scale = 24;

  int64_t hr_size() const { return lr_size * scale; }
  // Throws InvalidArgument on non-positive counts or when the stage product
  // differs from `scale`.
  void Validate() const;
};

GeneratorConfig FullGeneratorConfig();
// (2 RRDBs, 2 dense blocks, 3 convs), 8 -> 32.
GeneratorConfig ToyGeneratorConfig();

class Generator {
 public:
  Generator() = default;
  static Generator Build(const GeneratorConfig& cfg, uint64_t seed);

  // (N, 3, s, s) -> (N, 3, s * scale, s * scale), values in [0, 1].
  nn::Var Forward(const nn::Var& lr) const;
  // Single (3, s, s) image, no graph.
  Tensor Generate(const Tensor& lr) const;

  nn::ParamList Params() const;
  const GeneratorConfig& config() const { return cfg_; }

 private:
  struct DenseBlock {
    std::vector<nn::Conv2dLayer> convs;
  };
  struct Rrdb {
    std::vector<DenseBlock> blocks;
  };

  nn::Var DenseForward(const DenseBlock& db, const nn::Var& x) const;

  GeneratorConfig cfg_;
  nn::Conv2dLayer conv_first_;
  std::vector<Rrdb> trunk_;
  nn::Conv2dLayer trunk_conv_;
  std::vector<nn::Conv2dLayer> up_convs_;
  nn::Conv2dLayer hr_conv_;
  nn::Conv2dLayer conv_last_;
};

}  // namespace ulrseg::srgen

#endif  // ULRSEG_SRGEN_H_
