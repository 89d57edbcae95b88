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
#ifndef ULRSEG_SAD_H_
#define ULRSEG_SAD_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ulrseg/label_map.h"
#include "ulrseg/layers.h"
#include "ulrseg/spectral_norm.h"

// Spectrally normalized discriminators: the segmentation-aware variant
// judges (RGB, segmentation) stacks; the RGB-only variant judges images.
namespace ulrseg::sad {

struct DiscConfig {
  int conv_blocks = 4;
  std::vector<int> widths{64, 128, 256, 512};
  // Power iterations per training-mode forward pass.
  int power_iterations = 1;
  // Iterations used when verifying normalized weights.
  int verify_iterations = 5;

  void Validate() const;
};

DiscConfig ToyDiscConfig();

class Discriminator {
 public:
  Discriminator() = default;
  // `in_channels` is 3 + C for the segmentation-aware variant and 3 for the
  // RGB-only one.
  static Discriminator Build(const DiscConfig& cfg, int64_t in_channels,
                             uint64_t seed);

  // (N, in_channels, H, W) -> (N) logits. Each block is a 3x3 stride-1 and a
  // 3x3 stride-2 convolution with leaky ReLU; the head is global average
  // pooling and a linear layer. With `train` every weight runs
  // power_iterations updates of its power-iteration vectors; otherwise the
  // stored vectors are reused and the call has no side effects.
  nn::Var Forward(const nn::Var& z, bool train);

  // Top singular value of every normalized weight, re-estimated from copies
  // of the stored vectors with verify_iterations extra iterations.
  std::vector<std::pair<std::string, double>> NormalizedSigmas() const;

  // Lipschitz bound of Forward in the exactly normalized regime: each 3x3
  // convolution contributes at most 3, all other stages at most 1.
  double LipschitzBound() const;

  nn::ParamList Params() const;
  nn::BufferList Buffers();
  int64_t in_channels() const { return in_channels_; }
  const DiscConfig& config() const { return cfg_; }

 private:
  struct SnConv {
    nn::Conv2dLayer conv;
    nn::SpectralNormState state;
  };

  DiscConfig cfg_;
  int64_t in_channels_ = 0;
  std::vector<SnConv> convs_;  // two per block
  nn::Var fc_weight_;          // (1, widths.back())
  nn::Var fc_bias_;            // (1)
  nn::SpectralNormState fc_state_;
};

// (N, 3 + C, H, W): the image stacked with the one-hot encoding of `labels`.
nn::Var MakeRealPair(const Tensor& hr, const std::vector<LabelMap>& labels,
                     int num_classes, int32_t ignore_index = kIgnoreIndex);

// (N, 3 + C, H, W): the generated image stacked with the per-pixel softmax
// of the segmentation logits; differentiable in both inputs.
nn::Var MakeFakePair(const nn::Var& sr, const nn::Var& seg_logits);

}  // namespace ulrseg::sad

#endif  // ULRSEG_SAD_H_
