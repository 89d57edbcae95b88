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
#ifndef ULRSEG_SEGNET_H_
#define ULRSEG_SEGNET_H_

#include <cstdint>
#include <string>
#include <vector>

#include "ulrseg/label_map.h"
#include "ulrseg/layers.h"

// Encoder-decoder segmentation network with atrous spatial pyramid pooling.
namespace ulrseg::segnet {

enum class Backbone { kTiny, kFull };

struct SegConfig {
  // kTiny: 4 residual stages of basic blocks, widths w, 2w, 4w, 8w.
  // kFull: bottleneck stages [3, 4, 23, 3], widths 256 ... 2048.
  Backbone backbone = Backbone::kTiny;
  int num_classes = 37;
  std::vector<int> aspp_rates{6, 12, 18};
  int output_stride = 16;  // 8 or 16
  int width = 16;          // tiny backbone base width
  int aspp_channels = 256;
  int low_level_channels = 48;
  int decoder_channels = 256;

  void Validate() const;
};

SegConfig FullSegConfig(int num_classes);
SegConfig TinySegConfig(int num_classes);

Backbone ParseBackbone(const std::string& name);
std::string BackboneName(Backbone b);

class SegNet {
 public:
  SegNet() = default;
  static SegNet Build(const SegConfig& cfg, uint64_t seed);

  // (N, 3, H, W) -> (N, C, H, W) logits. H and W must be multiples of
  // output_stride. `use_batch_stats` selects batch statistics for the
  // normalization layers (and updates their running averages when gradients
  // are recorded); otherwise the running averages are used.
  nn::Var Forward(const nn::Var& x, bool use_batch_stats);
  // Single (3, H, W) image with running statistics, no graph.
  Tensor Segment(const Tensor& img);

  nn::ParamList Params() const;
  nn::BufferList Buffers();
  const SegConfig& config() const { return cfg_; }

 private:
  struct Block {
    std::vector<nn::Conv2dLayer> convs;
    std::vector<nn::BatchNormLayer> bns;
    bool has_shortcut = false;
    nn::Conv2dLayer shortcut;
    nn::BatchNormLayer shortcut_bn;
  };
  struct ConvBn {
    nn::Conv2dLayer conv;
    nn::BatchNormLayer bn;
  };

  nn::Var ConvBnRelu(ConvBn& cb, const nn::Var& x, bool bs);
  nn::Var BlockForward(Block& b, const nn::Var& x, bool bs);

  // Calls f(name, conv) and g(name, bn) for every layer in a fixed order.
  template <typename Self, typename ConvFn, typename BnFn>
  static void VisitLayers(Self& self, ConvFn f, BnFn g);

  SegConfig cfg_;
  std::vector<ConvBn> stem_;
  std::vector<std::vector<Block>> stages_;
  std::vector<ConvBn> aspp_;  // 1x1 branch then one per rate
  nn::Conv2dLayer aspp_pool_;
  ConvBn aspp_project_;
  ConvBn low_project_;
  ConvBn refine_;
  nn::Conv2dLayer classifier_;
};

// Per-pixel argmax of (C, H, W) logits; ties resolve to the lowest class.
LabelMap PredictLabels(const Tensor& logits);

}  // namespace ulrseg::segnet

#endif  // ULRSEG_SEGNET_H_
