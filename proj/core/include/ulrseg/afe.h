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
#ifndef ULRSEG_AFE_H_
#define ULRSEG_AFE_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "ulrseg/layers.h"

// Frozen feature extractors and the feature-matching loss computed on them.
namespace ulrseg::afe {

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;

  // (N, 3, H, W) -> (N, channels, H', W'). Weights are frozen; gradients
  // flow to the image only.
  virtual nn::Var Extract(const nn::Var& img) const = 0;
  virtual int64_t channels() const = 0;
  // Smallest accepted image side.
  virtual int64_t min_resolution() const = 0;
  virtual std::string kind() const = 0;
};

// Two frozen random 3x3 stride-2 convolutions with leaky ReLU:
// (N, 3, H, W) -> (N, channels, H/4, W/4).
class StubExtractor final : public FeatureExtractor {
 public:
  StubExtractor(int64_t channels, uint64_t seed);

  nn::Var Extract(const nn::Var& img) const override;
  int64_t channels() const override { return channels_; }
  int64_t min_resolution() const override { return 8; }
  std::string kind() const override { return "stub"; }

 private:
  int64_t channels_;
  nn::Conv2dLayer conv1_;
  nn::Conv2dLayer conv2_;
};

using ExtractorFactory =
    std::function<std::unique_ptr<FeatureExtractor>(int64_t channels, uint64_t seed)>;

// Makes `factory` available under `kind` for MakeExtractor. Throws when the
// name is taken.
void RegisterExtractor(const std::string& kind, ExtractorFactory factory);

// "stub" or any registered kind.
std::unique_ptr<FeatureExtractor> MakeExtractor(const std::string& kind,
                                                int64_t channels, uint64_t seed);

// Extract() after checking the image against min_resolution().
nn::Var ExtractChecked(const FeatureExtractor& fx, const nn::Var& img);

struct FeatureLossTerms {
  nn::Var l1;   // channel L1 distance, averaged over positions
  nn::Var cos;  // 1 - cosine similarity, averaged over positions
  nn::Var total;
};

// Both terms compare channel-normalized features.
FeatureLossTerms FeatureLoss(const nn::Var& f_real, const nn::Var& f_fake);

}  // namespace ulrseg::afe

#endif  // ULRSEG_AFE_H_
