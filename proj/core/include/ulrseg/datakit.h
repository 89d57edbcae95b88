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
#ifndef ULRSEG_DATAKIT_H_
#define ULRSEG_DATAKIT_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ulrseg/label_map.h"
#include "ulrseg/tensor.h"

// Dataset layout, degradation, synthetic scenes, splits and label encoding.
namespace ulrseg::datakit {

// Distinct region types the synthetic scene generator can draw; the first
// two are the wall background and the floor band.
inline constexpr int kNumRegionTypes = 40;
inline constexpr int32_t kWallClass = 0;
inline constexpr int32_t kFloorClass = 1;

struct SplitSizes {
  int64_t train = 0;
  int64_t val = 0;
  int64_t test = 0;
  int64_t total() const { return train + val + test; }
};

struct DatasetSpec {
  std::filesystem::path root_path;
  int64_t crop_size = 384;
  int64_t lr_size = 16;
  int num_classes = 37;
  int32_t ignore_index = kIgnoreIndex;
  SplitSizes split_sizes{9000, 668, 667};
  uint64_t seed = 0;
  // Objects drawn per synthetic scene.
  int objects_per_scene = 3;

  int64_t scale() const { return crop_size / lr_size; }
  int64_t corpus_size() const { return split_sizes.total(); }
  // Throws InvalidArgument on violated invariants.
  void Validate() const;
};

struct Sample {
  Tensor hr;       // (3, crop, crop)
  Tensor lr;       // (3, lr, lr)
  LabelMap label;  // (crop, crop)
};

// Keys cubic convolution with a = -0.5.
double CubicKernel(double x);

// Antialiased separable bicubic resampling of a (C, S, S) image to
// (C, target, target). The cubic kernel is stretched by the reduction
// factor so it integrates over the whole source footprint (Pillow-style
// antialiasing); taps falling outside the image are dropped and the
// remaining weights renormalized. With `clamp` the result is limited to
// [0, 1]; without it the map is exactly linear in the input.
Tensor ResampleBicubic(const Tensor& img, int64_t target, bool clamp);

// ResampleBicubic with clamping. Requires a square image whose side is a
// multiple of `target`.
Tensor DownsampleBicubic(const Tensor& img, int64_t target);

// RGB color of a synthetic region type.
std::array<double, 3> RegionColor(int32_t class_id);

// Scene `index` of the corpus described by `spec`; depends only on
// (spec, index).
Sample SynthesizeScene(const DatasetSpec& spec, int64_t index);

// Full seeded corpus of spec.corpus_size() scenes.
std::vector<Sample> SynthGenerate(const DatasetSpec& spec);

// (C, H, W) one-hot stack; ignored pixels are all-zero.
Tensor EncodeOnehot(const LabelMap& label, int num_classes,
                    int32_t ignore_index = kIgnoreIndex);

struct Splits {
  std::vector<int64_t> train;
  std::vector<int64_t> val;
  std::vector<int64_t> test;
};

// Seeded random partition of corpus indices [0, corpus_size).
Splits MakeSplits(const DatasetSpec& spec, int64_t corpus_size);

// Throws when `label` holds values outside [0, C) and not equal to ignore.
void ValidateLabels(const LabelMap& label, int num_classes,
                    int32_t ignore_index);

// On-disk layout: root/images/NNNNN.png (HR RGB), root/labels/NNNNN.png,
// root/splits.json. LR inputs are recomputed from the stored 8-bit HR image.
std::string SampleFileName(int64_t index);
void WriteSample(const std::filesystem::path& root, int64_t index,
                 const Sample& sample);
Sample ReadSample(const std::filesystem::path& root, const std::string& file,
                  int64_t lr_size);
void WriteSplitsJson(const std::filesystem::path& root, const Splits& splits);

struct SplitFiles {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  const std::vector<std::string>& Get(const std::string& name) const;
};
SplitFiles ReadSplitsJson(const std::filesystem::path& root);

// The HR image snapped to 8 bits and its recomputed LR input, i.e. the
// sample exactly as it reads back from disk.
Sample Quantized(const Sample& sample, int64_t lr_size);

}  // namespace ulrseg::datakit

#endif  // ULRSEG_DATAKIT_H_
