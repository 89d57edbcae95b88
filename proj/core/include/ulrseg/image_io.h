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
#ifndef ULRSEG_IMAGE_IO_H_
#define ULRSEG_IMAGE_IO_H_

#include <cstdint>
#include <filesystem>

#include "ulrseg/label_map.h"
#include "ulrseg/tensor.h"

namespace ulrseg {

// [0, 1] -> {0..255}, clamped, round-half-up.
uint8_t QuantizeToByte(double v);
inline double ByteToUnit(uint8_t b) { return static_cast<double>(b) / 255.0; }

// Snaps every value onto the 8-bit grid (what a PNG round-trip yields).
Tensor QuantizeImage(const Tensor& chw);

// 8-bit RGB PNG <-> (3, H, W) tensor in [0, 1].
Tensor ReadRgbPng(const std::filesystem::path& path);
void WriteRgbPng(const std::filesystem::path& path, const Tensor& chw);

// 8-bit single-channel PNG <-> label map (values 0..255).
LabelMap ReadLabelPng(const std::filesystem::path& path);
void WriteLabelPng(const std::filesystem::path& path, const LabelMap& labels);

}  // namespace ulrseg

#endif  // ULRSEG_IMAGE_IO_H_
