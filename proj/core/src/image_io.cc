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
#include "ulrseg/image_io.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

namespace ulrseg {
namespace {

std::vector<uint8_t> ReadPngPixels(const std::filesystem::path& path,
                                   uint32_t format, int64_t& height,
                                   int64_t& width) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw std::runtime_error("cannot read PNG " + path.string() + ": " +
                             image.message);
  }
  image.format = format;
  std::vector<uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " +
                             image.message);
  }
  height = image.height;
  width = image.width;
  return buffer;
}

void WritePngPixels(const std::filesystem::path& path, uint32_t format,
                    int64_t height, int64_t width,
                    const std::vector<uint8_t>& pixels) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0,
                               nullptr)) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " +
                             image.message);
  }
}

}  // namespace

uint8_t QuantizeToByte(double v) {
  const double scaled = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<uint8_t>(scaled);
}

Tensor QuantizeImage(const Tensor& chw) {
  Tensor out = chw;
  for (double& v : out.data()) v = ByteToUnit(QuantizeToByte(v));
  return out;
}

Tensor ReadRgbPng(const std::filesystem::path& path) {
  int64_t h = 0, w = 0;
  auto px = ReadPngPixels(path, PNG_FORMAT_RGB, h, w);
  Tensor out({3, h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        out[(c * h + y) * w + x] = ByteToUnit(px[static_cast<size_t>((y * w + x) * 3 + c)]);
  return out;
}

void WriteRgbPng(const std::filesystem::path& path, const Tensor& chw) {
  if (chw.ndim() != 3 || chw.dim(0) != 3) {
    throw InvalidArgument("WriteRgbPng expects (3, H, W), got " +
                          ShapeToString(chw.shape()));
  }
  const int64_t h = chw.dim(1), w = chw.dim(2);
  std::vector<uint8_t> px(static_cast<size_t>(h * w * 3));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        px[static_cast<size_t>((y * w + x) * 3 + c)] =
            QuantizeToByte(chw[(c * h + y) * w + x]);
  WritePngPixels(path, PNG_FORMAT_RGB, h, w, px);
}

LabelMap ReadLabelPng(const std::filesystem::path& path) {
  int64_t h = 0, w = 0;
  auto px = ReadPngPixels(path, PNG_FORMAT_GRAY, h, w);
  LabelMap out(h, w);
  for (int64_t i = 0; i < h * w; ++i) out[i] = px[static_cast<size_t>(i)];
  return out;
}

void WriteLabelPng(const std::filesystem::path& path, const LabelMap& labels) {
  std::vector<uint8_t> px(static_cast<size_t>(labels.size()));
  for (int64_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] > 255) {
      throw InvalidArgument("WriteLabelPng: label outside 0..255");
    }
    px[static_cast<size_t>(i)] = static_cast<uint8_t>(labels[i]);
  }
  WritePngPixels(path, PNG_FORMAT_GRAY, labels.height(), labels.width(), px);
}

}  // namespace ulrseg
