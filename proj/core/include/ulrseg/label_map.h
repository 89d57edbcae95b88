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
#ifndef ULRSEG_LABEL_MAP_H_
#define ULRSEG_LABEL_MAP_H_

#include <cstdint>
#include <span>
#include <vector>

#include "ulrseg/tensor.h"

namespace ulrseg {

// Class id excluded from losses and metrics.
inline constexpr int32_t kIgnoreIndex = 255;

// Integer H x W class-index map, row-major.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int64_t height, int64_t width, int32_t fill = 0)
      : height_(height), width_(width),
        labels_(static_cast<size_t>(height * width), fill) {}
  LabelMap(int64_t height, int64_t width, std::vector<int32_t> labels)
      : height_(height), width_(width), labels_(std::move(labels)) {
    if (static_cast<int64_t>(labels_.size()) != height * width) {
      throw InvalidArgument("LabelMap: data size does not match dimensions");
    }
  }

  int64_t height() const { return height_; }
  int64_t width() const { return width_; }
  int64_t size() const { return height_ * width_; }

  int32_t& at(int64_t row, int64_t col) {
    return labels_[static_cast<size_t>(row * width_ + col)];
  }
  int32_t at(int64_t row, int64_t col) const {
    return labels_[static_cast<size_t>(row * width_ + col)];
  }
  int32_t& operator[](int64_t i) { return labels_[static_cast<size_t>(i)]; }
  int32_t operator[](int64_t i) const { return labels_[static_cast<size_t>(i)]; }

  std::span<const int32_t> data() const { return labels_; }
  std::span<int32_t> data() { return labels_; }

  bool SameShape(const LabelMap& o) const {
    return height_ == o.height_ && width_ == o.width_;
  }
  bool operator==(const LabelMap& o) const = default;

 private:
  int64_t height_ = 0;
  int64_t width_ = 0;
  std::vector<int32_t> labels_;
};

inline void CheckSameShape(const LabelMap& a, const LabelMap& b,
                           const char* what) {
  if (!a.SameShape(b)) {
    throw InvalidArgument(std::string(what) + ": label maps differ in shape");
  }
}

}  // namespace ulrseg

#endif  // ULRSEG_LABEL_MAP_H_
