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
#ifndef ULRSEG_TENSOR_H_
#define ULRSEG_TENSOR_H_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ulrseg {

// Raised for every contract violation on public entry points (bad shapes,
// out-of-range labels, inconsistent configs).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<int64_t>;

std::string ShapeToString(const Shape& shape);
int64_t NumElements(const Shape& shape);

// Dense row-major double tensor with value semantics. Image-like tensors use
// NCHW (batched) or CHW (single image) layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor Full(Shape shape, double value) {
    return Tensor(std::move(shape), value);
  }
  // Independent N(0, stddev^2) entries drawn from `rng`.
  static Tensor RandomNormal(Shape shape, std::mt19937_64& rng,
                             double stddev = 1.0);
  static Tensor RandomUniform(Shape shape, std::mt19937_64& rng, double lo,
                              double hi);

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int axis) const;
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 4-D (N, C, H, W) element access.
  double& at(int64_t n, int64_t c, int64_t h, int64_t w);
  double at(int64_t n, int64_t c, int64_t h, int64_t w) const;

  // Same data, new shape; element counts must agree.
  Tensor Reshaped(Shape shape) const;
  void Reshape(Shape shape);

  // Slice along the leading axis: rows [begin, end).
  Tensor Slice(int64_t begin, int64_t end) const;

  void Fill(double value);
  void AddInPlace(const Tensor& other, double scale = 1.0);
  void Scale(double factor);

  double Sum() const;
  double MaxAbs() const;
  bool AllFinite() const;
  bool SameShape(const Tensor& other) const { return shape_ == other.shape_; }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Stacks equally-shaped tensors along a new leading axis.
Tensor Stack(std::span<const Tensor> items);

// Extracts item `n` of the leading axis (drops the axis).
Tensor Unstack(const Tensor& batch, int64_t n);

// Throws InvalidArgument with `what` when shapes differ.
void CheckSameShape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace ulrseg

#endif  // ULRSEG_TENSOR_H_
