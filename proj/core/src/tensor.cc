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
#include "ulrseg/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ulrseg {

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw InvalidArgument("negative dimension in " + ShapeToString(shape));
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)),
      data_(static_cast<size_t>(NumElements(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (NumElements(shape_) != static_cast<int64_t>(data_.size())) {
    throw InvalidArgument("tensor data size " + std::to_string(data_.size()) +
                          " does not match shape " + ShapeToString(shape_));
  }
}

Tensor Tensor::RandomNormal(Shape shape, std::mt19937_64& rng, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data_) v = dist(rng);
  return t;
}

Tensor Tensor::RandomUniform(Shape shape, std::mt19937_64& rng, double lo,
                             double hi) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data_) v = dist(rng);
  return t;
}

int64_t Tensor::dim(int axis) const {
  if (axis < 0) axis += ndim();
  if (axis < 0 || axis >= ndim()) {
    throw InvalidArgument("axis out of range for shape " + ShapeToString(shape_));
  }
  return shape_[static_cast<size_t>(axis)];
}

double& Tensor::at(int64_t n, int64_t c, int64_t h, int64_t w) {
  return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

double Tensor::at(int64_t n, int64_t c, int64_t h, int64_t w) const {
  return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

Tensor Tensor::Reshaped(Shape shape) const {
  Tensor t = *this;
  t.Reshape(std::move(shape));
  return t;
}

void Tensor::Reshape(Shape shape) {
  if (NumElements(shape) != numel()) {
    throw InvalidArgument("cannot reshape " + ShapeToString(shape_) + " to " +
                          ShapeToString(shape));
  }
  shape_ = std::move(shape);
}

Tensor Tensor::Slice(int64_t begin, int64_t end) const {
  if (ndim() == 0 || begin < 0 || end > shape_[0] || begin > end) {
    throw InvalidArgument("bad slice of " + ShapeToString(shape_));
  }
  const int64_t row = shape_[0] ? numel() / shape_[0] : 0;
  Shape s = shape_;
  s[0] = end - begin;
  return Tensor(std::move(s),
                std::vector<double>(data_.begin() + begin * row,
                                    data_.begin() + end * row));
}

void Tensor::Fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::AddInPlace(const Tensor& other, double scale) {
  CheckSameShape(*this, other, "AddInPlace");
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

void Tensor::Scale(double factor) {
  for (double& v : data_) v *= factor;
}

double Tensor::Sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

double Tensor::MaxAbs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor Stack(std::span<const Tensor> items) {
  if (items.empty()) throw InvalidArgument("Stack of zero tensors");
  Shape shape = items[0].shape();
  std::vector<double> data;
  data.reserve(static_cast<size_t>(items[0].numel()) * items.size());
  for (const Tensor& t : items) {
    CheckSameShape(items[0], t, "Stack");
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  shape.insert(shape.begin(), static_cast<int64_t>(items.size()));
  return Tensor(std::move(shape), std::move(data));
}

Tensor Unstack(const Tensor& batch, int64_t n) {
  Tensor t = batch.Slice(n, n + 1);
  Shape s(batch.shape().begin() + 1, batch.shape().end());
  t.Reshape(std::move(s));
  return t;
}

void CheckSameShape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(what) + ": shape mismatch " +
                          ShapeToString(a.shape()) + " vs " +
                          ShapeToString(b.shape()));
  }
}

}  // namespace ulrseg
