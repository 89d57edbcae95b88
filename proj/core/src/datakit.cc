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
#include "ulrseg/datakit.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"
#include "ulrseg/image_io.h"

namespace ulrseg::datakit {
namespace {

constexpr double kCubicA = -0.5;

struct Taps {
  int64_t first = 0;
  std::vector<double> weights;
};

std::vector<Taps> ResampleTaps(int64_t in, int64_t out) {
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double filter_scale = std::max(scale, 1.0);
  const double support = 2.0 * filter_scale;
  std::vector<Taps> taps(static_cast<size_t>(out));
  for (int64_t o = 0; o < out; ++o) {
    const double center = (static_cast<double>(o) + 0.5) * scale;
    const int64_t lo = std::max<int64_t>(
        0, static_cast<int64_t>(center - support + 0.5));
    const int64_t hi = std::min<int64_t>(
        in, static_cast<int64_t>(center + support + 0.5));
    Taps& t = taps[static_cast<size_t>(o)];
    t.first = lo;
    double total = 0.0;
    for (int64_t x = lo; x < hi; ++x) {
      const double w =
          CubicKernel((static_cast<double>(x) - center + 0.5) / filter_scale);
      t.weights.push_back(w);
      total += w;
    }
    if (total != 0.0)
      for (double& w : t.weights) w /= total;
  }
  return taps;
}

double Jitter(std::mt19937_64& rng, double amplitude) {
  return std::uniform_real_distribution<double>(-amplitude, amplitude)(rng);
}

std::array<double, 3> HsvToRgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 1.0) * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

void FillRect(Sample& s, int64_t y0, int64_t y1, int64_t x0, int64_t x1,
              int32_t cls, std::mt19937_64& rng) {
  const int64_t h = s.hr.dim(1), w = s.hr.dim(2);
  auto color = RegionColor(cls);
  const double gain = 1.0 + Jitter(rng, 0.06);
  for (int64_t y = y0; y < y1; ++y)
    for (int64_t x = x0; x < x1; ++x) {
      s.label.at(y, x) = cls;
      for (int64_t c = 0; c < 3; ++c) {
        const double v = color[static_cast<size_t>(c)] * gain + Jitter(rng, 0.02);
        s.hr[(c * h + y) * w + x] = ByteToUnit(QuantizeToByte(v));
      }
    }
}

}  // namespace

void DatasetSpec::Validate() const {
  if (crop_size <= 0 || lr_size <= 0) {
    throw InvalidArgument("crop_size and lr_size must be positive");
  }
  if (crop_size % lr_size != 0) {
    throw InvalidArgument("crop_size " + std::to_string(crop_size) +
                          " is not divisible by lr_size " +
                          std::to_string(lr_size));
  }
  if (num_classes < 2) throw InvalidArgument("num_classes must be >= 2");
  if (ignore_index >= 0 && ignore_index < num_classes) {
    throw InvalidArgument("ignore_index collides with a class id");
  }
  if (split_sizes.train < 0 || split_sizes.val < 0 || split_sizes.test < 0) {
    throw InvalidArgument("split sizes must be non-negative");
  }
  if (objects_per_scene < 0) {
    throw InvalidArgument("objects_per_scene must be non-negative");
  }
}

double CubicKernel(double x) {
  x = std::abs(x);
  if (x < 1.0) return ((kCubicA + 2.0) * x - (kCubicA + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * kCubicA;
  return 0.0;
}

Tensor ResampleBicubic(const Tensor& img, int64_t target, bool clamp) {
  if (img.ndim() != 3) {
    throw InvalidArgument("ResampleBicubic expects (C, H, W), got " +
                          ShapeToString(img.shape()));
  }
  if (target < 1) throw InvalidArgument("ResampleBicubic: target must be >= 1");
  const int64_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  const auto tx = ResampleTaps(w, target);
  const auto ty = ResampleTaps(h, target);

  // Horizontal pass, then vertical.
  Tensor mid({c, h, target});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < h; ++y) {
      const double* row = img.raw() + (ch * h + y) * w;
      for (int64_t o = 0; o < target; ++o) {
        const Taps& t = tx[static_cast<size_t>(o)];
        double acc = 0.0;
        for (size_t k = 0; k < t.weights.size(); ++k)
          acc += t.weights[k] * row[t.first + static_cast<int64_t>(k)];
        mid[(ch * h + y) * target + o] = acc;
      }
    }
  Tensor out({c, target, target});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t o = 0; o < target; ++o) {
      const Taps& t = ty[static_cast<size_t>(o)];
      for (int64_t x = 0; x < target; ++x) {
        double acc = 0.0;
        for (size_t k = 0; k < t.weights.size(); ++k)
          acc += t.weights[k] *
                 mid[(ch * h + t.first + static_cast<int64_t>(k)) * target + x];
        out[(ch * target + o) * target + x] =
            clamp ? std::clamp(acc, 0.0, 1.0) : acc;
      }
    }
  return out;
}

Tensor DownsampleBicubic(const Tensor& img, int64_t target) {
  if (img.ndim() != 3 || img.dim(1) != img.dim(2)) {
    throw InvalidArgument("DownsampleBicubic expects a square (C, S, S) image, got " +
                          ShapeToString(img.shape()));
  }
  if (target < 1 || img.dim(1) % target != 0) {
    throw InvalidArgument("DownsampleBicubic: side " + std::to_string(img.dim(1)) +
                          " is not divisible by target " + std::to_string(target));
  }
  return ResampleBicubic(img, target, /*clamp=*/true);
}

std::array<double, 3> RegionColor(int32_t class_id) {
  static const std::array<std::array<double, 3>, 6> kFixed = {{
      {0.78, 0.76, 0.70},  // wall
      {0.45, 0.30, 0.18},  // floor
      {0.20, 0.35, 0.75},  // sofa
      {0.85, 0.20, 0.15},  // chair
      {0.15, 0.65, 0.25},  // table
      {0.90, 0.80, 0.10},  // painting
  }};
  if (class_id < 0 || class_id >= kNumRegionTypes) {
    throw InvalidArgument("no region type for class " + std::to_string(class_id));
  }
  if (class_id < static_cast<int32_t>(kFixed.size())) {
    return kFixed[static_cast<size_t>(class_id)];
  }
  const int k = class_id - static_cast<int>(kFixed.size());
  const double hue = std::fmod(0.11 + 0.61803398875 * k, 1.0);
  const double sat = 0.45 + 0.25 * (k % 3);
  const double val = 0.40 + 0.25 * ((k / 3) % 3);
  return HsvToRgb(hue, sat, val);
}

Sample SynthesizeScene(const DatasetSpec& spec, int64_t index) {
  spec.Validate();
  if (spec.num_classes > kNumRegionTypes) {
    throw InvalidArgument("num_classes " + std::to_string(spec.num_classes) +
                          " exceeds the " + std::to_string(kNumRegionTypes) +
                          " generatable region types");
  }
  std::seed_seq seq{static_cast<uint32_t>(spec.seed),
                    static_cast<uint32_t>(spec.seed >> 32),
                    static_cast<uint32_t>(index),
                    static_cast<uint32_t>(static_cast<uint64_t>(index) >> 32)};
  std::mt19937_64 rng(seq);
  const int64_t size = spec.crop_size;
  const int64_t cells = spec.lr_size;
  const int64_t f = spec.scale();
  auto uniform = [&rng](int64_t lo, int64_t hi) {
    return std::uniform_int_distribution<int64_t>(lo, std::max(lo, hi))(rng);
  };

  Sample s;
  s.hr = Tensor({3, size, size});
  s.label = LabelMap(size, size, kWallClass);
  FillRect(s, 0, size, 0, size, kWallClass, rng);

  // Region edges sit on the LR cell grid.
  const int64_t floor_rows = std::clamp<int64_t>(
      uniform((cells + 3) / 4, (cells * 45) / 100), 1, cells - 1);
  FillRect(s, (cells - floor_rows) * f, size, 0, size, kFloorClass, rng);

  const int object_classes = spec.num_classes - 2;
  if (object_classes > 0 && spec.objects_per_scene > 0) {
    const int64_t k_max = std::max<int64_t>(1, cells / 2);
    const int64_t k = std::min<int64_t>(spec.objects_per_scene, k_max);
    const int64_t slot = cells / k;
    for (int64_t j = 0; j < k; ++j) {
      const int32_t cls =
          2 + static_cast<int32_t>((index * k + j) % object_classes);
      const int64_t w = uniform(std::min<int64_t>(2, slot), slot - (slot > 3 ? 1 : 0));
      const int64_t h = uniform(2, std::max<int64_t>(2, cells / 2));
      const int64_t x0 = j * slot + uniform(0, slot - w);
      const int64_t y0 = uniform(0, cells - h);
      FillRect(s, y0 * f, (y0 + h) * f, x0 * f, (x0 + w) * f, cls, rng);
    }
  }
  s.lr = DownsampleBicubic(s.hr, cells);
  return s;
}

std::vector<Sample> SynthGenerate(const DatasetSpec& spec) {
  spec.Validate();
  if (spec.num_classes > kNumRegionTypes) {
    throw InvalidArgument("num_classes " + std::to_string(spec.num_classes) +
                          " exceeds the " + std::to_string(kNumRegionTypes) +
                          " generatable region types");
  }
  const int64_t n = spec.corpus_size();
  const int64_t per_scene = std::min<int64_t>(
      spec.objects_per_scene, std::max<int64_t>(1, spec.lr_size / 2));
  if (spec.num_classes > 2 && n * per_scene < spec.num_classes - 2) {
    throw InvalidArgument("corpus of " + std::to_string(n) +
                          " scenes cannot contain all " +
                          std::to_string(spec.num_classes) + " classes");
  }
  std::vector<Sample> corpus;
  corpus.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) corpus.push_back(SynthesizeScene(spec, i));
  return corpus;
}

void ValidateLabels(const LabelMap& label, int num_classes,
                    int32_t ignore_index) {
  for (int32_t v : label.data()) {
    if ((v < 0 || v >= num_classes) && v != ignore_index) {
      throw InvalidArgument("label value " + std::to_string(v) +
                            " outside [0, " + std::to_string(num_classes) +
                            ") and not the ignore index");
    }
  }
}

Tensor EncodeOnehot(const LabelMap& label, int num_classes,
                    int32_t ignore_index) {
  if (num_classes < 1) throw InvalidArgument("EncodeOnehot: num_classes < 1");
  ValidateLabels(label, num_classes, ignore_index);
  const int64_t hw = label.size();
  Tensor out({num_classes, label.height(), label.width()});
  for (int64_t i = 0; i < hw; ++i) {
    const int32_t v = label[i];
    if (v == ignore_index) continue;
    out[v * hw + i] = 1.0;
  }
  return out;
}

Splits MakeSplits(const DatasetSpec& spec, int64_t corpus_size) {
  spec.Validate();
  if (spec.split_sizes.total() != corpus_size) {
    throw InvalidArgument("split sizes sum to " +
                          std::to_string(spec.split_sizes.total()) +
                          " but the corpus has " + std::to_string(corpus_size) +
                          " samples");
  }
  std::vector<int64_t> order(static_cast<size_t>(corpus_size));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);
  Splits out;
  auto take = [&order](int64_t begin, int64_t count) {
    std::vector<int64_t> part(order.begin() + begin, order.begin() + begin + count);
    std::sort(part.begin(), part.end());
    return part;
  };
  out.train = take(0, spec.split_sizes.train);
  out.val = take(spec.split_sizes.train, spec.split_sizes.val);
  out.test = take(spec.split_sizes.train + spec.split_sizes.val, spec.split_sizes.test);
  return out;
}

std::string SampleFileName(int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05lld.png", static_cast<long long>(index));
  return buf;
}

void WriteSample(const std::filesystem::path& root, int64_t index,
                 const Sample& sample) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "labels");
  WriteRgbPng(root / "images" / SampleFileName(index), sample.hr);
  WriteLabelPng(root / "labels" / SampleFileName(index), sample.label);
}

Sample ReadSample(const std::filesystem::path& root, const std::string& file,
                  int64_t lr_size) {
  Sample s;
  s.hr = ReadRgbPng(root / "images" / file);
  s.label = ReadLabelPng(root / "labels" / file);
  if (s.label.height() != s.hr.dim(1) || s.label.width() != s.hr.dim(2)) {
    throw InvalidArgument("image and label sizes differ for " + file);
  }
  s.lr = DownsampleBicubic(s.hr, lr_size);
  return s;
}

void WriteSplitsJson(const std::filesystem::path& root, const Splits& splits) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  auto names = [](const std::vector<int64_t>& idx) {
    std::vector<std::string> out;
    for (int64_t i : idx) out.push_back(SampleFileName(i));
    return out;
  };
  j["train"] = names(splits.train);
  j["val"] = names(splits.val);
  j["test"] = names(splits.test);
  std::ofstream(root / "splits.json") << j.dump(2) << "\n";
}

const std::vector<std::string>& SplitFiles::Get(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw InvalidArgument("unknown split '" + name + "'");
}

SplitFiles ReadSplitsJson(const std::filesystem::path& root) {
  std::ifstream in(root / "splits.json");
  if (!in) throw InvalidArgument("missing " + (root / "splits.json").string());
  const auto j = nlohmann::json::parse(in);
  SplitFiles out;
  out.train = j.at("train").get<std::vector<std::string>>();
  out.val = j.at("val").get<std::vector<std::string>>();
  out.test = j.at("test").get<std::vector<std::string>>();
  return out;
}

Sample Quantized(const Sample& sample, int64_t lr_size) {
  Sample s;
  s.hr = QuantizeImage(sample.hr);
  s.lr = DownsampleBicubic(s.hr, lr_size);
  s.label = sample.label;
  return s;
}

}  // namespace ulrseg::datakit
