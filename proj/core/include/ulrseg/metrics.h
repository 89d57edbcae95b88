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
#ifndef ULRSEG_METRICS_H_
#define ULRSEG_METRICS_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ulrseg/label_map.h"
#include "ulrseg/tensor.h"

// Segmentation and image-quality metrics.
namespace ulrseg::metrics {

// C x C counts, rows ground truth, columns prediction. Pixels whose ground
// truth is `ignore_index` are skipped.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void Add(const LabelMap& pred, const LabelMap& gt,
           int32_t ignore_index = kIgnoreIndex);
  int64_t at(int gt, int pred) const {
    return counts_[static_cast<size_t>(gt * c_ + pred)];
  }
  int64_t total() const;
  int num_classes() const { return c_; }

  // Mean IoU over classes present in the ground truth or the prediction.
  // Throws when no pixel has been counted.
  double MeanIou() const;

 private:
  int c_;
  std::vector<int64_t> counts_;
};

double MeanIou(const LabelMap& pred, const LabelMap& gt, int num_classes,
               int32_t ignore_index = kIgnoreIndex);

// 10 log10(max^2 / MSE); +infinity for identical inputs.
double Psnr(const Tensor& a, const Tensor& b, double max_val = 1.0);

// Gaussian-window SSIM (11 x 11, sigma 1.5) over all fully contained windows
// of (C, H, W) or (H, W) images, averaged over windows and channels.
double Ssim(const Tensor& a, const Tensor& b, double max_val = 1.0);

// Adjusted Rand index of the partitions induced by label identity. Pixels
// whose ground truth is `ignore_index` are skipped. Returns 1 when the
// index's maximum equals its expectation (both partitions trivial).
double Ari(const LabelMap& pred, const LabelMap& gt,
           int32_t ignore_index = kIgnoreIndex);

// 4-connected components of equal labels; pixels labelled `ignore_index`
// get component -1. Returns the component count.
int64_t ConnectedComponents(const LabelMap& labels, int32_t ignore_index,
                            std::vector<int64_t>& component);

// Ground-truth-region-weighted best IoU against predicted regions, both
// taken as connected components. Not symmetric.
double Covering(const LabelMap& pred, const LabelMap& gt,
                int32_t ignore_index = kIgnoreIndex);

// 0.75% of the image diagonal.
double DefaultBoundaryTolerance(int64_t height, int64_t width);

// Pixels with a 4-neighbour of a different label.
std::vector<uint8_t> BoundaryMask(const LabelMap& labels);

// Boundary F-measure with Euclidean matching tolerance `tol` pixels
// (negative selects the default). Both boundaries empty gives 1.
double BoundaryF(const LabelMap& pred, const LabelMap& gt, double tol = -1.0);

// Scores that need external pretrained networks. They report "unavailable"
// (nullopt) unless a scorer has been installed.
using ExternalScorer = std::function<double(const Tensor&, const Tensor&)>;
void SetExternalScorer(const std::string& name, ExternalScorer scorer);
std::optional<double> Lpips(const Tensor& a, const Tensor& b);
std::optional<double> Fid(const Tensor& a, const Tensor& b);

struct MetricRow {
  double miou = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double ari = 0.0;
  double covering = 0.0;
  double bf = 0.0;
};

// All metrics for one sample. `sr` and `hr` are (3, H, W).
MetricRow EvaluateSample(const LabelMap& pred, const LabelMap& gt,
                         const Tensor& sr, const Tensor& hr, int num_classes,
                         int32_t ignore_index = kIgnoreIndex,
                         double bf_tol = -1.0);

// Column-wise mean.
MetricRow MeanRow(const std::vector<MetricRow>& rows);

}  // namespace ulrseg::metrics

#endif  // ULRSEG_METRICS_H_
