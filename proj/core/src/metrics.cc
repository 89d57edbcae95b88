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
#include "ulrseg/metrics.h"

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <unordered_map>

namespace ulrseg::metrics {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

double Choose2(double n) { return n * (n - 1.0) / 2.0; }

std::vector<double> GaussianWindow() {
  std::vector<double> g(kWindow);
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Valid separable filtering of one (h, w) plane.
std::vector<double> Filter(const double* x, int64_t h, int64_t w,
                           const std::vector<double>& g) {
  const int64_t ow = w - kWindow + 1, oh = h - kWindow + 1;
  std::vector<double> rows(static_cast<size_t>(h * ow));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * x[y * w + c + k];
      rows[y * ow + c] = acc;
    }
  std::vector<double> out(static_cast<size_t>(oh * ow));
  for (int64_t y = 0; y < oh; ++y)
    for (int64_t c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * rows[(y + k) * ow + c];
      out[y * ow + c] = acc;
    }
  return out;
}

std::mutex& ScorerMutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, ExternalScorer>& Scorers() {
  static std::map<std::string, ExternalScorer> s;
  return s;
}

std::optional<double> RunScorer(const std::string& name, const Tensor& a,
                                const Tensor& b) {
  ExternalScorer fn;
  {
    std::lock_guard<std::mutex> lock(ScorerMutex());
    auto it = Scorers().find(name);
    if (it == Scorers().end()) return std::nullopt;
    fn = it->second;
  }
  return fn(a, b);
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(int num_classes) : c_(num_classes) {
  if (num_classes < 1) throw InvalidArgument("num_classes must be >= 1");
  counts_.assign(static_cast<size_t>(num_classes * num_classes), 0);
}

void ConfusionMatrix::Add(const LabelMap& pred, const LabelMap& gt,
                          int32_t ignore_index) {
  CheckSameShape(pred, gt, "ConfusionMatrix");
  for (int64_t i = 0; i < gt.size(); ++i) {
    const int32_t g = gt[i];
    if (g == ignore_index) continue;
    const int32_t p = pred[i];
    if (g < 0 || g >= c_ || p < 0 || p >= c_) {
      throw InvalidArgument("label outside [0, " + std::to_string(c_) + ")");
    }
    ++counts_[static_cast<size_t>(g * c_ + p)];
  }
}

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t v : counts_) t += v;
  return t;
}

double ConfusionMatrix::MeanIou() const {
  double sum = 0.0;
  int present = 0;
  for (int k = 0; k < c_; ++k) {
    int64_t row = 0, col = 0;
    for (int j = 0; j < c_; ++j) {
      row += at(k, j);
      col += at(j, k);
    }
    const int64_t inter = at(k, k);
    const int64_t uni = row + col - inter;
    if (uni == 0) continue;
    sum += static_cast<double>(inter) / static_cast<double>(uni);
    ++present;
  }
  if (present == 0) throw InvalidArgument("mIoU of an empty confusion matrix");
  return sum / present;
}

double MeanIou(const LabelMap& pred, const LabelMap& gt, int num_classes,
               int32_t ignore_index) {
  ConfusionMatrix cm(num_classes);
  cm.Add(pred, gt, ignore_index);
  return cm.MeanIou();
}

double Psnr(const Tensor& a, const Tensor& b, double max_val) {
  CheckSameShape(a, b, "Psnr");
  if (a.numel() == 0) throw InvalidArgument("Psnr of empty images");
  double mse = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

double Ssim(const Tensor& a, const Tensor& b, double max_val) {
  CheckSameShape(a, b, "Ssim");
  if (a.ndim() != 2 && a.ndim() != 3) {
    throw InvalidArgument("Ssim expects (H, W) or (C, H, W), got " +
                          ShapeToString(a.shape()));
  }
  const int64_t c = a.ndim() == 3 ? a.dim(0) : 1;
  const int64_t h = a.dim(a.ndim() - 2), w = a.dim(a.ndim() - 1);
  if (h < kWindow || w < kWindow) {
    throw InvalidArgument("Ssim: image " + std::to_string(h) + "x" +
                          std::to_string(w) + " is smaller than the " +
                          std::to_string(kWindow) + "x" +
                          std::to_string(kWindow) + " window");
  }
  const double c1 = (0.01 * max_val) * (0.01 * max_val);
  const double c2 = (0.03 * max_val) * (0.03 * max_val);
  const auto g = GaussianWindow();
  const int64_t plane = h * w;
  std::vector<double> aa(static_cast<size_t>(plane)), bb(aa.size()), ab(aa.size());
  double total = 0.0;
  int64_t windows = 0;
  for (int64_t ch = 0; ch < c; ++ch) {
    const double* pa = a.raw() + ch * plane;
    const double* pb = b.raw() + ch * plane;
    for (int64_t i = 0; i < plane; ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = Filter(pa, h, w, g), mu_b = Filter(pb, h, w, g);
    const auto e_aa = Filter(aa.data(), h, w, g), e_bb = Filter(bb.data(), h, w, g);
    const auto e_ab = Filter(ab.data(), h, w, g);
    for (size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb;
      const double cov = e_ab[i] - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    windows += static_cast<int64_t>(mu_a.size());
  }
  return total / static_cast<double>(windows);
}

double Ari(const LabelMap& pred, const LabelMap& gt, int32_t ignore_index) {
  CheckSameShape(pred, gt, "Ari");
  std::unordered_map<int64_t, int64_t> cells;
  std::unordered_map<int32_t, int64_t> rows, cols;
  int64_t n = 0;
  for (int64_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == ignore_index) continue;
    const int64_t key = (static_cast<int64_t>(gt[i]) << 32) ^
                        static_cast<uint32_t>(pred[i]);
    ++cells[key];
    ++rows[gt[i]];
    ++cols[pred[i]];
    ++n;
  }
  if (n < 2) throw InvalidArgument("Ari needs at least two labelled pixels");
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [k, v] : cells) index += Choose2(static_cast<double>(v));
  for (const auto& [k, v] : rows) sum_rows += Choose2(static_cast<double>(v));
  for (const auto& [k, v] : cols) sum_cols += Choose2(static_cast<double>(v));
  const double expected = sum_rows * sum_cols / Choose2(static_cast<double>(n));
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

int64_t ConnectedComponents(const LabelMap& labels, int32_t ignore_index,
                            std::vector<int64_t>& component) {
  const int64_t h = labels.height(), w = labels.width();
  component.assign(static_cast<size_t>(h * w), -1);
  std::vector<int64_t> stack;
  int64_t next = 0;
  for (int64_t start = 0; start < h * w; ++start) {
    if (component[start] >= 0 || labels[start] == ignore_index) continue;
    const int32_t cls = labels[start];
    component[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const int64_t p = stack.back();
      stack.pop_back();
      const int64_t y = p / w, x = p % w;
      const int64_t nbrs[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& nb : nbrs) {
        if (nb[0] < 0 || nb[0] >= h || nb[1] < 0 || nb[1] >= w) continue;
        const int64_t q = nb[0] * w + nb[1];
        if (component[q] >= 0 || labels[q] != cls) continue;
        component[q] = next;
        stack.push_back(q);
      }
    }
    ++next;
  }
  return next;
}

double Covering(const LabelMap& pred, const LabelMap& gt, int32_t ignore_index) {
  CheckSameShape(pred, gt, "Covering");
  // Pixels ignored in the ground truth are removed from both partitions.
  LabelMap masked = pred;
  for (int64_t i = 0; i < gt.size(); ++i)
    if (gt[i] == ignore_index) masked[i] = ignore_index;
  std::vector<int64_t> cg, cp;
  const int64_t ng = ConnectedComponents(gt, ignore_index, cg);
  const int64_t np = ConnectedComponents(masked, ignore_index, cp);
  std::vector<int64_t> size_g(static_cast<size_t>(ng), 0), size_p(static_cast<size_t>(np), 0);
  std::unordered_map<int64_t, int64_t> inter;
  int64_t n = 0;
  for (size_t i = 0; i < cg.size(); ++i) {
    if (cg[i] < 0) continue;
    ++size_g[cg[i]];
    ++size_p[cp[i]];
    ++inter[cg[i] * np + cp[i]];
    ++n;
  }
  if (n == 0) throw InvalidArgument("Covering of fully ignored maps");
  std::vector<double> best(static_cast<size_t>(ng), 0.0);
  for (const auto& [key, count] : inter) {
    const int64_t g = key / np, p = key % np;
    const double iou = static_cast<double>(count) /
                       static_cast<double>(size_g[g] + size_p[p] - count);
    best[g] = std::max(best[g], iou);
  }
  double total = 0.0;
  for (int64_t g = 0; g < ng; ++g) total += static_cast<double>(size_g[g]) * best[g];
  return total / static_cast<double>(n);
}

double DefaultBoundaryTolerance(int64_t height, int64_t width) {
  return 0.0075 * std::hypot(static_cast<double>(height), static_cast<double>(width));
}

std::vector<uint8_t> BoundaryMask(const LabelMap& labels) {
  const int64_t h = labels.height(), w = labels.width();
  std::vector<uint8_t> mask(static_cast<size_t>(h * w), 0);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const int32_t v = labels.at(y, x);
      if ((x + 1 < w && labels.at(y, x + 1) != v) ||
          (y + 1 < h && labels.at(y + 1, x) != v) ||
          (x > 0 && labels.at(y, x - 1) != v) ||
          (y > 0 && labels.at(y - 1, x) != v)) {
        mask[y * w + x] = 1;
      }
    }
  return mask;
}

namespace {

// Fraction of `from` boundary pixels with a `to` boundary pixel within tol.
double MatchedFraction(const std::vector<uint8_t>& from,
                       const std::vector<uint8_t>& to, int64_t h, int64_t w,
                       double tol, int64_t& count) {
  const int64_t r = static_cast<int64_t>(std::floor(tol));
  const double tol2 = tol * tol;
  int64_t matched = 0;
  count = 0;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      if (!from[y * w + x]) continue;
      ++count;
      bool hit = false;
      for (int64_t dy = -r; dy <= r && !hit; ++dy) {
        const int64_t yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int64_t dx = -r; dx <= r; ++dx) {
          const int64_t xx = x + dx;
          if (xx < 0 || xx >= w || !to[yy * w + xx]) continue;
          if (static_cast<double>(dy * dy + dx * dx) <= tol2) {
            hit = true;
            break;
          }
        }
      }
      matched += hit;
    }
  return count ? static_cast<double>(matched) / static_cast<double>(count) : 0.0;
}

}  // namespace

double BoundaryF(const LabelMap& pred, const LabelMap& gt, double tol) {
  CheckSameShape(pred, gt, "BoundaryF");
  const int64_t h = gt.height(), w = gt.width();
  if (tol < 0) tol = DefaultBoundaryTolerance(h, w);
  const auto bp = BoundaryMask(pred), bg = BoundaryMask(gt);
  int64_t np = 0, ng = 0;
  const double precision = MatchedFraction(bp, bg, h, w, tol, np);
  const double recall = MatchedFraction(bg, bp, h, w, tol, ng);
  if (np == 0 && ng == 0) return 1.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

void SetExternalScorer(const std::string& name, ExternalScorer scorer) {
  if (name != "lpips" && name != "fid") {
    throw InvalidArgument("unknown external metric '" + name + "'");
  }
  std::lock_guard<std::mutex> lock(ScorerMutex());
  if (scorer) {
    Scorers()[name] = std::move(scorer);
  } else {
    Scorers().erase(name);
  }
}

std::optional<double> Lpips(const Tensor& a, const Tensor& b) {
  return RunScorer("lpips", a, b);
}

std::optional<double> Fid(const Tensor& a, const Tensor& b) {
  return RunScorer("fid", a, b);
}

MetricRow EvaluateSample(const LabelMap& pred, const LabelMap& gt,
                         const Tensor& sr, const Tensor& hr, int num_classes,
                         int32_t ignore_index, double bf_tol) {
  MetricRow r;
  r.miou = MeanIou(pred, gt, num_classes, ignore_index);
  r.psnr = Psnr(sr, hr);
  r.ssim = Ssim(sr, hr);
  r.ari = Ari(pred, gt, ignore_index);
  r.covering = Covering(pred, gt, ignore_index);
  r.bf = BoundaryF(pred, gt, bf_tol);
  return r;
}

MetricRow MeanRow(const std::vector<MetricRow>& rows) {
  if (rows.empty()) throw InvalidArgument("MeanRow of no rows");
  MetricRow m;
  for (const MetricRow& r : rows) {
    m.miou += r.miou;
    m.psnr += r.psnr;
    m.ssim += r.ssim;
    m.ari += r.ari;
    m.covering += r.covering;
    m.bf += r.bf;
  }
  const double n = static_cast<double>(rows.size());
  m.miou /= n;
  m.psnr /= n;
  m.ssim /= n;
  m.ari /= n;
  m.covering /= n;
  m.bf /= n;
  return m;
}

}  // namespace ulrseg::metrics
