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
#include "ulrseg/losses.h"

#include <cmath>
#include <string>

namespace ulrseg::losses {
namespace {

double SoftplusValue(double u) {
  return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
}

void RequireScalar(const nn::Var& v, const char* what) {
  if (v.defined() && v.value().numel() != 1) {
    throw InvalidArgument(std::string(what) + " must be a scalar");
  }
}

}  // namespace

void LossWeights::Validate() const {
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) {
    throw InvalidArgument("loss weights must be non-negative");
  }
  if (alpha < 0 || alpha > 1) throw InvalidArgument("alpha must lie in [0, 1]");
}

nn::Var PixelL2(const nn::Var& gt, const nn::Var& pred) {
  CheckSameShape(gt.value(), pred.value(), "PixelL2");
  nn::Var d = nn::Sub(gt, pred);
  return nn::Mean(nn::Mul(d, d));
}

nn::Var PixelL1(const nn::Var& gt, const nn::Var& pred) {
  CheckSameShape(gt.value(), pred.value(), "PixelL1");
  return nn::Mean(nn::Abs(nn::Sub(gt, pred)));
}

nn::Var CrossEntropy(const nn::Var& logits, const std::vector<LabelMap>& labels,
                     int32_t ignore_index) {
  const Shape& s = logits.shape();
  if (s.size() != 4) {
    throw InvalidArgument("CrossEntropy expects (N, C, H, W) logits, got " +
                          ShapeToString(s));
  }
  const int64_t n = s[0], c = s[1], hw = s[2] * s[3];
  if (static_cast<int64_t>(labels.size()) != n) {
    throw InvalidArgument("CrossEntropy: batch of logits and labels differ");
  }
  for (const LabelMap& l : labels) {
    if (l.height() != s[2] || l.width() != s[3]) {
      throw InvalidArgument("CrossEntropy: label size differs from logits");
    }
    for (int32_t v : l.data()) {
      if (v != ignore_index && (v < 0 || v >= c)) {
        throw InvalidArgument("CrossEntropy: label " + std::to_string(v) +
                              " outside [0, " + std::to_string(c) + ")");
      }
    }
  }
  const Tensor& x = logits.value();
  int64_t counted = 0;
  double total = 0.0;
  for (int64_t b = 0; b < n; ++b)
    for (int64_t i = 0; i < hw; ++i) {
      const int32_t y = labels[static_cast<size_t>(b)][i];
      if (y == ignore_index) continue;
      const double* px = x.raw() + b * c * hw + i;
      int64_t arg = 0;
      for (int64_t k = 1; k < c; ++k)
        if (px[k * hw] > px[arg * hw]) arg = k;
      const double m = px[arg * hw];
      double rest = 0.0;
      for (int64_t k = 0; k < c; ++k)
        if (k != arg) rest += std::exp(px[k * hw] - m);
      total += std::log1p(rest) + (m - px[y * hw]);
      ++counted;
    }
  if (counted == 0) {
    throw InvalidArgument("CrossEntropy: every pixel carries the ignore index");
  }
  return nn::MakeResult(
      Tensor({1}, total / static_cast<double>(counted)), {logits},
      [labels, ignore_index, n, c, hw, counted](nn::Node& self) {
        nn::Node& in = *self.inputs[0];
        const double scale = self.grad[0] / static_cast<double>(counted);
        Tensor& g = in.EnsureGrad();
        for (int64_t b = 0; b < n; ++b)
          for (int64_t i = 0; i < hw; ++i) {
            const int32_t y = labels[static_cast<size_t>(b)][i];
            if (y == ignore_index) continue;
            const double* px = in.value.raw() + b * c * hw + i;
            double m = px[0];
            for (int64_t k = 1; k < c; ++k) m = std::max(m, px[k * hw]);
            double z = 0.0;
            for (int64_t k = 0; k < c; ++k) z += std::exp(px[k * hw] - m);
            double* pg = g.raw() + b * c * hw + i;
            for (int64_t k = 0; k < c; ++k) {
              const double p = std::exp(px[k * hw] - m) / z;
              pg[k * hw] += scale * (p - (k == y ? 1.0 : 0.0));
            }
          }
      });
}

double Bce(double u, double y) {
  return y * SoftplusValue(-u) + (1.0 - y) * SoftplusValue(u);
}

nn::Var Bce(const nn::Var& logits, double y) {
  nn::Var pos = nn::Softplus(nn::Scale(logits, -1.0));
  nn::Var neg = nn::Softplus(logits);
  nn::Var per;
  if (y == 1.0) {
    per = pos;
  } else if (y == 0.0) {
    per = neg;
  } else {
    per = nn::Add(nn::Scale(pos, y), nn::Scale(neg, 1.0 - y));
  }
  return nn::Mean(per);
}

nn::Var DiscLoss(const nn::Var& logit_real, const nn::Var& logit_fake) {
  return nn::Add(Bce(logit_real, 1.0), Bce(logit_fake, 0.0));
}

nn::Var AdvLoss(const nn::Var& logit_fake) { return Bce(logit_fake, 1.0); }

nn::Var TotalLoss(const nn::Var& l2, const nn::Var& fea, const nn::Var& adv,
                  const nn::Var& ce, const LossWeights& w) {
  RequireScalar(l2, "l2");
  RequireScalar(fea, "fea");
  RequireScalar(adv, "adv");
  RequireScalar(ce, "ce");
  std::vector<nn::Var> parts;
  std::vector<double> coeffs;
  auto add = [&](const nn::Var& v, double k) {
    if (!v.defined()) return;
    parts.push_back(v);
    coeffs.push_back(k);
  };
  add(l2, (1.0 - w.alpha) * w.lambda1);
  add(fea, (1.0 - w.alpha) * w.lambda2);
  add(adv, (1.0 - w.alpha) * w.lambda3);
  add(ce, w.alpha);
  if (parts.empty()) return nn::Constant(Tensor({1}, 0.0));
  return nn::WeightedSum(parts, coeffs);
}

double TotalLoss(double l2, double fea, double adv, double ce,
                 const LossWeights& w) {
  return (1.0 - w.alpha) * (w.lambda1 * l2 + w.lambda2 * fea + w.lambda3 * adv) +
         w.alpha * ce;
}

std::vector<std::pair<std::string, double>> LossBundle::Entries() const {
  std::vector<std::pair<std::string, double>> out;
  auto add = [&out](const char* name, const std::optional<double>& v) {
    if (v) out.emplace_back(name, *v);
  };
  add("l1", l1);
  add("l2", l2);
  add("fea", fea);
  add("adv", adv);
  add("ce", ce);
  add("d", d);
  add("total", total);
  return out;
}

bool LossBundle::AllFinite() const {
  for (const auto& [name, v] : Entries())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace ulrseg::losses
