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
#ifndef ULRSEG_LOSSES_H_
#define ULRSEG_LOSSES_H_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ulrseg/label_map.h"
#include "ulrseg/ops.h"

// Scalar training objectives. Every Var-returning loss yields a one-element
// tensor.
namespace ulrseg::losses {

struct LossWeights {
  double lambda1 = 0.5;
  double lambda2 = 0.01;
  double lambda3 = 0.01;
  double alpha = 0.3;

  void Validate() const;
};

// Mean squared difference over all elements.
nn::Var PixelL2(const nn::Var& gt, const nn::Var& pred);
// Mean absolute difference over all elements.
nn::Var PixelL1(const nn::Var& gt, const nn::Var& pred);

// Mean over non-ignored pixels of logsumexp(x) - x_y for (N, C, H, W) logits.
// Throws when every pixel is ignored or a label is out of range.
nn::Var CrossEntropy(const nn::Var& logits, const std::vector<LabelMap>& labels,
                     int32_t ignore_index = kIgnoreIndex);

// -[y log sigmoid(u) + (1 - y) log(1 - sigmoid(u))] in log-sigmoid form.
double Bce(double u, double y);
// Batch mean of Bce over a vector of logits.
nn::Var Bce(const nn::Var& logits, double y);

// Bce(real, 1) + Bce(fake, 0), each averaged over the batch.
nn::Var DiscLoss(const nn::Var& logit_real, const nn::Var& logit_fake);
// Bce(fake, 1), averaged over the batch.
nn::Var AdvLoss(const nn::Var& logit_fake);

// (1 - alpha)(lambda1 l2 + lambda2 fea + lambda3 adv) + alpha ce. Undefined
// parts count as zero.
nn::Var TotalLoss(const nn::Var& l2, const nn::Var& fea, const nn::Var& adv,
                  const nn::Var& ce, const LossWeights& w);
double TotalLoss(double l2, double fea, double adv, double ce,
                 const LossWeights& w);

// Named losses of one step; absent terms are omitted from Entries().
struct LossBundle {
  std::optional<double> l1;
  std::optional<double> l2;
  std::optional<double> fea;
  std::optional<double> adv;
  std::optional<double> ce;
  std::optional<double> d;
  std::optional<double> total;

  std::vector<std::pair<std::string, double>> Entries() const;
  bool AllFinite() const;
};

}  // namespace ulrseg::losses

#endif  // ULRSEG_LOSSES_H_
