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
#include "ulrseg/adam.h"

#include <cmath>

namespace ulrseg::nn {

Adam::Adam(ParamList params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.lr > 0.0)) throw InvalidArgument("Adam: lr must be positive");
  if (!(options_.beta1 > 0.0 && options_.beta1 < 1.0) ||
      !(options_.beta2 > 0.0 && options_.beta2 < 1.0)) {
    throw InvalidArgument("Adam: betas must lie in (0, 1)");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

void Adam::Step() {
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (size_t k = 0; k < params_.size(); ++k) {
    const NodePtr& node = params_[k].var.node();
    if (node->grad.empty()) continue;
    auto w = node->value.data();
    const auto g = node->grad.data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

BufferList Adam::StateBuffers() {
  BufferList out;
  for (size_t k = 0; k < params_.size(); ++k) {
    out.push_back({"m/" + params_[k].name, &m_[k]});
    out.push_back({"v/" + params_[k].name, &v_[k]});
  }
  return out;
}

}  // namespace ulrseg::nn
