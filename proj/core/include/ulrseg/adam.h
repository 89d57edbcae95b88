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
#ifndef ULRSEG_ADAM_H_
#define ULRSEG_ADAM_H_

#include <cstdint>
#include <vector>

#include "ulrseg/autograd.h"

namespace ulrseg::nn {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Parameters without an
// accumulated gradient are left untouched by Step().
class Adam {
 public:
  Adam(ParamList params, AdamOptions options);

  void Step();
  void ZeroGrad() { ZeroGrads(params_); }

  const AdamOptions& options() const { return options_; }
  int64_t step_count() const { return step_; }
  void set_step_count(int64_t step) { step_ = step; }
  const ParamList& params() const { return params_; }

  // First/second moment tensors, named "m/<param>" and "v/<param>".
  BufferList StateBuffers();

 private:
  ParamList params_;
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  int64_t step_ = 0;
};

}  // namespace ulrseg::nn

#endif  // ULRSEG_ADAM_H_
