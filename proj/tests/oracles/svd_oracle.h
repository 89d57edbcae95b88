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
#ifndef ULRSEG_TESTS_ORACLES_SVD_ORACLE_H_
#define ULRSEG_TESTS_ORACLES_SVD_ORACLE_H_

#include <Eigen/Dense>

#include "ulrseg/tensor.h"

namespace ulrseg::testing {

// Largest singular value of a weight viewed as (dim0, numel / dim0), from a
// full bidiagonal SVD.
inline double TopSingularValue(const Tensor& w) {
  const int64_t rows = w.dim(0);
  const int64_t cols = w.numel() / rows;
  Eigen::MatrixXd m(rows, cols);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) m(r, c) = w[r * cols + c];
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

}  // namespace ulrseg::testing

#endif  // ULRSEG_TESTS_ORACLES_SVD_ORACLE_H_
