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
#include "ulrseg/spectral_norm.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

namespace ulrseg::nn {
namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

std::pair<int64_t, int64_t> MatrixDims(const Tensor& w) {
  if (w.ndim() < 1 || w.numel() == 0) {
    throw InvalidArgument("spectral norm of an empty weight");
  }
  const int64_t rows = w.dim(0);
  return {rows, w.numel() / rows};
}

void NormalizeInPlace(VecMap x) {
  const double n = x.norm();
  x /= std::max(n, kSigmaFloor);
}

void CheckState(const Tensor& w, const SpectralNormState& st) {
  auto [rows, cols] = MatrixDims(w);
  if (st.u.numel() != rows || st.v.numel() != cols) {
    throw InvalidArgument("spectral norm state does not match weight " +
                          ShapeToString(w.shape()));
  }
}

}  // namespace

SpectralNormState InitSpectralNormState(const Tensor& weight,
                                        std::mt19937_64& rng, int warmup) {
  auto [rows, cols] = MatrixDims(weight);
  SpectralNormState st;
  st.u = Tensor::RandomNormal({rows}, rng);
  NormalizeInPlace(VecMap(st.u.raw(), rows));
  st.v = Tensor({cols});
  ConstMatMap m(weight.raw(), rows, cols);
  VecMap(st.v.raw(), cols).noalias() = m.transpose() * ConstVecMap(st.u.raw(), rows);
  NormalizeInPlace(VecMap(st.v.raw(), cols));
  if (warmup > 0) PowerIterate(weight, st, warmup);
  return st;
}

double PowerIterate(const Tensor& weight, SpectralNormState& state, int iters) {
  CheckState(weight, state);
  auto [rows, cols] = MatrixDims(weight);
  ConstMatMap m(weight.raw(), rows, cols);
  VecMap u(state.u.raw(), rows);
  VecMap v(state.v.raw(), cols);
  for (int i = 0; i < iters; ++i) {
    v.noalias() = m.transpose() * u;
    NormalizeInPlace(v);
    u.noalias() = m * v;
    NormalizeInPlace(u);
  }
  return u.dot(m * v);
}

double SigmaEstimate(const Tensor& weight, const SpectralNormState& state) {
  CheckState(weight, state);
  auto [rows, cols] = MatrixDims(weight);
  ConstMatMap m(weight.raw(), rows, cols);
  return ConstVecMap(state.u.raw(), rows).dot(m * ConstVecMap(state.v.raw(), cols));
}

Tensor SpectralNormalize(const Tensor& weight, SpectralNormState& state,
                         int iters) {
  if (iters < 1) throw InvalidArgument("SpectralNormalize: iters must be >= 1");
  const double sigma = std::max(PowerIterate(weight, state, iters), kSigmaFloor);
  Tensor out = weight;
  out.Scale(1.0 / sigma);
  return out;
}

Var SpectralNormWeight(const Var& weight, SpectralNormState& state, int iters) {
  if (iters < 0) throw InvalidArgument("SpectralNormWeight: negative iters");
  const double sigma = std::max(
      iters > 0 ? PowerIterate(weight.value(), state, iters)
                : SigmaEstimate(weight.value(), state),
      kSigmaFloor);
  Tensor out = weight.value();
  out.Scale(1.0 / sigma);
  return MakeResult(std::move(out), {weight},
                    [sigma, u = state.u, v = state.v](Node& self) {
                      const Tensor& g = self.grad;
                      double inner = 0.0;
                      for (int64_t i = 0; i < g.numel(); ++i)
                        inner += g[i] * self.value[i];
                      Tensor& gw = self.inputs[0]->EnsureGrad();
                      const int64_t rows = u.numel(), cols = v.numel();
                      for (int64_t r = 0; r < rows; ++r)
                        for (int64_t c = 0; c < cols; ++c) {
                          const int64_t i = r * cols + c;
                          gw[i] += (g[i] - inner * u[r] * v[c]) / sigma;
                        }
                    });
}

}  // namespace ulrseg::nn
