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
#include "ulrseg/ops.h"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

namespace ulrseg::nn {
namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

void Require4D(const Tensor& t, const char* op) {
  if (t.ndim() != 4) {
    throw InvalidArgument(std::string(op) + " expects an NCHW tensor, got " +
                          ShapeToString(t.shape()));
  }
}

struct ConvGeometry {
  int64_t n, cin, h, w;
  int64_t cout, kh, kw;
  int64_t ho, wo;
  int64_t stride, pad, dil;

  int64_t patch() const { return cin * kh * kw; }
  bool pointwise() const {
    return kh == 1 && kw == 1 && stride == 1 && pad == 0;
  }
};

// Output rows per im2col tile; bounds the column buffer to ~32 MiB.
int64_t TileRows(const ConvGeometry& g) {
  constexpr int64_t kBudget = int64_t{1} << 22;
  const int64_t per_row = std::max<int64_t>(1, g.patch() * g.wo);
  return std::clamp<int64_t>(kBudget / per_row, 1, g.ho);
}

void Im2Col(const double* x, const ConvGeometry& g, int64_t oh0, int64_t oh1,
            double* col) {
  const int64_t p = (oh1 - oh0) * g.wo;
  for (int64_t c = 0; c < g.cin; ++c) {
    const double* plane = x + c * g.h * g.w;
    for (int64_t ki = 0; ki < g.kh; ++ki) {
      for (int64_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * p;
        for (int64_t oh = oh0; oh < oh1; ++oh) {
          double* dst = row + (oh - oh0) * g.wo;
          const int64_t ih = oh * g.stride - g.pad + ki * g.dil;
          if (ih < 0 || ih >= g.h) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = plane + ih * g.w;
          for (int64_t ow = 0; ow < g.wo; ++ow) {
            const int64_t iw = ow * g.stride - g.pad + kj * g.dil;
            dst[ow] = (iw >= 0 && iw < g.w) ? src[iw] : 0.0;
          }
        }
      }
    }
  }
}

void Col2ImAccumulate(const double* col, const ConvGeometry& g, int64_t oh0,
                      int64_t oh1, double* dx) {
  const int64_t p = (oh1 - oh0) * g.wo;
  for (int64_t c = 0; c < g.cin; ++c) {
    double* plane = dx + c * g.h * g.w;
    for (int64_t ki = 0; ki < g.kh; ++ki) {
      for (int64_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * p;
        for (int64_t oh = oh0; oh < oh1; ++oh) {
          const int64_t ih = oh * g.stride - g.pad + ki * g.dil;
          if (ih < 0 || ih >= g.h) continue;
          const double* src = row + (oh - oh0) * g.wo;
          double* dst = plane + ih * g.w;
          for (int64_t ow = 0; ow < g.wo; ++ow) {
            const int64_t iw = ow * g.stride - g.pad + kj * g.dil;
            if (iw >= 0 && iw < g.w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

// Elementwise unary op with a derivative expressed through input and output.
template <typename F, typename D>
Var Unary(const Var& x, F f, D dfdx) {
  Tensor out(x.shape());
  const auto in = x.value().data();
  auto o = out.data();
  for (size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  return MakeResult(std::move(out), {x}, [dfdx](Node& self) {
    Node& in_node = *self.inputs[0];
    Tensor& g = in_node.EnsureGrad();
    const auto xv = in_node.value.data();
    const auto yv = self.value.data();
    const auto gy = self.grad.data();
    auto gx = g.data();
    for (size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace

Var Conv2d(const Var& x, const Var& weight, const Var& bias, ConvOptions opts) {
  Require4D(x.value(), "Conv2d");
  Require4D(weight.value(), "Conv2d weight");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (wv.dim(1) != xv.dim(1)) {
    throw InvalidArgument("Conv2d: input has " + std::to_string(xv.dim(1)) +
                          " channels, weight expects " +
                          std::to_string(wv.dim(1)));
  }
  if (opts.stride < 1 || opts.dilation < 1 || opts.padding < 0) {
    throw InvalidArgument("Conv2d: invalid stride/dilation/padding");
  }
  ConvGeometry g{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3),
                 wv.dim(0), wv.dim(2), wv.dim(3), 0, 0,
                 opts.stride, opts.padding, opts.dilation};
  g.ho = (g.h + 2 * g.pad - g.dil * (g.kh - 1) - 1) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.dil * (g.kw - 1) - 1) / g.stride + 1;
  if (g.ho <= 0 || g.wo <= 0) {
    throw InvalidArgument("Conv2d: kernel larger than padded input " +
                          ShapeToString(xv.shape()));
  }
  if (bias.defined() && bias.value().numel() != g.cout) {
    throw InvalidArgument("Conv2d: bias size mismatch");
  }

  Tensor out({g.n, g.cout, g.ho, g.wo});
  const int64_t hw_out = g.ho * g.wo;
  ConstMatMap wmat(wv.raw(), g.cout, g.patch());
  const int64_t tile = TileRows(g);
  std::vector<double> col;
  if (!g.pointwise()) col.resize(static_cast<size_t>(g.patch() * tile * g.wo));

  for (int64_t s = 0; s < g.n; ++s) {
    const double* xs = xv.raw() + s * g.cin * g.h * g.w;
    double* ys = out.raw() + s * g.cout * hw_out;
    if (g.pointwise()) {
      MatMap(ys, g.cout, hw_out).noalias() =
          wmat * ConstMatMap(xs, g.cin, g.h * g.w);
    } else {
      for (int64_t oh0 = 0; oh0 < g.ho; oh0 += tile) {
        const int64_t oh1 = std::min(g.ho, oh0 + tile);
        const int64_t p = (oh1 - oh0) * g.wo;
        Im2Col(xs, g, oh0, oh1, col.data());
        StridedMap(ys + oh0 * g.wo, g.cout, p, Eigen::OuterStride<>(hw_out))
            .noalias() = wmat * ConstMatMap(col.data(), g.patch(), p);
      }
    }
    if (bias.defined()) {
      const double* b = bias.value().raw();
      for (int64_t c = 0; c < g.cout; ++c) {
        double* plane = ys + c * hw_out;
        for (int64_t i = 0; i < hw_out; ++i) plane[i] += b[c];
      }
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return MakeResult(std::move(out), std::move(inputs), [g, tile](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    Node* bn = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    const int64_t hw_out = g.ho * g.wo;
    const double* gy = self.grad.raw();
    ConstMatMap wmat(wn.value.raw(), g.cout, g.patch());

    if (bn && bn->requires_grad) {
      double* db = bn->EnsureGrad().raw();
      for (int64_t s = 0; s < g.n; ++s) {
        for (int64_t c = 0; c < g.cout; ++c) {
          const double* plane = gy + (s * g.cout + c) * hw_out;
          double acc = 0.0;
          for (int64_t i = 0; i < hw_out; ++i) acc += plane[i];
          db[c] += acc;
        }
      }
    }
    const bool need_w = wn.requires_grad;
    const bool need_x = xn.requires_grad;
    if (!need_w && !need_x) return;
    double* dw = need_w ? wn.EnsureGrad().raw() : nullptr;
    double* dx = need_x ? xn.EnsureGrad().raw() : nullptr;

    std::vector<double> col;
    std::vector<double> dcol;
    if (!g.pointwise()) {
      if (need_w) col.resize(static_cast<size_t>(g.patch() * tile * g.wo));
      if (need_x) dcol.resize(static_cast<size_t>(g.patch() * tile * g.wo));
    }
    for (int64_t s = 0; s < g.n; ++s) {
      const double* xs = xn.value.raw() + s * g.cin * g.h * g.w;
      const double* gys = gy + s * g.cout * hw_out;
      if (g.pointwise()) {
        ConstMatMap gmat(gys, g.cout, hw_out);
        if (need_w) {
          MatMap(dw, g.cout, g.cin).noalias() +=
              gmat * ConstMatMap(xs, g.cin, hw_out).transpose();
        }
        if (need_x) {
          MatMap(dx + s * g.cin * g.h * g.w, g.cin, hw_out).noalias() +=
              wmat.transpose() * gmat;
        }
        continue;
      }
      for (int64_t oh0 = 0; oh0 < g.ho; oh0 += tile) {
        const int64_t oh1 = std::min(g.ho, oh0 + tile);
        const int64_t p = (oh1 - oh0) * g.wo;
        ConstStridedMap gmat(gys + oh0 * g.wo, g.cout, p,
                             Eigen::OuterStride<>(hw_out));
        if (need_w) {
          Im2Col(xs, g, oh0, oh1, col.data());
          MatMap(dw, g.cout, g.patch()).noalias() +=
              gmat * ConstMatMap(col.data(), g.patch(), p).transpose();
        }
        if (need_x) {
          MatMap(dcol.data(), g.patch(), p).noalias() = wmat.transpose() * gmat;
          Col2ImAccumulate(dcol.data(), g, oh0, oh1,
                           dx + s * g.cin * g.h * g.w);
        }
      }
    }
  });
}

Var Linear(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(1)) {
    throw InvalidArgument("Linear: incompatible shapes " +
                          ShapeToString(xv.shape()) + " and " +
                          ShapeToString(wv.shape()));
  }
  const int64_t n = xv.dim(0), f = xv.dim(1), o = wv.dim(0);
  Tensor out({n, o});
  MatMap(out.raw(), n, o).noalias() =
      ConstMatMap(xv.raw(), n, f) * ConstMatMap(wv.raw(), o, f).transpose();
  if (bias.defined()) {
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < o; ++j) out[i * o + j] += bias.value()[j];
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return MakeResult(std::move(out), std::move(inputs), [n, f, o](Node& self) {
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    ConstMatMap gy(self.grad.raw(), n, o);
    if (xn.requires_grad) {
      MatMap(xn.EnsureGrad().raw(), n, f).noalias() +=
          gy * ConstMatMap(wn.value.raw(), o, f);
    }
    if (wn.requires_grad) {
      MatMap(wn.EnsureGrad().raw(), o, f).noalias() +=
          gy.transpose() * ConstMatMap(xn.value.raw(), n, f);
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      double* db = self.inputs[2]->EnsureGrad().raw();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < o; ++j) db[j] += gy(i, j);
    }
  });
}

Var Add(const Var& a, const Var& b) {
  CheckSameShape(a.value(), b.value(), "Add");
  Tensor out = a.value();
  out.AddInPlace(b.value());
  return MakeResult(std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) in->AccumulateGrad(self.grad);
  });
}

Var AddRelu(const Var& a, const Var& b) {
  CheckSameShape(a.value(), b.value(), "AddRelu");
  Tensor out = a.value();
  out.AddInPlace(b.value());
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return MakeResult(std::move(out), {a, b}, [](Node& self) {
    for (int64_t i = 0; i < self.grad.numel(); ++i)
      if (!(self.value[i] > 0.0)) self.grad[i] = 0.0;
    for (auto& in : self.inputs)
      if (in->requires_grad) in->AccumulateGrad(self.grad);
  });
}

Var Sub(const Var& a, const Var& b) {
  CheckSameShape(a.value(), b.value(), "Sub");
  Tensor out = a.value();
  out.AddInPlace(b.value(), -1.0);
  return MakeResult(std::move(out), {a, b}, [](Node& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->AccumulateGrad(self.grad);
    if (self.inputs[1]->requires_grad)
      self.inputs[1]->AccumulateGrad(self.grad, -1.0);
  });
}

Var Mul(const Var& a, const Var& b) {
  CheckSameShape(a.value(), b.value(), "Mul");
  Tensor out(a.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return MakeResult(std::move(out), {a, b}, [](Node& self) {
    Node& an = *self.inputs[0];
    Node& bn = *self.inputs[1];
    const int64_t n = self.value.numel();
    if (an.requires_grad) {
      Tensor& g = an.EnsureGrad();
      for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * bn.value[i];
    }
    if (bn.requires_grad) {
      Tensor& g = bn.EnsureGrad();
      for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * an.value[i];
    }
  });
}

Var Scale(const Var& a, double factor) {
  Tensor out = a.value();
  out.Scale(factor);
  return MakeResult(std::move(out), {a}, [factor](Node& self) {
    self.inputs[0]->AccumulateGrad(self.grad, factor);
  });
}

Var AddScalar(const Var& a, double offset) {
  Tensor out = a.value();
  for (double& v : out.data()) v += offset;
  return MakeResult(std::move(out), {a}, [](Node& self) {
    self.inputs[0]->AccumulateGrad(self.grad);
  });
}

Var Relu(const Var& x) {
  return Unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var LeakyRelu(const Var& x, double negative_slope) {
  return Unary(
      x, [negative_slope](double v) { return v > 0.0 ? v : negative_slope * v; },
      [negative_slope](double v, double) {
        return v > 0.0 ? 1.0 : negative_slope;
      });
}

Var Abs(const Var& x) {
  return Unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var Softplus(const Var& x) {
  return Unary(
      x,
      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
      });
}

Var Clamp(const Var& x, double lo, double hi) {
  return Unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var ConcatChannels(const std::vector<Var>& xs) {
  if (xs.empty()) throw InvalidArgument("ConcatChannels of nothing");
  for (const Var& v : xs) Require4D(v.value(), "ConcatChannels");
  const int64_t n = xs[0].value().dim(0);
  const int64_t h = xs[0].value().dim(2);
  const int64_t w = xs[0].value().dim(3);
  int64_t c_total = 0;
  for (const Var& v : xs) {
    const Tensor& t = v.value();
    if (t.dim(0) != n || t.dim(2) != h || t.dim(3) != w) {
      throw InvalidArgument("ConcatChannels: mismatched shapes " +
                            ShapeToString(xs[0].shape()) + " and " +
                            ShapeToString(t.shape()));
    }
    c_total += t.dim(1);
  }
  Tensor out({n, c_total, h, w});
  const int64_t hw = h * w;
  int64_t offset = 0;
  for (const Var& v : xs) {
    const Tensor& t = v.value();
    const int64_t c = t.dim(1);
    for (int64_t s = 0; s < n; ++s) {
      std::copy_n(t.raw() + s * c * hw, c * hw,
                  out.raw() + (s * c_total + offset) * hw);
    }
    offset += c;
  }
  return MakeResult(std::move(out), xs, [n, c_total, hw](Node& self) {
    int64_t offset = 0;
    for (auto& in : self.inputs) {
      const int64_t c = in->value.dim(1);
      if (in->requires_grad) {
        double* g = in->EnsureGrad().raw();
        for (int64_t s = 0; s < n; ++s) {
          const double* src = self.grad.raw() + (s * c_total + offset) * hw;
          double* dst = g + s * c * hw;
          for (int64_t i = 0; i < c * hw; ++i) dst[i] += src[i];
        }
      }
      offset += c;
    }
  });
}

Var UpsampleNearest(const Var& x, int factor) {
  Require4D(x.value(), "UpsampleNearest");
  if (factor < 1) throw InvalidArgument("UpsampleNearest: factor must be >= 1");
  const Tensor& xv = x.value();
  const int64_t planes = xv.dim(0) * xv.dim(1);
  const int64_t h = xv.dim(2), w = xv.dim(3);
  const int64_t ho = h * factor, wo = w * factor;
  Tensor out({xv.dim(0), xv.dim(1), ho, wo});
  for (int64_t p = 0; p < planes; ++p) {
    const double* src = xv.raw() + p * h * w;
    double* dst = out.raw() + p * ho * wo;
    for (int64_t i = 0; i < ho; ++i)
      for (int64_t j = 0; j < wo; ++j)
        dst[i * wo + j] = src[(i / factor) * w + j / factor];
  }
  return MakeResult(std::move(out), {x},
                    [planes, h, w, ho, wo, factor](Node& self) {
                      double* g = self.inputs[0]->EnsureGrad().raw();
                      for (int64_t p = 0; p < planes; ++p) {
                        const double* src = self.grad.raw() + p * ho * wo;
                        double* dst = g + p * h * w;
                        for (int64_t i = 0; i < ho; ++i)
                          for (int64_t j = 0; j < wo; ++j)
                            dst[(i / factor) * w + j / factor] += src[i * wo + j];
                      }
                    });
}

namespace {

struct Lerp {
  int64_t i0, i1;
  double t;
};

std::vector<Lerp> BilinearTaps(int64_t in, int64_t out) {
  std::vector<Lerp> taps(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int64_t i0 = static_cast<int64_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int64_t i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<size_t>(o)] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Var ResizeBilinear(const Var& x, int64_t out_h, int64_t out_w) {
  Require4D(x.value(), "ResizeBilinear");
  if (out_h < 1 || out_w < 1) throw InvalidArgument("ResizeBilinear: empty output");
  const Tensor& xv = x.value();
  const int64_t planes = xv.dim(0) * xv.dim(1);
  const int64_t h = xv.dim(2), w = xv.dim(3);
  auto ty = BilinearTaps(h, out_h);
  auto tx = BilinearTaps(w, out_w);
  Tensor out({xv.dim(0), xv.dim(1), out_h, out_w});
  for (int64_t p = 0; p < planes; ++p) {
    const double* src = xv.raw() + p * h * w;
    double* dst = out.raw() + p * out_h * out_w;
    for (int64_t i = 0; i < out_h; ++i) {
      const Lerp& ly = ty[static_cast<size_t>(i)];
      for (int64_t j = 0; j < out_w; ++j) {
        const Lerp& lx = tx[static_cast<size_t>(j)];
        const double top = src[ly.i0 * w + lx.i0] * (1 - lx.t) + src[ly.i0 * w + lx.i1] * lx.t;
        const double bot = src[ly.i1 * w + lx.i0] * (1 - lx.t) + src[ly.i1 * w + lx.i1] * lx.t;
        dst[i * out_w + j] = top * (1 - ly.t) + bot * ly.t;
      }
    }
  }
  return MakeResult(
      std::move(out), {x},
      [planes, h, w, out_h, out_w, ty = std::move(ty), tx = std::move(tx)](Node& self) {
        double* g = self.inputs[0]->EnsureGrad().raw();
        for (int64_t p = 0; p < planes; ++p) {
          const double* gy = self.grad.raw() + p * out_h * out_w;
          double* gx = g + p * h * w;
          for (int64_t i = 0; i < out_h; ++i) {
            const Lerp& ly = ty[static_cast<size_t>(i)];
            for (int64_t j = 0; j < out_w; ++j) {
              const Lerp& lx = tx[static_cast<size_t>(j)];
              const double v = gy[i * out_w + j];
              gx[ly.i0 * w + lx.i0] += v * (1 - ly.t) * (1 - lx.t);
              gx[ly.i0 * w + lx.i1] += v * (1 - ly.t) * lx.t;
              gx[ly.i1 * w + lx.i0] += v * ly.t * (1 - lx.t);
              gx[ly.i1 * w + lx.i1] += v * ly.t * lx.t;
            }
          }
        }
      });
}

Var GlobalAvgPool(const Var& x) {
  Require4D(x.value(), "GlobalAvgPool");
  const Tensor& xv = x.value();
  const int64_t planes = xv.dim(0) * xv.dim(1);
  const int64_t hw = xv.dim(2) * xv.dim(3);
  Tensor out({xv.dim(0), xv.dim(1), 1, 1});
  for (int64_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (int64_t i = 0; i < hw; ++i) acc += xv[p * hw + i];
    out[p] = acc / static_cast<double>(hw);
  }
  return MakeResult(std::move(out), {x}, [planes, hw](Node& self) {
    double* g = self.inputs[0]->EnsureGrad().raw();
    const double inv = 1.0 / static_cast<double>(hw);
    for (int64_t p = 0; p < planes; ++p)
      for (int64_t i = 0; i < hw; ++i) g[p * hw + i] += self.grad[p] * inv;
  });
}

Var BroadcastSpatial(const Var& x, int64_t h, int64_t w) {
  Require4D(x.value(), "BroadcastSpatial");
  const Tensor& xv = x.value();
  if (xv.dim(2) != 1 || xv.dim(3) != 1) {
    throw InvalidArgument("BroadcastSpatial expects (N, C, 1, 1)");
  }
  const int64_t planes = xv.dim(0) * xv.dim(1);
  const int64_t hw = h * w;
  Tensor out({xv.dim(0), xv.dim(1), h, w});
  for (int64_t p = 0; p < planes; ++p)
    std::fill_n(out.raw() + p * hw, hw, xv[p]);
  return MakeResult(std::move(out), {x}, [planes, hw](Node& self) {
    double* g = self.inputs[0]->EnsureGrad().raw();
    for (int64_t p = 0; p < planes; ++p) {
      double acc = 0.0;
      for (int64_t i = 0; i < hw; ++i) acc += self.grad[p * hw + i];
      g[p] += acc;
    }
  });
}

Var Reshape(const Var& x, Shape shape) {
  Tensor out = x.value().Reshaped(std::move(shape));
  return MakeResult(std::move(out), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    double* g = in.EnsureGrad().raw();
    for (int64_t i = 0; i < self.grad.numel(); ++i) g[i] += self.grad[i];
  });
}

namespace {

Var BatchNormImpl(const Var& x, const Var& gamma, const Var& beta,
                  Tensor& running_mean, Tensor& running_var,
                  bool use_batch_stats, double momentum, double eps,
                  bool relu) {
  Require4D(x.value(), "BatchNorm");
  const Tensor& xv = x.value();
  const int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (gamma.value().numel() != c || beta.value().numel() != c ||
      running_mean.numel() != c || running_var.numel() != c) {
    throw InvalidArgument("BatchNorm: parameter size does not match channels");
  }
  const int64_t m = n * hw;
  std::vector<double> mean(static_cast<size_t>(c)), inv_std(static_cast<size_t>(c));
  for (int64_t ch = 0; ch < c; ++ch) {
    double mu, var;
    if (use_batch_stats) {
      double acc = 0.0;
      for (int64_t s = 0; s < n; ++s)
        for (int64_t i = 0; i < hw; ++i) acc += xv[(s * c + ch) * hw + i];
      mu = acc / static_cast<double>(m);
      double sq = 0.0;
      for (int64_t s = 0; s < n; ++s)
        for (int64_t i = 0; i < hw; ++i) {
          const double d = xv[(s * c + ch) * hw + i] - mu;
          sq += d * d;
        }
      var = sq / static_cast<double>(m);
      if (GradEnabled()) {
        const double unbiased = m > 1 ? sq / static_cast<double>(m - 1) : var;
        running_mean[ch] = (1 - momentum) * running_mean[ch] + momentum * mu;
        running_var[ch] = (1 - momentum) * running_var[ch] + momentum * unbiased;
      }
    } else {
      mu = running_mean[ch];
      var = running_var[ch];
    }
    mean[static_cast<size_t>(ch)] = mu;
    inv_std[static_cast<size_t>(ch)] = 1.0 / std::sqrt(var + eps);
  }
  Tensor out(xv.shape());
  for (int64_t s = 0; s < n; ++s)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double mu = mean[static_cast<size_t>(ch)];
      const double is = inv_std[static_cast<size_t>(ch)];
      const double gm = gamma.value()[ch], bt = beta.value()[ch];
      const int64_t base = (s * c + ch) * hw;
      for (int64_t i = 0; i < hw; ++i) {
        const double y = gm * (xv[base + i] - mu) * is + bt;
        out[base + i] = relu && y < 0.0 ? 0.0 : y;
      }
    }
  return MakeResult(
      std::move(out), {x, gamma, beta},
      [n, c, hw, m, use_batch_stats, relu, mean = std::move(mean),
       inv_std = std::move(inv_std)](Node& self) {
        Node& xn = *self.inputs[0];
        Node& gn = *self.inputs[1];
        Node& bn = *self.inputs[2];
        if (relu) {
          // Gradient of the pre-activation; the output is not read again.
          for (int64_t i = 0; i < self.grad.numel(); ++i)
            if (!(self.value[i] > 0.0)) self.grad[i] = 0.0;
        }
        const Tensor& gy = self.grad;
        for (int64_t ch = 0; ch < c; ++ch) {
          const double mu = mean[static_cast<size_t>(ch)];
          const double is = inv_std[static_cast<size_t>(ch)];
          double sum_gy = 0.0, sum_gy_xhat = 0.0;
          for (int64_t s = 0; s < n; ++s) {
            const int64_t base = (s * c + ch) * hw;
            for (int64_t i = 0; i < hw; ++i) {
              const double xhat = (xn.value[base + i] - mu) * is;
              sum_gy += gy[base + i];
              sum_gy_xhat += gy[base + i] * xhat;
            }
          }
          if (gn.requires_grad) gn.EnsureGrad()[ch] += sum_gy_xhat;
          if (bn.requires_grad) bn.EnsureGrad()[ch] += sum_gy;
          if (!xn.requires_grad) continue;
          Tensor& gx = xn.EnsureGrad();
          const double gm = gn.value[ch];
          const double inv_m = 1.0 / static_cast<double>(m);
          for (int64_t s = 0; s < n; ++s) {
            const int64_t base = (s * c + ch) * hw;
            for (int64_t i = 0; i < hw; ++i) {
              if (use_batch_stats) {
                const double xhat = (xn.value[base + i] - mu) * is;
                gx[base + i] += gm * is *
                                (gy[base + i] - inv_m * sum_gy -
                                 xhat * inv_m * sum_gy_xhat);
              } else {
                gx[base + i] += gm * is * gy[base + i];
              }
            }
          }
        }
      });
}

}  // namespace

Var BatchNorm(const Var& x, const Var& gamma, const Var& beta,
              Tensor& running_mean, Tensor& running_var, bool use_batch_stats,
              double momentum, double eps) {
  return BatchNormImpl(x, gamma, beta, running_mean, running_var,
                       use_batch_stats, momentum, eps, false);
}

Var BatchNormRelu(const Var& x, const Var& gamma, const Var& beta,
                  Tensor& running_mean, Tensor& running_var,
                  bool use_batch_stats, double momentum, double eps) {
  return BatchNormImpl(x, gamma, beta, running_mean, running_var,
                       use_batch_stats, momentum, eps, true);
}

Var SoftmaxChannels(const Var& x) {
  Require4D(x.value(), "SoftmaxChannels");
  const Tensor& xv = x.value();
  const int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor out(xv.shape());
  for (int64_t s = 0; s < n; ++s)
    for (int64_t i = 0; i < hw; ++i) {
      const int64_t base = s * c * hw + i;
      double mx = xv[base];
      for (int64_t ch = 1; ch < c; ++ch) mx = std::max(mx, xv[base + ch * hw]);
      double z = 0.0;
      for (int64_t ch = 0; ch < c; ++ch) {
        const double e = std::exp(xv[base + ch * hw] - mx);
        out[base + ch * hw] = e;
        z += e;
      }
      for (int64_t ch = 0; ch < c; ++ch) out[base + ch * hw] /= z;
    }
  return MakeResult(std::move(out), {x}, [n, c, hw](Node& self) {
    Tensor& gx = self.inputs[0]->EnsureGrad();
    const Tensor& y = self.value;
    const Tensor& gy = self.grad;
    for (int64_t s = 0; s < n; ++s)
      for (int64_t i = 0; i < hw; ++i) {
        const int64_t base = s * c * hw + i;
        double dot = 0.0;
        for (int64_t ch = 0; ch < c; ++ch)
          dot += gy[base + ch * hw] * y[base + ch * hw];
        for (int64_t ch = 0; ch < c; ++ch)
          gx[base + ch * hw] += y[base + ch * hw] * (gy[base + ch * hw] - dot);
      }
  });
}

Var ChannelL2Normalize(const Var& x, double eps) {
  Require4D(x.value(), "ChannelL2Normalize");
  const Tensor& xv = x.value();
  const int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor out(xv.shape());
  std::vector<double> norms(static_cast<size_t>(n * hw));
  for (int64_t s = 0; s < n; ++s)
    for (int64_t i = 0; i < hw; ++i) {
      const int64_t base = s * c * hw + i;
      double sq = 0.0;
      for (int64_t ch = 0; ch < c; ++ch) sq += xv[base + ch * hw] * xv[base + ch * hw];
      const double norm = std::sqrt(sq);
      norms[static_cast<size_t>(s * hw + i)] = norm;
      const double d = std::max(norm, eps);
      for (int64_t ch = 0; ch < c; ++ch) out[base + ch * hw] = xv[base + ch * hw] / d;
    }
  return MakeResult(std::move(out), {x},
                    [n, c, hw, eps, norms = std::move(norms)](Node& self) {
                      Tensor& gx = self.inputs[0]->EnsureGrad();
                      const Tensor& y = self.value;
                      const Tensor& gy = self.grad;
                      for (int64_t s = 0; s < n; ++s)
                        for (int64_t i = 0; i < hw; ++i) {
                          const int64_t base = s * c * hw + i;
                          const double norm = norms[static_cast<size_t>(s * hw + i)];
                          if (norm > eps) {
                            double dot = 0.0;
                            for (int64_t ch = 0; ch < c; ++ch)
                              dot += y[base + ch * hw] * gy[base + ch * hw];
                            for (int64_t ch = 0; ch < c; ++ch)
                              gx[base + ch * hw] +=
                                  (gy[base + ch * hw] - y[base + ch * hw] * dot) / norm;
                          } else {
                            for (int64_t ch = 0; ch < c; ++ch)
                              gx[base + ch * hw] += gy[base + ch * hw] / eps;
                          }
                        }
                    });
}

Var Sum(const Var& x) {
  Tensor out({1}, x.value().Sum());
  return MakeResult(std::move(out), {x}, [](Node& self) {
    Tensor& g = self.inputs[0]->EnsureGrad();
    const double v = self.grad[0];
    for (double& e : g.data()) e += v;
  });
}

Var Mean(const Var& x) {
  const double n = static_cast<double>(x.value().numel());
  return Scale(Sum(x), 1.0 / n);
}

Var WeightedSum(const std::vector<Var>& scalars,
                const std::vector<double>& weights) {
  if (scalars.size() != weights.size()) {
    throw InvalidArgument("WeightedSum: term/weight count mismatch");
  }
  double total = 0.0;
  for (size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].value().numel() != 1) {
      throw InvalidArgument("WeightedSum: terms must be scalars");
    }
    total += weights[i] * scalars[i].value()[0];
  }
  return MakeResult(Tensor({1}, total), scalars, [weights](Node& self) {
    for (size_t i = 0; i < self.inputs.size(); ++i) {
      if (self.inputs[i]->requires_grad)
        self.inputs[i]->EnsureGrad()[0] += weights[i] * self.grad[0];
    }
  });
}

}  // namespace ulrseg::nn
