// Copyright 2026 The Fusion4CA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>

#include "fusion4ca/autograd/tape.hpp"

namespace fusion4ca::ops {

struct ConvOptions {
  int stride = 1;
  int pad = 0;
  bool depthwise = false;
};

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

inline int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// cols is [Cin*k*k, Ho*Wo] row-major.
template <class T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* cols) {
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * P;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            std::fill_n(row + oy * Wo, Wo, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            row[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
}

template <class T>
void col2im(const T* cols, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* x) {
  const int P = Ho * Wo;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * P;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          T* dst = x + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += row[oy * Wo + ox];
          }
        }
      }
}

template <class T>
Var conv2d_dense(Tape<T>& t, Var x, Var w, std::optional<Var> b, ConvOptions o) {
  const Tensor<T>& xv = t.value(x);
  const Tensor<T>& wv = t.value(w);
  const int B = xv.n(), C = xv.c(), H = xv.h(), W = xv.w();
  const int Co = wv.n(), k = wv.h();
  if (wv.c() != C || wv.w() != k) {
    throw ShapeError("conv2d weight " + to_string(wv.shape()) + " does not fit input " + to_string(xv.shape()));
  }
  if (b) require_shape(t.shape(*b), {1, Co, 1, 1}, "conv2d bias");
  const int Ho = conv_out(H, k, o.stride, o.pad), Wo = conv_out(W, k, o.stride, o.pad);
  if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d output would be empty for input " + to_string(xv.shape()));
  const int K = C * k * k, P = Ho * Wo;
  const bool direct = k == 1 && o.stride == 1 && o.pad == 0;

  Tensor<T> out({B, Co, Ho, Wo});
  auto cols = std::make_shared<AlignedBuffer<T>>(direct ? 0 : static_cast<std::size_t>(B) * K * P);
  ConstMatrixMap<T> wm(wv.data(), Co, K);
  for (int n = 0; n < B; ++n) {
    const T* xn = xv.data() + static_cast<std::size_t>(n) * C * H * W;
    const T* cn = xn;
    if (!direct) {
      T* c = cols->data() + static_cast<std::size_t>(n) * K * P;
      im2col(xn, C, H, W, k, o.stride, o.pad, Ho, Wo, c);
      cn = c;
    }
    MatrixMap<T> ym(out.data() + static_cast<std::size_t>(n) * Co * P, Co, P);
    ym.noalias() = wm * ConstMatrixMap<T>(cn, K, P);
    if (b) {
      const Tensor<T>& bv = t.value(*b);
      for (int c = 0; c < Co; ++c) ym.row(c).array() += bv[c];
    }
  }

  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  return t.record(std::move(out), std::span<const Var>(inputs),
                  [=](Tape<T>& tp, const Tensor<T>& g) {
                    const Tensor<T>& xv = tp.value(x);
                    const Tensor<T>& wv = tp.value(w);
                    ConstMatrixMap<T> wm(wv.data(), Co, K);
                    const bool need_x = tp.requires_grad(x);
                    const bool need_w = tp.requires_grad(w);
                    const bool need_b = b && tp.requires_grad(*b);
                    AlignedBuffer<T> dcols(need_x && !direct ? static_cast<std::size_t>(K) * P : 0);
                    for (int n = 0; n < B; ++n) {
                      ConstMatrixMap<T> gm(g.data() + static_cast<std::size_t>(n) * Co * P, Co, P);
                      const T* cn = direct ? xv.data() + static_cast<std::size_t>(n) * C * H * W
                                           : cols->data() + static_cast<std::size_t>(n) * K * P;
                      if (need_w) {
                        MatrixMap<T> gw(tp.grad(w).data(), Co, K);
                        gw.noalias() += gm * ConstMatrixMap<T>(cn, K, P).transpose();
                      }
                      if (need_b) {
                        Tensor<T>& gb = tp.grad(*b);
                        for (int c = 0; c < Co; ++c) gb[c] += gm.row(c).sum();
                      }
                      if (need_x) {
                        T* gx = tp.grad(x).data() + static_cast<std::size_t>(n) * C * H * W;
                        if (direct) {
                          MatrixMap<T>(gx, K, P).noalias() += wm.transpose() * gm;
                        } else {
                          MatrixMap<T> dc(dcols.data(), K, P);
                          dc.noalias() = wm.transpose() * gm;
                          col2im(dcols.data(), C, H, W, k, o.stride, o.pad, Ho, Wo, gx);
                        }
                      }
                    }
                  });
}

template <class T>
Var conv2d_depthwise(Tape<T>& t, Var x, Var w, std::optional<Var> b, ConvOptions o) {
  const Tensor<T>& xv = t.value(x);
  const Tensor<T>& wv = t.value(w);
  const int B = xv.n(), C = xv.c(), H = xv.h(), W = xv.w();
  const int k = wv.h();
  if (wv.n() != C || wv.c() != 1 || wv.w() != k) {
    throw ShapeError("depthwise weight " + to_string(wv.shape()) + " does not fit input " + to_string(xv.shape()));
  }
  if (b) require_shape(t.shape(*b), {1, C, 1, 1}, "depthwise bias");
  const int Ho = conv_out(H, k, o.stride, o.pad), Wo = conv_out(W, k, o.stride, o.pad);
  Tensor<T> out({B, C, Ho, Wo});
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c) {
      const T bias = b ? t.value(*b)[c] : T(0);
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          T acc = 0;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * o.stride - o.pad + ky;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * o.stride - o.pad + kx;
              if (ix < 0 || ix >= W) continue;
              acc += wv(c, 0, ky, kx) * xv(n, c, iy, ix);
            }
          }
          out(n, c, oy, ox) = acc + bias;
        }
    }
  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  return t.record(std::move(out), std::span<const Var>(inputs), [=](Tape<T>& tp, const Tensor<T>& g) {
    const Tensor<T>& xv = tp.value(x);
    const Tensor<T>& wv = tp.value(w);
    Tensor<T>* gx = tp.requires_grad(x) ? &tp.grad(x) : nullptr;
    Tensor<T>* gw = tp.requires_grad(w) ? &tp.grad(w) : nullptr;
    Tensor<T>* gb = (b && tp.requires_grad(*b)) ? &tp.grad(*b) : nullptr;
    for (int n = 0; n < B; ++n)
      for (int c = 0; c < C; ++c)
        for (int oy = 0; oy < Ho; ++oy)
          for (int ox = 0; ox < Wo; ++ox) {
            const T go = g(n, c, oy, ox);
            if (gb) (*gb)[c] += go;
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * o.stride - o.pad + ky;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * o.stride - o.pad + kx;
                if (ix < 0 || ix >= W) continue;
                if (gw) (*gw)(c, 0, ky, kx) += go * xv(n, c, iy, ix);
                if (gx) (*gx)(n, c, iy, ix) += go * wv(c, 0, ky, kx);
              }
            }
          }
  });
}

}  // namespace detail

/// 2-D convolution over NCHW input. Weights are [Cout, Cin, k, k] (dense) or
/// [C, 1, k, k] (depthwise); bias is [1, Cout, 1, 1].
template <class T>
Var conv2d(Tape<T>& t, Var x, Var w, std::optional<Var> b, ConvOptions o = {}) {
  return o.depthwise ? detail::conv2d_depthwise(t, x, w, b, o) : detail::conv2d_dense(t, x, w, b, o);
}

}  // namespace fusion4ca::ops
