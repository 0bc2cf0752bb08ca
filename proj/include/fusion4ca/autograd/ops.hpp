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

#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "fusion4ca/autograd/tape.hpp"

namespace fusion4ca::ops {

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out{};
  for (int d = 0; d < 4; ++d) {
    if (a[d] == b[d] || b[d] == 1) {
      out[d] = a[d];
    } else if (a[d] == 1) {
      out[d] = b[d];
    } else {
      throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
  }
  return out;
}

inline std::array<std::size_t, 4> broadcast_strides(const Shape& s) {
  std::array<std::size_t, 4> st{};
  std::size_t acc = 1;
  for (int d = 3; d >= 0; --d) {
    st[d] = s[d] == 1 ? 0 : acc;
    acc *= static_cast<std::size_t>(s[d]);
  }
  return st;
}

/// Calls f(out_index, a_index, b_index) for every element of `out`.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& sa, const Shape& sb, F&& f) {
  const auto ta = broadcast_strides(sa);
  const auto tb = broadcast_strides(sb);
  std::size_t oi = 0;
  for (int i0 = 0; i0 < out[0]; ++i0)
    for (int i1 = 0; i1 < out[1]; ++i1)
      for (int i2 = 0; i2 < out[2]; ++i2) {
        const std::size_t abase = i0 * ta[0] + i1 * ta[1] + i2 * ta[2];
        const std::size_t bbase = i0 * tb[0] + i1 * tb[1] + i2 * tb[2];
        for (int i3 = 0; i3 < out[3]; ++i3, ++oi) f(oi, abase + i3 * ta[3], bbase + i3 * tb[3]);
      }
}

}  // namespace detail

template <class T>
Var add(Tape<T>& t, Var a, Var b) {
  const Tensor<T>& av = t.value(a);
  const Tensor<T>& bv = t.value(b);
  if (av.shape() == bv.shape()) {
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape<T>& tp, const Tensor<T>& g) {
      for (Var v : {a, b}) {
        if (!tp.requires_grad(v)) continue;
        Tensor<T>& gv = tp.grad(v);
        for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
      }
    });
  }
  const Shape os = detail::broadcast_shape(av.shape(), bv.shape());
  Tensor<T> out(os);
  detail::for_each_broadcast(os, av.shape(), bv.shape(),
                             [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] + bv[j]; });
  return t.record(std::move(out), {a, b}, [a, b, os](Tape<T>& tp, const Tensor<T>& g) {
    const Shape sa = tp.shape(a), sb = tp.shape(b);
    Tensor<T>* ga = tp.requires_grad(a) ? &tp.grad(a) : nullptr;
    Tensor<T>* gb = tp.requires_grad(b) ? &tp.grad(b) : nullptr;
    detail::for_each_broadcast(os, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
      if (ga) (*ga)[i] += g[o];
      if (gb) (*gb)[j] += g[o];
    });
  });
}

/// Elementwise product with NCHW broadcasting over size-1 axes.
template <class T>
Var mul(Tape<T>& t, Var a, Var b) {
  const Tensor<T>& av = t.value(a);
  const Tensor<T>& bv = t.value(b);
  const Shape os = detail::broadcast_shape(av.shape(), bv.shape());
  Tensor<T> out(os);
  detail::for_each_broadcast(os, av.shape(), bv.shape(),
                             [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] * bv[j]; });
  return t.record(std::move(out), {a, b}, [a, b, os](Tape<T>& tp, const Tensor<T>& g) {
    const Tensor<T>& av = tp.value(a);
    const Tensor<T>& bv = tp.value(b);
    Tensor<T>* ga = tp.requires_grad(a) ? &tp.grad(a) : nullptr;
    Tensor<T>* gb = tp.requires_grad(b) ? &tp.grad(b) : nullptr;
    detail::for_each_broadcast(os, av.shape(), bv.shape(), [&](std::size_t o, std::size_t i, std::size_t j) {
      if (ga) (*ga)[i] += g[o] * bv[j];
      if (gb) (*gb)[j] += g[o] * av[i];
    });
  });
}

template <class T>
Var scale(Tape<T>& t, Var a, T c) {
  const Tensor<T>& av = t.value(a);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  return t.record(std::move(out), {a}, [a, c](Tape<T>& tp, const Tensor<T>& g) {
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  });
}

template <class T>
Var sum(Tape<T>& t, Var a) {
  return t.record(Tensor<T>::scalar(t.value(a).sum()), {a}, [a](Tape<T>& tp, const Tensor<T>& g) {
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
  });
}

/// Scalar probe sum(a * w) with a constant weight tensor.
template <class T>
Var dot(Tape<T>& t, Var a, const Tensor<T>& w) {
  const Tensor<T>& av = t.value(a);
  require_shape(w.shape(), av.shape(), "dot");
  T s = 0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * w[i];
  return t.record(Tensor<T>::scalar(s), {a}, [a, w](Tape<T>& tp, const Tensor<T>& g) {
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * w[i];
  });
}

template <class T>
T gelu_value(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2.0)));
}

template <class T>
T gelu_derivative(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2.0)));
  const T pdf = std::exp(T(-0.5) * x * x) * T(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  return cdf + x * pdf;
}

/// Exact (erf-based) GELU; the smooth nonlinearity used throughout the model.
template <class T>
Var gelu(Tape<T>& t, Var a) {
  const Tensor<T>& av = t.value(a);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(av[i]);
  return t.record(std::move(out), {a}, [a](Tape<T>& tp, const Tensor<T>& g) {
    const Tensor<T>& av = tp.value(a);
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * gelu_derivative(av[i]);
  });
}

template <class T>
T sigmoid_value(T x) {
  return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <class T>
Var sigmoid(Tape<T>& t, Var a) {
  const Tensor<T>& av = t.value(a);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_value(av[i]);
  auto yv = std::make_shared<Tensor<T>>(out);
  return t.record(std::move(out), {a}, [a, yv](Tape<T>& tp, const Tensor<T>& g) {
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*yv)[i] * (T(1) - (*yv)[i]);
  });
}

/// Softmax over the channel axis at every (b, y, x).
template <class T>
Var softmax_channels(Tape<T>& t, Var a) {
  const Tensor<T>& av = t.value(a);
  const int B = av.n(), C = av.c(), HW = av.h() * av.w();
  Tensor<T> out(av.shape());
  for (int b = 0; b < B; ++b) {
    const T* x = av.data() + static_cast<std::size_t>(b) * C * HW;
    T* y = out.data() + static_cast<std::size_t>(b) * C * HW;
    for (int p = 0; p < HW; ++p) {
      T m = x[p];
      for (int c = 1; c < C; ++c) m = std::max(m, x[c * HW + p]);
      T s = 0;
      for (int c = 0; c < C; ++c) {
        y[c * HW + p] = std::exp(x[c * HW + p] - m);
        s += y[c * HW + p];
      }
      for (int c = 0; c < C; ++c) y[c * HW + p] /= s;
    }
  }
  auto shared = std::make_shared<Tensor<T>>(out);
  return t.record(std::move(out), {a}, [a, shared, B, C, HW](Tape<T>& tp, const Tensor<T>& g) {
    Tensor<T>& ga = tp.grad(a);
    for (int b = 0; b < B; ++b) {
      const std::size_t base = static_cast<std::size_t>(b) * C * HW;
      for (int p = 0; p < HW; ++p) {
        T dot = 0;
        for (int c = 0; c < C; ++c) dot += g[base + c * HW + p] * (*shared)[base + c * HW + p];
        for (int c = 0; c < C; ++c) {
          const std::size_t i = base + c * HW + p;
          ga[i] += (*shared)[i] * (g[i] - dot);
        }
      }
    }
  });
}

/// Layer normalization over the channel axis at every spatial location, with
/// per-channel affine gamma/beta of shape [1,C,1,1].
template <class T>
Var layer_norm_channels(Tape<T>& t, Var x, Var gamma, Var beta, T eps = T(1e-5)) {
  const Tensor<T>& xv = t.value(x);
  const Tensor<T>& gv = t.value(gamma);
  const Tensor<T>& bv = t.value(beta);
  const int B = xv.n(), C = xv.c(), HW = xv.h() * xv.w();
  require_shape(gv.shape(), {1, C, 1, 1}, "layer_norm gamma");
  require_shape(bv.shape(), {1, C, 1, 1}, "layer_norm beta");
  Tensor<T> out(xv.shape());
  auto xhat = std::make_shared<Tensor<T>>(xv.shape());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(B) * HW);
  for (int b = 0; b < B; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * C * HW;
    for (int p = 0; p < HW; ++p) {
      T mean = 0;
      for (int c = 0; c < C; ++c) mean += xv[base + c * HW + p];
      mean /= C;
      T var = 0;
      for (int c = 0; c < C; ++c) {
        const T d = xv[base + c * HW + p] - mean;
        var += d * d;
      }
      var /= C;
      const T is = T(1) / std::sqrt(var + eps);
      (*inv_std)[static_cast<std::size_t>(b) * HW + p] = is;
      for (int c = 0; c < C; ++c) {
        const std::size_t i = base + c * HW + p;
        (*xhat)[i] = (xv[i] - mean) * is;
        out[i] = gv[c] * (*xhat)[i] + bv[c];
      }
    }
  }
  return t.record(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, xhat, inv_std, B, C, HW](Tape<T>& tp, const Tensor<T>& g) {
                    const Tensor<T>& gv = tp.value(gamma);
                    Tensor<T>* gx = tp.requires_grad(x) ? &tp.grad(x) : nullptr;
                    Tensor<T>* gg = tp.requires_grad(gamma) ? &tp.grad(gamma) : nullptr;
                    Tensor<T>* gb = tp.requires_grad(beta) ? &tp.grad(beta) : nullptr;
                    for (int b = 0; b < B; ++b) {
                      const std::size_t base = static_cast<std::size_t>(b) * C * HW;
                      for (int p = 0; p < HW; ++p) {
                        T sum_d = 0, sum_dx = 0;
                        for (int c = 0; c < C; ++c) {
                          const std::size_t i = base + c * HW + p;
                          const T d = g[i] * gv[c];
                          sum_d += d;
                          sum_dx += d * (*xhat)[i];
                          if (gg) (*gg)[c] += g[i] * (*xhat)[i];
                          if (gb) (*gb)[c] += g[i];
                        }
                        if (!gx) continue;
                        const T is = (*inv_std)[static_cast<std::size_t>(b) * HW + p];
                        for (int c = 0; c < C; ++c) {
                          const std::size_t i = base + c * HW + p;
                          const T d = g[i] * gv[c];
                          (*gx)[i] += is * (d - sum_d / C - (*xhat)[i] * sum_dx / C);
                        }
                      }
                    }
                  });
}

/// Mean over axis 2 (height) or 3 (width), keeping the axis with size 1.
template <class T>
Var mean_axis(Tape<T>& t, Var x, int axis) {
  if (axis != 2 && axis != 3) throw ShapeError("mean_axis supports axis 2 or 3");
  const Tensor<T>& xv = t.value(x);
  const Shape s = xv.shape();
  Shape os = s;
  os[axis] = 1;
  Tensor<T> out(os);
  const T inv = T(1) / s[axis];
  for (int b = 0; b < s[0]; ++b)
    for (int c = 0; c < s[1]; ++c)
      for (int y = 0; y < s[2]; ++y)
        for (int w = 0; w < s[3]; ++w) {
          if (axis == 3) {
            out(b, c, y, 0) += xv(b, c, y, w);
          } else {
            out(b, c, 0, w) += xv(b, c, y, w);
          }
        }
  for (auto& v : out.values()) v *= inv;
  return t.record(std::move(out), {x}, [x, axis, s, inv](Tape<T>& tp, const Tensor<T>& g) {
    Tensor<T>& gx = tp.grad(x);
    for (int b = 0; b < s[0]; ++b)
      for (int c = 0; c < s[1]; ++c)
        for (int y = 0; y < s[2]; ++y)
          for (int w = 0; w < s[3]; ++w) gx(b, c, y, w) += inv * (axis == 3 ? g(b, c, y, 0) : g(b, c, 0, w));
  });
}

/// [B,C,H,W] -> [B,C,W,H]
template <class T>
Var transpose_hw(Tape<T>& t, Var x) {
  const Tensor<T>& xv = t.value(x);
  const Shape s = xv.shape();
  Tensor<T> out({s[0], s[1], s[3], s[2]});
  for (int b = 0; b < s[0]; ++b)
    for (int c = 0; c < s[1]; ++c)
      for (int y = 0; y < s[2]; ++y)
        for (int w = 0; w < s[3]; ++w) out(b, c, w, y) = xv(b, c, y, w);
  return t.record(std::move(out), {x}, [x, s](Tape<T>& tp, const Tensor<T>& g) {
    Tensor<T>& gx = tp.grad(x);
    for (int b = 0; b < s[0]; ++b)
      for (int c = 0; c < s[1]; ++c)
        for (int y = 0; y < s[2]; ++y)
          for (int w = 0; w < s[3]; ++w) gx(b, c, y, w) += g(b, c, w, y);
  });
}

namespace detail {
// Views a shape as [outer, axis, inner].
inline std::array<std::size_t, 3> split_axis(const Shape& s, int axis) {
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (int d = axis + 1; d < 4; ++d) inner *= s[d];
  return {outer, static_cast<std::size_t>(s[axis]), inner};
}
}  // namespace detail

template <class T>
Var concat(Tape<T>& t, const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Shape os = t.shape(parts[0]);
  os[axis] = 0;
  for (Var p : parts) {
    Shape s = t.shape(p);
    for (int d = 0; d < 4; ++d) {
      if (d != axis && s[d] != os[d]) throw ShapeError("concat shape mismatch: " + to_string(s));
    }
    os[axis] += s[axis];
  }
  Tensor<T> out(os);
  const auto [outer, total, inner] = detail::split_axis(os, axis);
  std::size_t start = 0;
  std::vector<std::size_t> starts;
  for (Var p : parts) {
    const Tensor<T>& pv = t.value(p);
    const std::size_t len = pv.shape()[axis];
    starts.push_back(start);
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * len * inner, len * inner, out.data() + (o * total + start) * inner);
    }
    start += len;
  }
  return t.record(std::move(out), std::span<const Var>(parts),
                  [parts, starts, axis, outer, total, inner](Tape<T>& tp, const Tensor<T>& g) {
                    for (std::size_t k = 0; k < parts.size(); ++k) {
                      if (!tp.requires_grad(parts[k])) continue;
                      Tensor<T>& gp = tp.grad(parts[k]);
                      const std::size_t len = gp.shape()[axis];
                      for (std::size_t o = 0; o < outer; ++o) {
                        const T* src = g.data() + (o * total + starts[k]) * inner;
                        T* dst = gp.data() + o * len * inner;
                        for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                      }
                    }
                  });
}

template <class T>
Var slice(Tape<T>& t, Var x, int axis, int begin, int end) {
  const Tensor<T>& xv = t.value(x);
  const Shape s = xv.shape();
  if (begin < 0 || end > s[axis] || begin >= end) throw ShapeError("invalid slice of " + to_string(s));
  Shape os = s;
  os[axis] = end - begin;
  Tensor<T> out(os);
  const auto [outer, total, inner] = detail::split_axis(s, axis);
  const std::size_t len = end - begin;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.data() + (o * total + begin) * inner, len * inner, out.data() + o * len * inner);
  }
  return t.record(std::move(out), {x}, [x, outer, total, inner, len, begin](Tape<T>& tp, const Tensor<T>& g) {
    Tensor<T>& gx = tp.grad(x);
    for (std::size_t o = 0; o < outer; ++o) {
      const T* src = g.data() + o * len * inner;
      T* dst = gx.data() + (o * total + begin) * inner;
      for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
    }
  });
}

template <class T>
Var upsample_nearest(Tape<T>& t, Var x, int factor) {
  const Tensor<T>& xv = t.value(x);
  const Shape s = xv.shape();
  Tensor<T> out({s[0], s[1], s[2] * factor, s[3] * factor});
  for (int b = 0; b < s[0]; ++b)
    for (int c = 0; c < s[1]; ++c)
      for (int y = 0; y < s[2] * factor; ++y)
        for (int w = 0; w < s[3] * factor; ++w) out(b, c, y, w) = xv(b, c, y / factor, w / factor);
  return t.record(std::move(out), {x}, [x, s, factor](Tape<T>& tp, const Tensor<T>& g) {
    Tensor<T>& gx = tp.grad(x);
    for (int b = 0; b < s[0]; ++b)
      for (int c = 0; c < s[1]; ++c)
        for (int y = 0; y < s[2] * factor; ++y)
          for (int w = 0; w < s[3] * factor; ++w) gx(b, c, y / factor, w / factor) += g(b, c, y, w);
  });
}

}  // namespace fusion4ca::ops
