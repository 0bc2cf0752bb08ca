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

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "fusion4ca/autograd/layers.hpp"

namespace fusion4ca {

class DegenerateAlignInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Three 3x3 convs taking the 1-channel depth map to C channels
/// (1 -> C/4 -> C/2 -> C), GELU between layers.
struct AlignParams {
  int channels = 16;
  double tau = 0.07;
  bool symmetric = false;
  std::array<Conv, 3> convs;
};

template <class T>
AlignParams make_align(ParamStore<T>& store, int channels, double tau, bool symmetric, std::uint64_t seed) {
  if (!(tau > 0.0)) throw std::invalid_argument("align tau must be positive");
  if (channels % 4 != 0) throw std::invalid_argument("align channel count must be divisible by 4");
  LeafSpec spec{"align", "align", false, seed};
  AlignParams p{channels, tau, symmetric, {}};
  const int widths[4] = {1, channels / 4, channels / 2, channels};
  for (int i = 0; i < 3; ++i) {
    p.convs[i] = make_conv(store, spec, "conv" + std::to_string(i), widths[i], widths[i + 1], 3);
  }
  return p;
}

template <class T>
Var encode_depth_feature(Tape<T>& t, const AlignParams& p, Var depth_map) {
  const Shape& s = t.shape(depth_map);
  if (s[1] != 1) throw ShapeError("depth feature input must have 1 channel, got " + to_string(s));
  Var x = depth_map;
  for (int i = 0; i < 3; ++i) {
    x = apply(t, p.convs[i], x);
    if (i < 2) x = ops::gelu(t, x);
  }
  return x;
}

/// InfoNCE over cosine similarities: unit i of `rgb` is the anchor, unit i of
/// `dep` its positive, every other unit j of `dep` a negative. Units are the
/// batch axis; each unit is flattened over (C, H, W). With `symmetric` the
/// dep->rgb direction is averaged in.
template <class T>
Var align_loss(Tape<T>& t, Var rgb, Var dep, double tau, bool symmetric = false) {
  const Tensor<T>& rv = t.value(rgb);
  const Tensor<T>& dv = t.value(dep);
  if (rv.shape() != dv.shape()) {
    throw ShapeError("align_loss shapes differ: " + to_string(rv.shape()) + " vs " + to_string(dv.shape()));
  }
  if (!(tau > 0.0)) throw std::invalid_argument("align tau must be positive");
  const int B = rv.n();
  const std::size_t L = rv.size() / B;
  if (B < 1) throw ShapeError("align_loss needs at least one unit");

  struct Cache {
    std::vector<double> rn, dn;  // norms
    std::vector<double> cos;     // B x B
    std::vector<double> grad_s;  // dLoss/dS, S = cos / tau
  };
  auto cache = std::make_shared<Cache>();
  cache->rn.resize(B);
  cache->dn.resize(B);
  auto norm = [&](const T* p) {
    double s = 0;
    for (std::size_t k = 0; k < L; ++k) s += static_cast<double>(p[k]) * p[k];
    return std::sqrt(s);
  };
  for (int i = 0; i < B; ++i) {
    cache->rn[i] = norm(rv.data() + i * L);
    cache->dn[i] = norm(dv.data() + i * L);
    if (cache->rn[i] < 1e-12 || cache->dn[i] < 1e-12) {
      throw DegenerateAlignInput("align_loss: unit " + std::to_string(i) +
                                 " has a (near) zero-norm feature vector; cosine similarity is undefined");
    }
  }
  cache->cos.assign(static_cast<std::size_t>(B) * B, 0.0);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < B; ++j) {
      double d = 0;
      const T* a = rv.data() + i * L;
      const T* b = dv.data() + j * L;
      for (std::size_t k = 0; k < L; ++k) d += static_cast<double>(a[k]) * b[k];
      cache->cos[i * B + j] = d / (cache->rn[i] * cache->dn[j]);
    }

  // Cross-entropy of each row (or column) of S against the diagonal.
  cache->grad_s.assign(static_cast<std::size_t>(B) * B, 0.0);
  const double dirs = symmetric ? 2.0 : 1.0;
  double loss = 0.0;
  auto direction = [&](bool transpose) {
    for (int i = 0; i < B; ++i) {
      auto s = [&](int j) { return (transpose ? cache->cos[j * B + i] : cache->cos[i * B + j]) / tau; };
      double mx = -INFINITY;
      for (int j = 0; j < B; ++j) mx = std::max(mx, s(j));
      double z = 0;
      for (int j = 0; j < B; ++j) z += std::exp(s(j) - mx);
      loss += (mx + std::log(z) - s(i)) / (B * dirs);
      for (int j = 0; j < B; ++j) {
        const double p = std::exp(s(j) - mx) / z;
        const double gs = (p - (i == j ? 1.0 : 0.0)) / (B * dirs);
        (transpose ? cache->grad_s[j * B + i] : cache->grad_s[i * B + j]) += gs;
      }
    }
  };
  direction(false);
  if (symmetric) direction(true);
  if (B == 1) loss = 0.0;

  return t.record(Tensor<T>::scalar(static_cast<T>(loss)), {rgb, dep},
                  [rgb, dep, cache, B, L, tau](Tape<T>& tp, const Tensor<T>& g) {
                    const Tensor<T>& rv = tp.value(rgb);
                    const Tensor<T>& dv = tp.value(dep);
                    const double go = g[0];
                    T* gr = tp.requires_grad(rgb) ? tp.grad(rgb).data() : nullptr;
                    T* gd = tp.requires_grad(dep) ? tp.grad(dep).data() : nullptr;
                    // d cos(a, b) / d a = b / (|a||b|) - cos * a / |a|^2
                    for (int i = 0; i < B; ++i)
                      for (int j = 0; j < B; ++j) {
                        const double w = go * cache->grad_s[i * B + j] / tau;
                        if (w == 0.0) continue;
                        const double c = cache->cos[i * B + j];
                        const double ri = cache->rn[i], dj = cache->dn[j];
                        const T* a = rv.data() + i * L;
                        const T* b = dv.data() + j * L;
                        if (gr) {
                          T* out = gr + i * L;
                          for (std::size_t k = 0; k < L; ++k) {
                            out[k] += static_cast<T>(w * (b[k] / (ri * dj) - c * a[k] / (ri * ri)));
                          }
                        }
                        if (gd) {
                          T* out = gd + j * L;
                          for (std::size_t k = 0; k < L; ++k) {
                            out[k] += static_cast<T>(w * (a[k] / (ri * dj) - c * b[k] / (dj * dj)));
                          }
                        }
                      }
                  });
}

}  // namespace fusion4ca
