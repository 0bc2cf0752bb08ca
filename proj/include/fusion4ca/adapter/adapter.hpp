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

#include <array>
#include <stdexcept>
#include <string>

#include "fusion4ca/autograd/layers.hpp"

namespace fusion4ca {

inline constexpr std::array<int, 3> kAdapterKernels = {3, 5, 7};

/// Bottleneck adapter: LN mix, down-projection, multi-scale depthwise
/// convolution with per-kernel residuals, pointwise conv, GELU, zero-initialized
/// up-projection, outer residual.
struct Adapter {
  int channels = 0;
  int reduction = 4;
  ChannelNorm ln;
  ParamRef s1;
  ParamRef s2;
  Conv down;
  std::array<Conv, 3> dw;
  Conv pw;
  Conv up;
};

template <class T>
Adapter adapter_init(ParamStore<T>& store, const LeafSpec& spec, int channels, int r) {
  if (r < 2) throw std::invalid_argument("adapter reduction must be >= 2");
  if (channels % r != 0) {
    throw std::invalid_argument("adapter channels " + std::to_string(channels) + " not divisible by r=" +
                                std::to_string(r));
  }
  const int hidden = channels / r;
  Adapter a;
  a.channels = channels;
  a.reduction = r;
  a.ln = make_norm(store, spec, "ln", channels);
  a.s1 = add_leaf(store, spec, "s1", {1, 1, 1, 1}, Init::kOnes);
  a.s2 = add_leaf(store, spec, "s2", {1, 1, 1, 1}, Init::kZeros);
  a.down = make_conv(store, spec, "down", channels, hidden, 1);
  for (std::size_t i = 0; i < kAdapterKernels.size(); ++i) {
    a.dw[i] = make_depthwise(store, spec, "dw" + std::to_string(kAdapterKernels[i]), hidden, kAdapterKernels[i]);
  }
  a.pw = make_conv(store, spec, "pw", hidden, hidden, 1);
  a.up = make_conv(store, spec, "up", hidden, channels, 1, 1, Init::kZeros);
  return a;
}

template <class T>
Var adapter_forward(Tape<T>& t, const Adapter& a, Var x) {
  const Shape& s = t.shape(x);
  if (s[1] != a.channels) {
    throw ShapeError("adapter expects " + std::to_string(a.channels) + " channels, got " + to_string(s));
  }
  Var xn = ops::add(t, ops::mul(t, apply(t, a.ln, x), t.param(a.s1)), ops::mul(t, x, t.param(a.s2)));
  Var h = apply(t, a.down, xn);
  Var f = ops::scale(t, h, T(a.dw.size()));
  for (const Conv& c : a.dw) f = ops::add(t, f, apply(t, c, h));
  Var p = ops::gelu(t, apply(t, a.pw, f));
  return ops::add(t, x, apply(t, a.up, p));
}

}  // namespace fusion4ca
