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

#include <stdexcept>
#include <string>

#include "fusion4ca/autograd/layers.hpp"

namespace fusion4ca {

struct CoordAttParams {
  int channels = 0;
  int reduction = 8;
  Conv shared;
  ChannelNorm norm;
  Conv conv_h;
  Conv conv_w;
};

template <class T>
CoordAttParams make_coordatt(ParamStore<T>& store, int channels, int reduction, std::uint64_t seed,
                             const std::string& prefix = "coordatt") {
  if (reduction < 1 || channels % reduction != 0) {
    throw std::invalid_argument("coordatt channels " + std::to_string(channels) + " not divisible by reduction " +
                                std::to_string(reduction));
  }
  const int mid = channels / reduction;
  LeafSpec spec{prefix, "coordatt", true, seed};
  CoordAttParams p;
  p.channels = channels;
  p.reduction = reduction;
  p.shared = make_conv(store, spec, "shared", channels, mid, 1);
  p.norm = make_norm(store, spec, "norm", mid);
  p.conv_h = make_conv(store, spec, "conv_h", mid, channels, 1);
  p.conv_w = make_conv(store, spec, "conv_w", mid, channels, 1);
  return p;
}

/// y = x * a_h * a_w with a_h [B,C,H,1] from pooling along W and a_w [B,C,1,W]
/// from pooling along H.
template <class T>
Var coord_att_forward(Tape<T>& t, const CoordAttParams& p, Var x) {
  const Shape s = t.shape(x);
  if (s[1] != p.channels) {
    throw ShapeError("coordatt expects " + std::to_string(p.channels) + " channels, got " + to_string(s));
  }
  const int H = s[2], W = s[3];
  Var along_w = ops::mean_axis(t, x, 3);                          // [B,C,H,1]
  Var along_h = ops::transpose_hw(t, ops::mean_axis(t, x, 2));    // [B,C,W,1]
  Var joint = ops::concat(t, {along_w, along_h}, 2);              // [B,C,H+W,1]
  joint = ops::gelu(t, apply(t, p.norm, apply(t, p.shared, joint)));
  Var f_h = ops::slice(t, joint, 2, 0, H);
  Var f_w = ops::transpose_hw(t, ops::slice(t, joint, 2, H, H + W));
  Var a_h = ops::sigmoid(t, apply(t, p.conv_h, f_h));
  Var a_w = ops::sigmoid(t, apply(t, p.conv_w, f_w));
  return ops::mul(t, x, ops::mul(t, a_h, a_w));
}

}  // namespace fusion4ca
