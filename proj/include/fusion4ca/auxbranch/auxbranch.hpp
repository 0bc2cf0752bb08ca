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
#include <optional>
#include <string>

#include "fusion4ca/autograd/layers.hpp"
#include "fusion4ca/detect/head.hpp"

namespace fusion4ca {

struct ResidualBlock {
  Conv conv1;
  ChannelNorm norm1;
  Conv conv2;
  ChannelNorm norm2;
  std::optional<Conv> projection;  // 1x1 skip when stride or width changes
};

/// Three residual blocks (strides 2, 1, 1), lateral 1x1 convs summed and
/// upsampled back to the input stride, then a center-heatmap head.
struct AuxBranchParams {
  std::array<ResidualBlock, 3> blocks;
  std::array<Conv, 3> laterals;
  HeadParams head;
};

inline constexpr std::array<int, 3> kAuxStrides = {2, 1, 1};

template <class T>
AuxBranchParams make_auxbranch(ParamStore<T>& store, int in_channels, int width, int n_classes, std::uint64_t seed) {
  AuxBranchParams p;
  int cin = in_channels;
  for (int i = 0; i < 3; ++i) {
    LeafSpec spec{"aux.block" + std::to_string(i), "aux", false, seed};
    ResidualBlock& b = p.blocks[i];
    b.conv1 = make_conv(store, spec, "conv1", cin, width, 3, kAuxStrides[i]);
    b.norm1 = make_norm(store, spec, "norm1", width);
    b.conv2 = make_conv(store, spec, "conv2", width, width, 3);
    b.norm2 = make_norm(store, spec, "norm2", width);
    if (kAuxStrides[i] != 1 || cin != width) b.projection = make_conv(store, spec, "proj", cin, width, 1, kAuxStrides[i]);
    cin = width;
  }
  LeafSpec fpn{"aux.fpn", "aux", false, seed};
  for (int i = 0; i < 3; ++i) p.laterals[i] = make_conv(store, fpn, "lateral" + std::to_string(i), width, width, 1);
  p.head = make_head(store, LeafSpec{"aux.head", "aux", false, seed}, width, n_classes);
  return p;
}

template <class T>
Var residual_block(Tape<T>& t, const ResidualBlock& b, Var x) {
  Var h = ops::gelu(t, apply(t, b.norm1, apply(t, b.conv1, x)));
  h = apply(t, b.norm2, apply(t, b.conv2, h));
  Var skip = b.projection ? apply(t, *b.projection, x) : x;
  return ops::gelu(t, ops::add(t, h, skip));
}

template <class T>
HeadOutput aux_forward(Tape<T>& t, const AuxBranchParams& p, Var camera_bev) {
  const Shape s = t.shape(camera_bev);
  if (s[2] % 2 != 0 || s[3] % 2 != 0) throw ShapeError("aux branch needs an even BEV size, got " + to_string(s));
  Var x = camera_bev;
  std::optional<Var> merged;
  for (int i = 0; i < 3; ++i) {
    x = residual_block(t, p.blocks[i], x);
    Var lat = apply(t, p.laterals[i], x);
    merged = merged ? ops::add(t, *merged, lat) : lat;
  }
  return head_forward(t, p.head, ops::upsample_nearest(t, *merged, 2));
}

}  // namespace fusion4ca
