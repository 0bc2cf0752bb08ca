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
#include <cmath>
#include <memory>
#include <vector>

#include "fusion4ca/autograd/layers.hpp"
#include "fusion4ca/core/geometry.hpp"

namespace fusion4ca {

struct DepthBins {
  double d_min = 1.0;
  double d_max = 20.0;
  int count = 16;

  void validate() const {
    if (!(d_min > 0.0) || !(d_max > d_min)) throw std::invalid_argument("depth bins need 0 < d_min < d_max");
    if (count < 2) throw std::invalid_argument("depth bins need D >= 2");
  }
  double width() const { return (d_max - d_min) / count; }
  double center(int k) const { return d_min + (k + 0.5) * width(); }
};

/// Sparse depth image at feature resolution: each cell keeps the minimum depth
/// of the points rasterizing into it, 0 where empty. Output [1, 1, H/stride, W/stride].
template <class T>
Tensor<T> depth_project(const PointCloud& cloud, const CameraModel& cam, int stride) {
  if (stride < 1 || cam.height % stride != 0 || cam.width % stride != 0) {
    throw std::invalid_argument("depth_project stride must divide the image size");
  }
  const int h = cam.height / stride, w = cam.width / stride;
  Tensor<T> out({1, 1, h, w});
  for (const PixelProjection& p : project_points(cloud, cam)) {
    const int row = std::min(static_cast<int>(p.v) / stride, h - 1);
    const int col = std::min(static_cast<int>(p.u) / stride, w - 1);
    T& cell = out(0, 0, row, col);
    const T d = static_cast<T>(p.depth);
    if (cell == T(0) || d < cell) cell = d;
  }
  return out;
}

struct DepthHead {
  Conv logits;
  DepthBins bins;
};

template <class T>
DepthHead make_depth_head(ParamStore<T>& store, int channels, const DepthBins& bins, std::uint64_t seed) {
  bins.validate();
  return {make_conv(store, LeafSpec{"depth_head", "depth_head", true, seed}, "conv", channels, bins.count, 1), bins};
}

/// Per-pixel categorical depth distribution [B, D, H, W] (softmax over D).
template <class T>
Var predict_depth_dist(Tape<T>& t, const DepthHead& head, Var features) {
  return ops::softmax_channels(t, apply(t, head.logits, features));
}

/// For one camera: BEV cell (row * nx + col) of every (bin, feature pixel)
/// frustum point, or -1 when the point falls outside the grid.
struct LiftTable {
  int bins = 0;
  int height = 0;
  int width = 0;
  int stride = 1;
  std::vector<int> cell;  // [D, H, W]

  int at(int k, int y, int x) const { return cell[(static_cast<std::size_t>(k) * height + y) * width + x]; }
};

/// Feature pixel (y, x) looks along the ray through image pixel
/// ((x + 0.5) * stride, (y + 0.5) * stride); bin k places it at camera depth
/// center(k).
inline LiftTable make_lift_table(const CameraModel& cam, int stride, const DepthBins& bins, const BEVGridSpec& grid) {
  cam.validate();
  bins.validate();
  grid.validate();
  LiftTable t{bins.count, cam.height / stride, cam.width / stride, stride, {}};
  t.cell.assign(static_cast<std::size_t>(t.bins) * t.height * t.width, -1);
  for (int k = 0; k < t.bins; ++k)
    for (int y = 0; y < t.height; ++y)
      for (int x = 0; x < t.width; ++x) {
        const Eigen::Vector3d p = cam.to_world(cam.unproject((x + 0.5) * stride, (y + 0.5) * stride, bins.center(k)));
        if (auto c = world_to_cell(p.head<2>(), grid)) {
          t.cell[(static_cast<std::size_t>(k) * t.height + y) * t.width + x] = c->row * grid.nx() + c->col;
        }
      }
  return t;
}

/// Lift-splat with sum pooling. `features` [B*V, C, H, W] and `depth` [B*V, D, H, W]
/// hold V camera views per sample (view-major within a sample); tables[v]
/// belongs to view v. Output [B, C, ny, nx].
template <class T>
Var lift_splat(Tape<T>& t, Var features, Var depth, std::shared_ptr<const std::vector<LiftTable>> tables,
               const BEVGridSpec& grid) {
  const Tensor<T>& fv = t.value(features);
  const Tensor<T>& dv = t.value(depth);
  const int V = static_cast<int>(tables->size());
  if (V == 0 || fv.n() % V != 0) throw ShapeError("lift_splat: feature batch not divisible by view count");
  const int B = fv.n() / V, C = fv.c(), H = fv.h(), W = fv.w();
  const int D = dv.c();
  require_shape(dv.shape(), {fv.n(), D, H, W}, "lift_splat depth");
  for (const LiftTable& tab : *tables) {
    if (tab.bins != D || tab.height != H || tab.width != W) throw ShapeError("lift_splat: table does not match features");
  }
  const int ny = grid.ny(), nx = grid.nx(), HW = H * W;
  Tensor<T> out({B, C, ny, nx});
  const std::size_t plane = static_cast<std::size_t>(ny) * nx;
  for (int u = 0; u < B * V; ++u) {
    const LiftTable& tab = (*tables)[u % V];
    const int b = u / V;
    const T* f = fv.data() + static_cast<std::size_t>(u) * C * HW;
    const T* d = dv.data() + static_cast<std::size_t>(u) * D * HW;
    T* o = out.data() + static_cast<std::size_t>(b) * C * plane;
    for (int k = 0; k < D; ++k)
      for (int p = 0; p < HW; ++p) {
        const int cell = tab.cell[static_cast<std::size_t>(k) * HW + p];
        if (cell < 0) continue;
        const T prob = d[static_cast<std::size_t>(k) * HW + p];
        for (int c = 0; c < C; ++c) o[c * plane + cell] += prob * f[static_cast<std::size_t>(c) * HW + p];
      }
  }
  return t.record(std::move(out), {features, depth}, [=](Tape<T>& tp, const Tensor<T>& g) {
    const Tensor<T>& fv = tp.value(features);
    const Tensor<T>& dv = tp.value(depth);
    T* gf = tp.requires_grad(features) ? tp.grad(features).data() : nullptr;
    T* gd = tp.requires_grad(depth) ? tp.grad(depth).data() : nullptr;
    for (int u = 0; u < B * V; ++u) {
      const LiftTable& tab = (*tables)[u % V];
      const int b = u / V;
      const T* f = fv.data() + static_cast<std::size_t>(u) * C * HW;
      const T* d = dv.data() + static_cast<std::size_t>(u) * D * HW;
      const T* go = g.data() + static_cast<std::size_t>(b) * C * plane;
      for (int k = 0; k < D; ++k)
        for (int p = 0; p < HW; ++p) {
          const int cell = tab.cell[static_cast<std::size_t>(k) * HW + p];
          if (cell < 0) continue;
          const std::size_t di = static_cast<std::size_t>(u) * D * HW + static_cast<std::size_t>(k) * HW + p;
          const T prob = d[static_cast<std::size_t>(k) * HW + p];
          T acc = 0;
          for (int c = 0; c < C; ++c) {
            const T gc = go[c * plane + cell];
            if (gf) gf[static_cast<std::size_t>(u) * C * HW + static_cast<std::size_t>(c) * HW + p] += gc * prob;
            acc += gc * f[static_cast<std::size_t>(c) * HW + p];
          }
          if (gd) gd[di] += acc;
        }
    }
  });
}

}  // namespace fusion4ca
