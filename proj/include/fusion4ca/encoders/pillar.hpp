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
#include <memory>
#include <vector>

#include "fusion4ca/autograd/layers.hpp"
#include "fusion4ca/core/geometry.hpp"

namespace fusion4ca {

struct PillarSpec {
  BEVGridSpec grid;
  int max_points_per_pillar = 32;
  int embed_width = 16;

  void validate() const {
    grid.validate();
    if (max_points_per_pillar < 1) throw std::invalid_argument("max_points_per_pillar must be >= 1");
    if (embed_width < 1) throw std::invalid_argument("pillar embedding width must be >= 1");
  }
};

inline constexpr int kPillarPointFeatures = 6;

/// Points kept for encoding, as per-point features plus their target cell.
template <class T>
struct PillarInput {
  Tensor<T> features;      // [1, 6, N, 1]
  std::vector<int> batch;  // sample index per point
  std::vector<int> cell;   // row * nx + col per point
  int batch_size = 1;
};

/// Selects in-grid points, orders them canonically by (x, y, z, intensity) so
/// the result does not depend on input order, and keeps the first
/// max_points_per_pillar per pillar. Features: offsets from the cell center in
/// cells, z, intensity, x and y scaled by the grid extent.
template <class T>
PillarInput<T> prepare_pillars(const std::vector<const PointCloud*>& clouds, const PillarSpec& spec) {
  spec.validate();
  const BEVGridSpec& g = spec.grid;
  PillarInput<T> in;
  in.batch_size = static_cast<int>(clouds.size());
  std::vector<std::array<float, 4>> kept_points;
  for (int b = 0; b < in.batch_size; ++b) {
    std::vector<std::array<float, 4>> pts;
    for (const auto& p : clouds[b]->points) {
      if (world_to_cell({p[0], p[1]}, g)) pts.push_back(p);
    }
    std::sort(pts.begin(), pts.end());
    std::vector<int> count(static_cast<std::size_t>(g.cells()), 0);
    for (const auto& p : pts) {
      const Cell c = *world_to_cell({p[0], p[1]}, g);
      const int idx = c.row * g.nx() + c.col;
      if (count[idx]++ >= spec.max_points_per_pillar) continue;
      kept_points.push_back(p);
      in.batch.push_back(b);
      in.cell.push_back(idx);
    }
  }
  const int N = static_cast<int>(kept_points.size());
  in.features = Tensor<T>({1, kPillarPointFeatures, N, 1});
  const double ext_x = g.x_max - g.x_min, ext_y = g.y_max - g.y_min;
  for (int i = 0; i < N; ++i) {
    const auto& p = kept_points[i];
    const Cell c{in.cell[i] / g.nx(), in.cell[i] % g.nx()};
    const Eigen::Vector2d center = g.cell_center(c);
    const double f[kPillarPointFeatures] = {(p[0] - center.x()) / g.cell_size,
                                            (p[1] - center.y()) / g.cell_size,
                                            p[2],
                                            p[3],
                                            (p[0] - g.x_min) / ext_x,
                                            (p[1] - g.y_min) / ext_y};
    for (int k = 0; k < kPillarPointFeatures; ++k) in.features(0, k, i, 0) = static_cast<T>(f[k]);
  }
  return in;
}

/// Max over the points of each pillar, per channel; empty pillars are 0.
/// `points` is [1, E, N, 1]; output [B, E, ny, nx]. The gradient flows to the
/// first point attaining the max.
template <class T>
Var scatter_max(Tape<T>& t, Var points, std::shared_ptr<const PillarInput<T>> in, const BEVGridSpec& grid) {
  const Tensor<T>& pv = t.value(points);
  const int E = pv.c(), N = pv.h();
  if (N != static_cast<int>(in->cell.size()) || pv.n() != 1 || pv.w() != 1) {
    throw ShapeError("scatter_max: point features " + to_string(pv.shape()) + " do not match pillar input");
  }
  const int cells = grid.cells();
  Tensor<T> out({in->batch_size, E, grid.ny(), grid.nx()});
  auto arg = std::make_shared<std::vector<int>>(static_cast<std::size_t>(in->batch_size) * E * cells, -1);
  for (int i = 0; i < N; ++i) {
    const int b = in->batch[i], cell = in->cell[i];
    for (int e = 0; e < E; ++e) {
      const std::size_t o = (static_cast<std::size_t>(b) * E + e) * cells + cell;
      const T v = pv(0, e, i, 0);
      int& a = (*arg)[o];
      if (a < 0 || v > out[o]) {
        a = i;
        out[o] = v;
      }
    }
  }
  return t.record(std::move(out), {points}, [points, arg, E, cells](Tape<T>& tp, const Tensor<T>& g) {
    Tensor<T>& gp = tp.grad(points);
    for (std::size_t o = 0; o < arg->size(); ++o) {
      const int i = (*arg)[o];
      if (i < 0) continue;
      const int e = static_cast<int>((o / cells) % E);
      gp(0, e, i, 0) += g[o];
    }
  });
}

struct PillarEncoder {
  PillarSpec spec;
  Conv embed;
};

template <class T>
PillarEncoder make_pillar_encoder(ParamStore<T>& store, const PillarSpec& spec, std::uint64_t seed) {
  spec.validate();
  return {spec, make_conv(store, LeafSpec{"pillar", "pillar", true, seed}, "embed", kPillarPointFeatures,
                          spec.embed_width, 1)};
}

/// Per-point linear embedding + GELU, max-pooled per pillar into [B, E, ny, nx].
template <class T>
Var pillar_encode(Tape<T>& t, const PillarEncoder& enc, std::shared_ptr<const PillarInput<T>> in) {
  if (in->cell.empty()) {
    const BEVGridSpec& g = enc.spec.grid;
    return t.constant(Tensor<T>({in->batch_size, enc.spec.embed_width, g.ny(), g.nx()}));
  }
  Var pts = ops::gelu(t, apply(t, enc.embed, t.constant(in->features)));
  return scatter_max(t, pts, in, enc.spec.grid);
}

}  // namespace fusion4ca
