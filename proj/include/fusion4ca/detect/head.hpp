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
#include <string>
#include <tuple>
#include <vector>

#include "fusion4ca/autograd/layers.hpp"
#include "fusion4ca/core/geometry.hpp"

namespace fusion4ca {

inline constexpr int kRegChannels = 8;  // dx, dy (cells), z, log l, log w, log h, sin yaw, cos yaw
inline constexpr double kHeatmapPriorBias = -2.19;

/// Center-heatmap head: shared 3x3 conv + GELU, then 1x1 heatmap logits and
/// 1x1 box regression.
struct HeadParams {
  int n_classes = 2;
  Conv shared;
  Conv heatmap;
  Conv reg;
};

struct HeadOutput {
  Var heatmap;  // [B, n_classes, H, W] logits
  Var reg;      // [B, 8, H, W]
};

template <class T>
HeadParams make_head(ParamStore<T>& store, const LeafSpec& spec, int channels, int n_classes) {
  HeadParams h;
  h.n_classes = n_classes;
  h.shared = make_conv(store, spec, "shared", channels, channels, 3);
  h.heatmap = make_conv(store, spec, "heatmap", channels, n_classes, 1);
  store[h.heatmap.bias].value.fill(static_cast<T>(kHeatmapPriorBias));
  h.reg = make_conv(store, spec, "reg", channels, kRegChannels, 1);
  return h;
}

template <class T>
HeadOutput head_forward(Tape<T>& t, const HeadParams& h, Var x) {
  Var f = ops::gelu(t, apply(t, h.shared, x));
  return {apply(t, h.heatmap, f), apply(t, h.reg, f)};
}

/// Targets for one batch. heatmap [B,K,ny,nx] in [0,1]; reg [B,8,ny,nx]; mask
/// [B,1,ny,nx] with 1 at each box's center cell.
template <class T>
struct TargetMaps {
  Tensor<T> heatmap;
  Tensor<T> reg;
  Tensor<T> mask;
  int num_positive = 0;
  int skipped = 0;  // boxes whose center lies outside the grid
};

/// Largest radius (in cells) such that a box shifted by it still overlaps the
/// original with IoU >= min_overlap; three corner cases, smallest wins.
inline double gaussian_radius(double height, double width, double min_overlap) {
  const double b1 = height + width;
  const double c1 = width * height * (1 - min_overlap) / (1 + min_overlap);
  const double r1 = (b1 + std::sqrt(b1 * b1 - 4 * c1)) / 2;
  const double b2 = 2 * (height + width);
  const double c2 = (1 - min_overlap) * width * height;
  const double r2 = (b2 + std::sqrt(b2 * b2 - 16 * c2)) / 2;
  const double a3 = 4 * min_overlap;
  const double b3 = -2 * min_overlap * (height + width);
  const double c3 = (min_overlap - 1) * width * height;
  const double r3 = (b3 + std::sqrt(b3 * b3 - 4 * a3 * c3)) / 2;
  return std::min({r1, r2, r3});
}

struct TargetOptions {
  double min_overlap = 0.3;
  int min_radius = 1;
};

inline int heatmap_radius(const Box3D& box, const BEVGridSpec& grid, const TargetOptions& opt = {}) {
  const double r = gaussian_radius(box.size.x() / grid.cell_size, box.size.y() / grid.cell_size, opt.min_overlap);
  return std::max(opt.min_radius, static_cast<int>(r));
}

/// Peak-normalized Gaussian weight at integer cell offset (dy, dx).
inline double heatmap_gaussian(int dy, int dx, int radius) {
  const double sigma = (2.0 * radius + 1.0) / 6.0;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

/// Writes sample `b` of `maps`.
template <class T>
void fill_targets(TargetMaps<T>& maps, int b, const std::vector<Box3D>& boxes, const BEVGridSpec& grid,
                  const TargetOptions& opt = {}) {
  const int K = maps.heatmap.c(), ny = grid.ny(), nx = grid.nx();
  for (const Box3D& box : boxes) {
    const auto cell = world_to_cell(box.center.head<2>(), grid);
    if (!cell) {
      ++maps.skipped;
      continue;
    }
    if (box.class_id < 0 || box.class_id >= K) throw std::invalid_argument("box class id out of range");
    const int r = heatmap_radius(box, grid, opt);
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const int y = cell->row + dy, x = cell->col + dx;
        if (y < 0 || y >= ny || x < 0 || x >= nx) continue;
        T& v = maps.heatmap(b, box.class_id, y, x);
        v = std::max(v, static_cast<T>(heatmap_gaussian(dy, dx, r)));
      }
    if (maps.mask(b, 0, cell->row, cell->col) != T(0)) continue;  // first box keeps a shared center cell
    maps.mask(b, 0, cell->row, cell->col) = T(1);
    ++maps.num_positive;
    const double reg[kRegChannels] = {(box.center.x() - grid.x_min) / grid.cell_size - cell->col,
                                      (box.center.y() - grid.y_min) / grid.cell_size - cell->row,
                                      box.center.z(),
                                      std::log(box.size.x()),
                                      std::log(box.size.y()),
                                      std::log(box.size.z()),
                                      std::sin(box.yaw),
                                      std::cos(box.yaw)};
    for (int c = 0; c < kRegChannels; ++c) maps.reg(b, c, cell->row, cell->col) = static_cast<T>(reg[c]);
  }
}

template <class T>
TargetMaps<T> build_targets(const std::vector<std::vector<Box3D>>& batch, const BEVGridSpec& grid, int n_classes,
                            const TargetOptions& opt = {}) {
  grid.validate();
  const int B = static_cast<int>(batch.size()), ny = grid.ny(), nx = grid.nx();
  TargetMaps<T> maps{Tensor<T>({B, n_classes, ny, nx}), Tensor<T>({B, kRegChannels, ny, nx}),
                     Tensor<T>({B, 1, ny, nx}), 0, 0};
  for (int b = 0; b < B; ++b) fill_targets(maps, b, batch[b], grid, opt);
  return maps;
}

template <class T>
TargetMaps<T> build_targets(const std::vector<Box3D>& boxes, const BEVGridSpec& grid, int n_classes,
                            const TargetOptions& opt = {}) {
  return build_targets<T>(std::vector<std::vector<Box3D>>{boxes}, grid, n_classes, opt);
}

/// Sigmoid scores -> 3x3 local maxima (per class) -> top k_max -> threshold.
/// Ties are broken by (score desc, row, col, class). Reads sample `b`.
template <class T>
std::vector<Box3D> decode_detections(const Tensor<T>& heatmap, const Tensor<T>& reg, const BEVGridSpec& grid,
                                     int k_max, double score_thresh, int b = 0) {
  const int K = heatmap.c(), H = heatmap.h(), W = heatmap.w();
  require_shape(reg.shape(), {heatmap.n(), kRegChannels, H, W}, "decode reg");
  struct Peak {
    double score;
    int row, col, cls;
  };
  auto score = [&](int k, int y, int x) { return 1.0 / (1.0 + std::exp(-static_cast<double>(heatmap(b, k, y, x)))); };
  std::vector<Peak> peaks;
  for (int k = 0; k < K; ++k)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const T v = heatmap(b, k, y, x);
        bool is_max = true;
        for (int dy = -1; dy <= 1 && is_max; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
            if (heatmap(b, k, yy, xx) > v) {
              is_max = false;
              break;
            }
          }
        if (is_max) peaks.push_back({score(k, y, x), y, x, k});
      }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& p) {
    return std::make_tuple(-a.score, a.row, a.col, a.cls) < std::make_tuple(-p.score, p.row, p.col, p.cls);
  });
  if (static_cast<int>(peaks.size()) > k_max) peaks.resize(std::max(k_max, 0));
  std::vector<Box3D> out;
  for (const Peak& p : peaks) {
    if (p.score < score_thresh) continue;
    auto r = [&](int c) { return static_cast<double>(reg(b, c, p.row, p.col)); };
    Box3D box;
    box.center = {grid.x_min + (p.col + r(0)) * grid.cell_size, grid.y_min + (p.row + r(1)) * grid.cell_size, r(2)};
    box.size = {std::exp(std::clamp(r(3), -10.0, 10.0)), std::exp(std::clamp(r(4), -10.0, 10.0)),
                std::exp(std::clamp(r(5), -10.0, 10.0))};
    box.yaw = wrap_angle(std::atan2(r(6), r(7)));
    box.class_id = p.cls;
    box.score = p.score;
    out.push_back(box);
  }
  return out;
}

}  // namespace fusion4ca
