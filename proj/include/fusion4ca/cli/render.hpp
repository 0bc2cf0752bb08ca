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
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fusion4ca/core/geometry.hpp"
#include "fusion4ca/core/io.hpp"
#include "fusion4ca/eval/metrics.hpp"

namespace fusion4ca::render {

using Color = std::array<std::uint8_t, 3>;

inline constexpr Color kGreen = {40, 200, 60};
inline constexpr Color kYellow = {240, 210, 30};
inline constexpr Color kRed = {230, 40, 40};

struct Canvas {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;

  Canvas(int h, int w, Color bg) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3) {
    for (int i = 0; i < h * w; ++i) std::copy(bg.begin(), bg.end(), rgb.begin() + i * 3);
  }

  void set(int y, int x, Color c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    std::copy(c.begin(), c.end(), rgb.begin() + (static_cast<std::size_t>(y) * width + x) * 3);
  }

  void line(double x0, double y0, double x1, double y1, Color c) {
    const int n = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    for (int i = 0; i <= n; ++i) {
      const double t = static_cast<double>(i) / n;
      set(static_cast<int>(std::lround(y0 + t * (y1 - y0))), static_cast<int>(std::lround(x0 + t * (x1 - x0))), c);
    }
  }

  std::string ppm() const { return io::encode_ppm(height, width, rgb); }
};

/// Top-down view: world x grows upward, world y grows to the left.
struct BevView {
  BEVGridSpec grid;
  double px_per_m = 16.0;

  int height() const { return static_cast<int>(std::lround((grid.x_max - grid.x_min) * px_per_m)); }
  int width() const { return static_cast<int>(std::lround((grid.y_max - grid.y_min) * px_per_m)); }
  std::array<double, 2> to_px(double x, double y) const {
    return {(grid.y_max - y) * px_per_m, (grid.x_max - x) * px_per_m};  // (col, row)
  }
};

inline void draw_box(Canvas& c, const BevView& v, const Box3D& b, Color color) {
  const double cy = std::cos(b.yaw), sy = std::sin(b.yaw);
  const double hl = b.size.x() / 2, hw = b.size.y() / 2;
  const double corners[4][2] = {{hl, hw}, {hl, -hw}, {-hl, -hw}, {-hl, hw}};
  std::array<std::array<double, 2>, 4> px;
  for (int i = 0; i < 4; ++i) {
    const double x = b.center.x() + cy * corners[i][0] - sy * corners[i][1];
    const double y = b.center.y() + sy * corners[i][0] + cy * corners[i][1];
    px[i] = v.to_px(x, y);
  }
  for (int i = 0; i < 4; ++i) c.line(px[i][0], px[i][1], px[(i + 1) % 4][0], px[(i + 1) % 4][1], color);
  // heading tick
  const auto front = v.to_px(b.center.x() + cy * hl, b.center.y() + sy * hl);
  const auto mid = v.to_px(b.center.x(), b.center.y());
  c.line(mid[0], mid[1], front[0], front[1], color);
}

/// Ground truth green; predictions yellow when they match a same-class ground
/// truth box within `correct_dist` (greedy by score), red otherwise.
inline Canvas bev_overlay(const BEVGridSpec& grid, const PointCloud& cloud, const std::vector<Box3D>& gts,
                          const std::vector<Box3D>& preds, double correct_dist = eval::kTpThreshold) {
  const BevView v{grid};
  Canvas c(v.height(), v.width(), {18, 18, 24});
  for (const auto& p : cloud.points) {
    if (!world_to_cell({p[0], p[1]}, grid)) continue;
    const auto px = v.to_px(p[0], p[1]);
    const auto g = static_cast<std::uint8_t>(60 + 140 * std::clamp(p[3], 0.0f, 1.0f));
    c.set(static_cast<int>(px[1]), static_cast<int>(px[0]), {g, g, g});
  }
  for (const Box3D& b : gts) draw_box(c, v, b, kGreen);
  std::vector<bool> correct(preds.size(), false);
  for (int cls = 0; cls < 64; ++cls) {
    bool any = false;
    for (const auto& b : preds) any = any || b.class_id == cls;
    if (!any) continue;
    std::vector<Box3D> cp;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i].class_id == cls) {
        cp.push_back(preds[i]);
        idx.push_back(i);
      }
    }
    // match_class sorts by score; map the outcome back by re-sorting indices the same way
    std::vector<std::size_t> order(cp.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cp[a].score > cp[b].score; });
    const eval::MatchResult m = eval::match_class({{cp, gts}}, cls, correct_dist);
    for (std::size_t k = 0; k < order.size(); ++k) correct[idx[order[k]]] = m.is_tp[k];
  }
  for (std::size_t i = 0; i < preds.size(); ++i) draw_box(c, v, preds[i], correct[i] ? kYellow : kRed);
  return c;
}

struct Series {
  std::vector<double> values;
  Color color;
};

/// Line plot on a log10 y axis; non-positive values are skipped.
inline Canvas line_plot(const std::vector<Series>& series, int height = 360, int width = 640) {
  Canvas c(height, width, {255, 255, 255});
  const int left = 40, right = width - 10, top = 10, bottom = height - 30;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      if (v > 0 && std::isfinite(v)) {
        lo = std::min(lo, std::log10(v));
        hi = std::max(hi, std::log10(v));
      }
    }
  }
  c.line(left, top, left, bottom, {0, 0, 0});
  c.line(left, bottom, right, bottom, {0, 0, 0});
  if (n < 2 || !(hi >= lo)) return c;
  lo = std::floor(lo);
  hi = std::max(std::ceil(hi), lo + 1);
  for (double d = lo; d <= hi; d += 1.0) {
    const double y = bottom - (d - lo) / (hi - lo) * (bottom - top);
    for (int x = left; x <= right; x += 4) c.set(static_cast<int>(y), x, {200, 200, 200});
    c.line(left - 5, y, left, y, {0, 0, 0});
  }
  for (const auto& s : series) {
    bool have = false;
    double px = 0, py = 0;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      const double v = s.values[i];
      if (!(v > 0) || !std::isfinite(v)) {
        have = false;
        continue;
      }
      const double x = left + static_cast<double>(i) / (n - 1) * (right - left);
      const double y = bottom - (std::log10(v) - lo) / (hi - lo) * (bottom - top);
      if (have) c.line(px, py, x, y, s.color);
      px = x;
      py = y;
      have = true;
    }
  }
  return c;
}

}  // namespace fusion4ca::render
