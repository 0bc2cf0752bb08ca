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

#include "fusion4ca/autograd/tape.hpp"
#include "fusion4ca/detect/head.hpp"

namespace fusion4ca {

struct FocalOptions {
  double alpha = 2.0;
  double beta = 4.0;
  double clamp = 1e-4;
};

/// Penalty-reduced Gaussian focal loss on heatmap logits, normalized by the
/// number of cells whose target is exactly 1 (at least 1).
template <class T>
Var heatmap_focal_loss(Tape<T>& t, Var logits, const Tensor<T>& target, FocalOptions o = {}) {
  const Tensor<T>& lv = t.value(logits);
  require_shape(target.shape(), lv.shape(), "focal target");
  const std::size_t n = lv.size();
  auto dldx = std::make_shared<std::vector<double>>(n, 0.0);
  double num_pos = 0;
  for (std::size_t i = 0; i < n; ++i) num_pos += target[i] == T(1) ? 1.0 : 0.0;
  const double norm = std::max(1.0, num_pos);
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(lv[i])));
    const double p = std::clamp(s, o.clamp, 1.0 - o.clamp);
    const bool inside = s > o.clamp && s < 1.0 - o.clamp;
    double dp;
    if (target[i] == T(1)) {
      loss -= std::pow(1 - p, o.alpha) * std::log(p);
      dp = o.alpha * std::pow(1 - p, o.alpha - 1) * std::log(p) - std::pow(1 - p, o.alpha) / p;
    } else {
      const double w = std::pow(1 - static_cast<double>(target[i]), o.beta);
      loss -= w * std::pow(p, o.alpha) * std::log(1 - p);
      dp = -w * (o.alpha * std::pow(p, o.alpha - 1) * std::log(1 - p) - std::pow(p, o.alpha) / (1 - p));
    }
    (*dldx)[i] = inside ? dp * s * (1 - s) / norm : 0.0;
  }
  return t.record(Tensor<T>::scalar(static_cast<T>(loss / norm)), {logits},
                  [logits, dldx](Tape<T>& tp, const Tensor<T>& g) {
                    Tensor<T>& gl = tp.grad(logits);
                    const double go = g[0];
                    for (std::size_t i = 0; i < dldx->size(); ++i) gl[i] += static_cast<T>(go * (*dldx)[i]);
                  });
}

/// Mean absolute error over the 8 regression channels at masked cells;
/// 0 when the mask is empty.
template <class T>
Var bbox_reg_loss(Tape<T>& t, Var pred, const Tensor<T>& target, const Tensor<T>& mask) {
  const Tensor<T>& pv = t.value(pred);
  require_shape(target.shape(), pv.shape(), "regression target");
  require_shape(mask.shape(), {pv.n(), 1, pv.h(), pv.w()}, "regression mask");
  const int B = pv.n(), C = pv.c(), H = pv.h(), W = pv.w();
  double num_pos = 0;
  for (T m : mask.values()) num_pos += m != T(0) ? 1.0 : 0.0;
  const double denom = num_pos * C;
  double loss = 0;
  if (num_pos > 0) {
    for (int b = 0; b < B; ++b)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          if (mask(b, 0, y, x) == T(0)) continue;
          for (int c = 0; c < C; ++c) loss += std::abs(static_cast<double>(pv(b, c, y, x)) - target(b, c, y, x));
        }
    loss /= denom;
  }
  return t.record(Tensor<T>::scalar(static_cast<T>(loss)), {pred},
                  [pred, target, mask, denom, B, C, H, W](Tape<T>& tp, const Tensor<T>& g) {
                    if (denom == 0) return;
                    const Tensor<T>& pv = tp.value(pred);
                    Tensor<T>& gp = tp.grad(pred);
                    const double go = g[0] / denom;
                    for (int b = 0; b < B; ++b)
                      for (int y = 0; y < H; ++y)
                        for (int x = 0; x < W; ++x) {
                          if (mask(b, 0, y, x) == T(0)) continue;
                          for (int c = 0; c < C; ++c) {
                            const double d = static_cast<double>(pv(b, c, y, x)) - target(b, c, y, x);
                            gp(b, c, y, x) += static_cast<T>(go * ((d > 0) - (d < 0)));
                          }
                        }
                  });
}

struct DetectionLoss {
  Var focal;
  Var regression;
  Var total;  // focal + reg_weight * regression
};

/// The single loss path used by both the main head and the auxiliary branch.
template <class T>
DetectionLoss detection_loss(Tape<T>& t, const HeadOutput& out, const TargetMaps<T>& targets, double reg_weight) {
  DetectionLoss l;
  l.focal = heatmap_focal_loss(t, out.heatmap, targets.heatmap);
  l.regression = bbox_reg_loss(t, out.reg, targets.reg, targets.mask);
  l.total = ops::add(t, l.focal, ops::scale(t, l.regression, static_cast<T>(reg_weight)));
  return l;
}

}  // namespace fusion4ca
