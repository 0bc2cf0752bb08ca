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
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "fusion4ca/core/geometry.hpp"

namespace fusion4ca::eval {

inline constexpr std::array<double, 4> kDistanceThresholds = {0.5, 1.0, 2.0, 4.0};
inline constexpr double kTpThreshold = 2.0;
inline constexpr int kRecallPoints = 101;

/// Predictions and ground truth of one scene; matching never crosses frames.
struct Frame {
  std::vector<Box3D> preds;
  std::vector<Box3D> gts;
};

struct MatchedPair {
  Box3D pred;
  Box3D gt;
};

struct MatchResult {
  std::vector<bool> is_tp;  // per prediction, in descending score order
  std::vector<MatchedPair> pairs;
  int num_gt = 0;
};

/// Greedy matching of class `class_id`: predictions in descending score order
/// (ties by frame, then input order) each take the nearest unmatched
/// ground-truth box of their frame within `dist_thresh`.
inline MatchResult match_class(const std::vector<Frame>& frames, int class_id, double dist_thresh) {
  struct Ref {
    double score;
    std::size_t frame, index;
  };
  std::vector<Ref> preds;
  MatchResult out;
  std::vector<std::vector<bool>> taken(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (std::size_t i = 0; i < frames[f].preds.size(); ++i) {
      if (frames[f].preds[i].class_id == class_id) preds.push_back({frames[f].preds[i].score, f, i});
    }
    taken[f].assign(frames[f].gts.size(), false);
    for (const Box3D& g : frames[f].gts) out.num_gt += g.class_id == class_id;
  }
  std::stable_sort(preds.begin(), preds.end(), [](const Ref& a, const Ref& b) {
    return std::tie(b.score, a.frame, a.index) < std::tie(a.score, b.frame, b.index);
  });
  for (const Ref& r : preds) {
    const Box3D& p = frames[r.frame].preds[r.index];
    const auto& gts = frames[r.frame].gts;
    std::optional<std::size_t> best;
    double best_d = dist_thresh;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (gts[j].class_id != class_id || taken[r.frame][j]) continue;
      const double d = bev_center_distance(p, gts[j]);
      if (d <= best_d && (!best || d < best_d)) {
        best = j;
        best_d = d;
      }
    }
    out.is_tp.push_back(best.has_value());
    if (best) {
      taken[r.frame][*best] = true;
      out.pairs.push_back({p, gts[*best]});
    }
  }
  return out;
}

/// Area under the precision-recall curve, 101-point interpolated. Undefined
/// (nullopt) when there are neither predictions nor ground truth.
inline std::optional<double> average_precision(const MatchResult& m) {
  if (m.num_gt == 0) {
    if (m.is_tp.empty()) return std::nullopt;
    return 0.0;
  }
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (bool hit : m.is_tp) {
    (hit ? tp : fp)++;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / m.num_gt);
  }
  // Precision envelope: max precision at any recall >= r.
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i) precision[i] = std::max(precision[i], precision[i + 1]);
  double sum = 0.0;
  std::size_t k = 0;
  for (int i = 0; i < kRecallPoints; ++i) {
    const double r = static_cast<double>(i) / (kRecallPoints - 1);
    while (k < recall.size() && recall[k] < r - 1e-12) ++k;
    if (k < recall.size()) sum += precision[k];
  }
  return sum / kRecallPoints;
}

inline std::optional<double> match_and_ap(const std::vector<Frame>& frames, int class_id, double dist_thresh) {
  return average_precision(match_class(frames, class_id, dist_thresh));
}

inline std::optional<double> match_and_ap(const std::vector<Box3D>& preds, const std::vector<Box3D>& gts,
                                          int class_id, double dist_thresh) {
  return match_and_ap(std::vector<Frame>{{preds, gts}}, class_id, dist_thresh);
}

struct TpErrors {
  double ate = 1.0;
  double ase = 1.0;
  double aoe = 1.0;
};

/// 1 - IoU of two boxes sharing center and orientation.
inline double scale_error(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double inter = a.cwiseMin(b).prod();
  return 1.0 - inter / (a.prod() + b.prod() - inter);
}

/// Means over matched pairs; an empty set reports 1.0 for all three.
inline TpErrors tp_error_metrics(const std::vector<MatchedPair>& pairs) {
  if (pairs.empty()) return {};
  TpErrors e{0.0, 0.0, 0.0};
  for (const auto& [p, g] : pairs) {
    e.ate += bev_center_distance(p, g);
    e.ase += scale_error(p.size, g.size);
    e.aoe += yaw_difference(p.yaw, g.yaw);
  }
  const double n = static_cast<double>(pairs.size());
  return {e.ate / n, e.ase / n, e.aoe / n};
}

inline constexpr double kAteNormalizer = 4.0;

/// NDS-lite: (3 mAP + sum of max(0, 1 - normalized error)) / 6 with ATE / 4 m,
/// ASE as is and AOE / pi.
inline double composite_score(double map, const TpErrors& e) {
  const double terms = std::max(0.0, 1.0 - e.ate / kAteNormalizer) + std::max(0.0, 1.0 - e.ase) +
                       std::max(0.0, 1.0 - e.aoe / std::numbers::pi);
  return (3.0 * map + terms) / 6.0;
}

struct EvalResult {
  // per_class_ap[c][t] for threshold kDistanceThresholds[t]; nullopt = undefined
  std::vector<std::array<std::optional<double>, kDistanceThresholds.size()>> per_class_ap;
  double map = 0.0;
  TpErrors errors;
  double nds_lite = 0.0;
  int num_tp = 0;
};

/// mAP averages every defined (class, threshold) AP; TP errors pool the 2 m
/// matches of all classes.
inline EvalResult evaluate(const std::vector<Frame>& frames, int n_classes) {
  EvalResult r;
  r.per_class_ap.resize(n_classes);
  double sum = 0.0;
  int count = 0;
  std::vector<MatchedPair> pairs;
  for (int c = 0; c < n_classes; ++c) {
    for (std::size_t t = 0; t < kDistanceThresholds.size(); ++t) {
      const MatchResult m = match_class(frames, c, kDistanceThresholds[t]);
      r.per_class_ap[c][t] = average_precision(m);
      if (r.per_class_ap[c][t]) {
        sum += *r.per_class_ap[c][t];
        ++count;
      }
      if (kDistanceThresholds[t] == kTpThreshold) pairs.insert(pairs.end(), m.pairs.begin(), m.pairs.end());
    }
  }
  r.map = count > 0 ? sum / count : 0.0;
  r.errors = tp_error_metrics(pairs);
  r.num_tp = static_cast<int>(pairs.size());
  r.nds_lite = composite_score(r.map, r.errors);
  return r;
}

}  // namespace fusion4ca::eval
