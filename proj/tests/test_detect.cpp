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

#include <gtest/gtest.h>

#include <cmath>

#include "fusion4ca/autograd/gradcheck.hpp"
#include "fusion4ca/detect/head.hpp"
#include "fusion4ca/detect/losses.hpp"

namespace fusion4ca {
namespace {

BEVGridSpec grid() { return BEVGridSpec{0.0, 16.0, -8.0, 8.0, 0.5, 8}; }

Box3D make_box(double x, double y, int cls = 0, double l = 1.6, double w = 1.2, double yaw = 0.3) {
  Box3D b;
  b.center = {x, y, 0.4};
  b.size = {l, w, 0.8};
  b.yaw = yaw;
  b.class_id = cls;
  return b;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double scalar_loss(const std::function<Var(Tape<double>&)>& f) {
  Tape<double> t;
  return t.value(f(t)).item();
}

// ---------------------------------------------------------------- targets

TEST(BuildTargets, NoBoxesGiveEmptyTargets) {
  const auto m = build_targets<double>(std::vector<Box3D>{}, grid(), 2);
  EXPECT_EQ(m.heatmap.shape(), (Shape{1, 2, 32, 32}));
  EXPECT_EQ(m.heatmap.sum(), 0.0);
  EXPECT_EQ(m.mask.sum(), 0.0);
  EXPECT_EQ(m.num_positive, 0);
}

TEST(BuildTargets, BoxOnCellCenterHasUnitPeakAndOnePositive) {
  const BEVGridSpec g = grid();
  const Eigen::Vector2d c = g.cell_center({10, 6});
  const auto m = build_targets<double>({make_box(c.x(), c.y(), 1)}, g, 2);
  EXPECT_EQ(m.heatmap(0, 1, 10, 6), 1.0);
  EXPECT_EQ(m.mask(0, 0, 10, 6), 1.0);
  EXPECT_EQ(m.mask.sum(), 1.0);
  EXPECT_EQ(m.num_positive, 1);
  for (double v : m.heatmap.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(BuildTargets, OverlappingSameClassGaussiansCombineByMax) {
  const BEVGridSpec g = grid();
  const std::vector<Box3D> boxes = {make_box(5.1, 0.2, 0, 3.0, 2.5), make_box(6.4, 0.9, 0, 2.5, 3.0)};
  const auto m = build_targets<double>(boxes, g, 2);
  for (int y = 0; y < g.ny(); ++y)
    for (int x = 0; x < g.nx(); ++x) {
      double expected = 0.0;
      for (const Box3D& b : boxes) {
        const Cell c = *world_to_cell(b.center.head<2>(), g);
        const int r = heatmap_radius(b, g);
        const int dy = y - c.row, dx = x - c.col;
        if (std::abs(dy) > r || std::abs(dx) > r) continue;
        const double sigma = (2.0 * r + 1.0) / 6.0;
        expected = std::max(expected, std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)));
      }
      EXPECT_NEAR(m.heatmap(0, 0, y, x), expected, 1e-15) << y << "," << x;
      EXPECT_EQ(m.heatmap(0, 1, y, x), 0.0);
    }
  EXPECT_EQ(m.num_positive, 2);
}

TEST(BuildTargets, OutOfGridBoxesAreSkippedAndCounted) {
  const auto m = build_targets<double>({make_box(-3.0, 0.0), make_box(4.0, 12.0), make_box(4.0, 1.0)}, grid(), 2);
  EXPECT_EQ(m.skipped, 2);
  EXPECT_EQ(m.num_positive, 1);
}

// ---------------------------------------------------------------- focal loss

TEST(FocalLoss, SingleCellAtHalfProbability) {
  Tensor<double> target({1, 1, 1, 1}, 1.0);
  const double loss = scalar_loss([&](Tape<double>& t) {
    return heatmap_focal_loss(t, t.constant(Tensor<double>({1, 1, 1, 1}, 0.0)), target);
  });
  const double expected = -std::pow(1.0 - 0.5, 2) * std::log(0.5);
  EXPECT_NEAR(loss, expected, 1e-12);
  EXPECT_NEAR(loss, 0.1733, 1e-4);
}

TEST(FocalLoss, NearPerfectPredictionIsTiny) {
  const auto m = build_targets<double>({make_box(4.2, -2.1), make_box(10.3, 3.3, 1)}, grid(), 2);
  Tensor<double> logits(m.heatmap.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = m.heatmap[i] == 1.0 ? logit(1 - 1e-4) : logit(1e-4);
  const double loss = scalar_loss([&](Tape<double>& t) { return heatmap_focal_loss(t, t.constant(logits), m.heatmap); });
  EXPECT_GE(loss, 0.0);
  EXPECT_LT(loss, 1e-3);
}

TEST(FocalLoss, NonNegativeOnRandomLogits) {
  const auto m = build_targets<double>({make_box(4.2, -2.1)}, grid(), 2);
  Rng rng = make_rng(1, "focal");
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<double> logits(m.heatmap.shape());
    for (auto& v : logits.values()) v = normal(rng, 0.0, 3.0);
    EXPECT_GT(scalar_loss([&](Tape<double>& t) { return heatmap_focal_loss(t, t.constant(logits), m.heatmap); }), 0.0);
  }
}

TEST(FocalLoss, GradientMatchesFiniteDifferences) {
  const BEVGridSpec g{0.0, 4.0, -2.0, 2.0, 0.5, 4};
  const auto m = build_targets<double>({make_box(1.3, -0.6, 0, 1.5, 1.0), make_box(2.9, 0.7, 1)}, g, 2);
  Tensor<double> x(m.heatmap.shape());
  Rng rng = make_rng(2, "focal-x");
  for (auto& v : x.values()) v = uniform(rng, -2.0, 2.0);
  ParamStore<double> store;
  const auto rep = check_gradients("focal", store, {x}, [&](Tape<double>& t, auto& v) {
    return heatmap_focal_loss(t, v[0], m.heatmap);
  }, GradCheckOptions{.max_entries = 1000});
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
}

// ---------------------------------------------------------------- regression loss

TEST(RegLoss, ExactPredictionAndEmptyMaskAreZero) {
  const auto m = build_targets<double>({make_box(4.2, -2.1)}, grid(), 2);
  EXPECT_EQ(scalar_loss([&](Tape<double>& t) { return bbox_reg_loss(t, t.constant(m.reg), m.reg, m.mask); }), 0.0);
  Tensor<double> noise(m.reg.shape(), 3.0);
  EXPECT_EQ(scalar_loss([&](Tape<double>& t) {
              return bbox_reg_loss(t, t.constant(noise), m.reg, Tensor<double>(m.mask.shape()));
            }),
            0.0);
}

TEST(RegLoss, UnitErrorInOneChannelIsOneEighth) {
  const auto m = build_targets<double>({make_box(4.2, -2.1)}, grid(), 2);
  Tensor<double> pred = m.reg;
  const Cell c = *world_to_cell({4.2, -2.1}, grid());
  pred(0, 0, c.row, c.col) += 1.0;
  EXPECT_DOUBLE_EQ(scalar_loss([&](Tape<double>& t) { return bbox_reg_loss(t, t.constant(pred), m.reg, m.mask); }),
                   1.0 / 8.0);
}

TEST(RegLoss, GradientMatchesFiniteDifferences) {
  const BEVGridSpec g{0.0, 4.0, -2.0, 2.0, 0.5, 4};
  const auto m = build_targets<double>({make_box(1.3, -0.6), make_box(2.9, 0.7, 1)}, g, 2);
  Tensor<double> x(m.reg.shape());
  Rng rng = make_rng(3, "reg-x");
  for (auto& v : x.values()) v = normal(rng);
  ParamStore<double> store;
  const auto rep = check_gradients("reg", store, {x}, [&](Tape<double>& t, auto& v) {
    return bbox_reg_loss(t, v[0], m.reg, m.mask);
  }, GradCheckOptions{.max_entries = 1000});
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
}

// ---------------------------------------------------------------- decode

TEST(Decode, LowScoresBelowThresholdGiveNothing) {
  Tensor<double> heat({1, 2, 32, 32}, -10.0), reg({1, 8, 32, 32});
  EXPECT_TRUE(decode_detections(heat, reg, grid(), 32, 0.1).empty());
}

TEST(Decode, SharpPeakWithExactRegressionRecoversTheBox) {
  const Box3D gt = make_box(7.37, -2.81, 1, 1.9, 1.3, -2.2);
  const auto m = build_targets<double>({gt}, grid(), 2);
  Tensor<double> heat(m.heatmap.shape(), -10.0);
  const Cell c = *world_to_cell(gt.center.head<2>(), grid());
  heat(0, 1, c.row, c.col) = 10.0;
  const auto out = decode_detections(heat, m.reg, grid(), 32, 0.1);
  ASSERT_EQ(out.size(), 1u);
  const Box3D& b = out[0];
  EXPECT_EQ(b.class_id, 1);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(b.center[k], gt.center[k], 1e-4);
    EXPECT_NEAR(b.size[k], gt.size[k], 1e-4);
  }
  EXPECT_NEAR(b.yaw, gt.yaw, 1e-4);
  EXPECT_NEAR(b.score, 1.0 / (1.0 + std::exp(-10.0)), 1e-12);
}

TEST(Decode, EqualScorePeaksFollowRowColClassOrder) {
  Tensor<double> heat({1, 2, 32, 32}, -10.0), reg({1, 8, 32, 32});
  heat(0, 1, 5, 9) = 2.0;
  heat(0, 0, 5, 9) = 2.0;
  heat(0, 0, 5, 3) = 2.0;
  heat(0, 1, 2, 20) = 2.0;
  const auto out = decode_detections(heat, reg, grid(), 32, 0.1);
  ASSERT_EQ(out.size(), 4u);
  const double cs = grid().cell_size;
  EXPECT_EQ(out[0].center.y(), -8.0 + 2 * cs);  // row 2 first
  EXPECT_EQ(out[1].center.x(), 3 * cs);          // row 5, col 3
  EXPECT_EQ(out[2].class_id, 0);                 // row 5, col 9, class 0 before 1
  EXPECT_EQ(out[3].class_id, 1);
}

TEST(Decode, EncodeDecodeRoundTripRecoversEveryBox) {
  const BEVGridSpec g = grid();
  const std::vector<Box3D> gts = {make_box(2.3, -5.1, 0), make_box(7.9, 0.4, 1, 2.4, 1.7, 1.0),
                                  make_box(12.6, 4.4, 0, 1.1, 0.9, -0.7), make_box(13.2, -6.2, 1)};
  const auto m = build_targets<double>(gts, g, 2);
  Tensor<double> heat(m.heatmap.shape());
  for (std::size_t i = 0; i < heat.size(); ++i) heat[i] = logit(std::clamp(m.heatmap[i], 1e-6, 1.0 - 1e-6));
  const auto out = decode_detections(heat, m.reg, g, 32, 0.5);
  ASSERT_EQ(out.size(), gts.size());
  for (const Box3D& gt : gts) {
    double best = INFINITY;
    for (const Box3D& b : out) {
      if (b.class_id == gt.class_id) best = std::min(best, bev_center_distance(b, gt));
    }
    EXPECT_LT(best, g.cell_size / 2);
  }
}

TEST(Decode, TopKLimitsOutput) {
  Tensor<double> heat({1, 1, 32, 32}, -10.0), reg({1, 8, 32, 32});
  for (int i = 0; i < 10; ++i) heat(0, 0, 3 * i, 3 * i) = 1.0 + i;
  const auto out = decode_detections(heat, reg, grid(), 4, 0.1);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_GT(out[0].score, out[3].score);
}

// ---------------------------------------------------------------- head

TEST(Head, OutputShapesAndPriorBias) {
  ParamStore<float> store;
  const HeadParams h = make_head(store, LeafSpec{"head", "head", true, 1}, 8, 2);
  Tape<float> t(&store, false);
  const HeadOutput o = head_forward(t, h, t.constant(Tensor<float>({2, 8, 32, 32})));
  EXPECT_EQ(t.shape(o.heatmap), (Shape{2, 2, 32, 32}));
  EXPECT_EQ(t.shape(o.reg), (Shape{2, 8, 32, 32}));
  for (float v : store[h.heatmap.bias].value.values()) EXPECT_FLOAT_EQ(v, float(kHeatmapPriorBias));
}

}  // namespace
}  // namespace fusion4ca
