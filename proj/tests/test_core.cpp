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
#include <numbers>
#include <random>

#include "fusion4ca/core/geometry.hpp"
#include "fusion4ca/core/tensor.hpp"

namespace fusion4ca {
namespace {

CameraModel test_camera() {
  return CameraModel::looking({0.0, 0.0, 1.8}, 0.2, 0.25, 48.0, 64, 96);
}

TEST(ProjectPoints, OpticalAxisPointLandsOnPrincipalPoint) {
  const CameraModel cam = test_camera();
  PointCloud cloud;
  const Eigen::Vector3d world = cam.to_world({0.0, 0.0, 5.0});
  cloud.points.push_back({float(world.x()), float(world.y()), float(world.z()), 0.5f});
  const auto proj = project_points(cloud, cam);
  ASSERT_EQ(proj.size(), 1u);
  EXPECT_NEAR(proj[0].u, cam.cx(), 1e-4);
  EXPECT_NEAR(proj[0].v, cam.cy(), 1e-4);
  EXPECT_NEAR(proj[0].depth, 5.0, 1e-5);
}

TEST(ProjectPoints, PointBehindCameraIsExcluded) {
  const CameraModel cam = test_camera();
  PointCloud cloud;
  const Eigen::Vector3d world = cam.to_world({0.1, 0.1, -1.0});
  cloud.points.push_back({float(world.x()), float(world.y()), float(world.z()), 0.5f});
  EXPECT_TRUE(project_points(cloud, cam).empty());
}

TEST(ProjectPoints, EmptyCloudGivesEmptyList) { EXPECT_TRUE(project_points(PointCloud{}, test_camera()).empty()); }

TEST(ProjectPoints, BackProjectionRecoversWorldPoints) {
  const CameraModel cam = test_camera();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ux(0.0, 20.0), uy(-10.0, 10.0), uz(-1.0, 3.0);
  PointCloud cloud;
  for (int i = 0; i < 2000; ++i) {
    cloud.points.push_back({float(ux(rng)), float(uy(rng)), float(uz(rng)), 0.0f});
  }
  const auto proj = project_points(cloud, cam);
  ASSERT_GT(proj.size(), 100u);
  // Inverse pinhole written out independently: X_c = ((u-cx)/fx * z, (v-cy)/fy * z, z).
  const Eigen::Matrix3d& K = cam.intrinsics;
  for (const auto& p : proj) {
    EXPECT_GE(p.u, 0.0);
    EXPECT_LT(p.u, cam.width);
    EXPECT_GE(p.v, 0.0);
    EXPECT_LT(p.v, cam.height);
    const Eigen::Vector3d xc((p.u - K(0, 2)) / K(0, 0) * p.depth, (p.v - K(1, 2)) / K(1, 1) * p.depth, p.depth);
    const Eigen::Vector3d xw = cam.rotation.transpose() * (xc - cam.translation);
    EXPECT_LT((xw - cloud.xyz(p.index)).norm(), 1e-6);
  }
}

TEST(CameraModel, ValidateRejectsBadRotation) {
  CameraModel cam = test_camera();
  cam.rotation(0, 0) *= 1.01;
  EXPECT_THROW(cam.validate(), GeometryError);
  cam = test_camera();
  cam.intrinsics(0, 2) = 500.0;
  EXPECT_THROW(cam.validate(), GeometryError);
}

Box3D box_at(double x, double y, double z = 0.0) {
  Box3D b;
  b.center = {x, y, z};
  return b;
}

TEST(BevCenterDistance, IdenticalBoxesAreZero) { EXPECT_EQ(bev_center_distance(box_at(1, 2), box_at(1, 2)), 0.0); }

TEST(BevCenterDistance, ThreeFourFive) { EXPECT_DOUBLE_EQ(bev_center_distance(box_at(0, 0, 1), box_at(3, 4, 9)), 5.0); }

TEST(BevCenterDistance, SymmetricAndTriangleInequality) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const Box3D a = box_at(u(rng), u(rng), u(rng)), b = box_at(u(rng), u(rng), u(rng)), c = box_at(u(rng), u(rng));
    EXPECT_EQ(bev_center_distance(a, b), bev_center_distance(b, a));
    EXPECT_GE(bev_center_distance(a, b), 0.0);
    EXPECT_LE(bev_center_distance(a, c), bev_center_distance(a, b) + bev_center_distance(b, c) + 1e-9);
  }
}

TEST(WorldToCell, OriginCornerIsCellZero) {
  const BEVGridSpec g;
  const auto c = world_to_cell({g.x_min, g.y_min}, g);
  ASSERT_TRUE(c);
  EXPECT_EQ(*c, (Cell{0, 0}));
}

TEST(WorldToCell, MaxCornerIsOutOfGrid) {
  const BEVGridSpec g;
  EXPECT_FALSE(world_to_cell({g.x_max, g.y_max}, g));
  EXPECT_FALSE(world_to_cell({g.x_max, 0.0}, g));
  EXPECT_FALSE(world_to_cell({1.0, g.y_max}, g));
  EXPECT_FALSE(world_to_cell({g.x_min - 1e-9, 0.0}, g));
}

TEST(WorldToCell, CenterReconstructionWithinHalfCell) {
  const BEVGridSpec g;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ux(g.x_min, g.x_max), uy(g.y_min, g.y_max);
  for (int i = 0; i < 10000; ++i) {
    const Eigen::Vector2d p(ux(rng), uy(rng));
    const auto c = world_to_cell(p, g);
    ASSERT_TRUE(c);
    ASSERT_GE(c->row, 0);
    ASSERT_LT(c->row, g.ny());
    ASSERT_GE(c->col, 0);
    ASSERT_LT(c->col, g.nx());
    const Eigen::Vector2d center = g.cell_center(*c);
    EXPECT_LT(std::abs(center.x() - p.x()), g.cell_size / 2 + 1e-9);
    EXPECT_LT(std::abs(center.y() - p.y()), g.cell_size / 2 + 1e-9);
  }
}

TEST(WorldToCell, EveryCellIsHitByItsOwnCenter) {
  const BEVGridSpec g;
  for (int r = 0; r < g.ny(); ++r)
    for (int c = 0; c < g.nx(); ++c) {
      const auto cell = world_to_cell(g.cell_center({r, c}), g);
      ASSERT_TRUE(cell);
      EXPECT_EQ(*cell, (Cell{r, c}));
    }
}

TEST(BEVGridSpec, ValidateRejectsIndivisibleOrTinyGrids) {
  BEVGridSpec g;
  g.cell_size = 0.3;
  EXPECT_THROW(g.validate(), GeometryError);
  g.cell_size = 4.0;
  EXPECT_THROW(g.validate(), GeometryError);
  EXPECT_NO_THROW(BEVGridSpec{}.validate());
}

TEST(Angles, WrapAndDifference) {
  EXPECT_NEAR(wrap_angle(3 * std::numbers::pi), std::numbers::pi, 1e-12);
  EXPECT_NEAR(wrap_angle(-std::numbers::pi), std::numbers::pi, 1e-12);
  EXPECT_NEAR(yaw_difference(0.1, -0.1 + 2 * std::numbers::pi), 0.2, 1e-12);
  EXPECT_NEAR(yaw_difference(std::numbers::pi / 2, 0.0), std::numbers::pi / 2, 1e-15);
}

TEST(Box3D, ValidateEnforcesInvariants) {
  Box3D b;
  EXPECT_NO_THROW(b.validate());
  b.size.y() = 0.0;
  EXPECT_THROW(b.validate(), GeometryError);
  b = Box3D{};
  b.yaw = -std::numbers::pi;
  EXPECT_THROW(b.validate(), GeometryError);
  b = Box3D{};
  b.score = 1.5;
  EXPECT_THROW(b.validate(), GeometryError);
}

TEST(Tensor, ShapeChecks) {
  EXPECT_THROW(Tensor<float>({1, 2, 3, 4}, std::vector<float>(5)), ShapeError);
  Tensor<float> t({1, 2, 3, 4}, 1.5f);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_FLOAT_EQ(t.sum(), 36.0f);
  t(0, 1, 2, 3) = NAN;
  EXPECT_FALSE(t.all_finite());
}

}  // namespace
}  // namespace fusion4ca
