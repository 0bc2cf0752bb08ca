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
#include <filesystem>
#include <fstream>
#include <numbers>
#include <unistd.h>

#include "fusion4ca/synthdata/io.hpp"
#include "fusion4ca/synthdata/scene.hpp"

namespace fusion4ca::synth {
namespace {

namespace fs = std::filesystem;

SceneConfig small_config(std::uint64_t seed, int meteors = 3, int platforms = 2) {
  SceneConfig cfg;
  cfg.seed = seed;
  cfg.n_meteors = meteors;
  cfg.n_platforms = platforms;
  return cfg;
}

bool same_box(const Box3D& a, const Box3D& b) {
  return a.center == b.center && a.size == b.size && a.yaw == b.yaw && a.class_id == b.class_id && a.score == b.score;
}

bool same_scene(const Scene& a, const Scene& b) {
  if (a.scene_id != b.scene_id || a.lighting != b.lighting || a.cloud.points != b.cloud.points) return false;
  if (a.boxes.size() != b.boxes.size() || a.cameras.size() != b.cameras.size()) return false;
  for (std::size_t i = 0; i < a.boxes.size(); ++i) {
    if (!same_box(a.boxes[i], b.boxes[i])) return false;
  }
  for (std::size_t k = 0; k < a.cameras.size(); ++k) {
    const auto &ca = a.cameras[k], &cb = b.cameras[k];
    if (!(ca.model.intrinsics == cb.model.intrinsics) || !(ca.model.rotation == cb.model.rotation) ||
        !(ca.model.translation == cb.model.translation) || ca.model.height != cb.model.height ||
        ca.model.width != cb.model.width || !(ca.image == cb.image) || ca.depth != cb.depth) {
      return false;
    }
  }
  return true;
}

SceneGeometry flat_world() {
  SceneGeometry g;
  g.terrain.base = 0.0;
  return g;
}

TEST(Raycast, DownwardRayHitsFlatGroundAtSensorHeight) {
  const SceneGeometry g = flat_world();
  auto hit = raycast(g, {0.0, 0.0, 2.0}, {0.0, 0.0, -1.0}, 25.0);
  ASSERT_TRUE(hit);
  EXPECT_NEAR(hit->range, 2.0, 1e-9);
  EXPECT_EQ(hit->surface, -1);

  LidarSpec spec;
  spec.n_channels = 1;
  spec.elevation_min_deg = spec.elevation_max_deg = -90.0;
  spec.azimuth_min_deg = 0.0;
  spec.azimuth_max_deg = 0.5;
  const PointCloud cloud = sample_lidar(g, spec);
  ASSERT_EQ(cloud.size(), 1u);
  EXPECT_NEAR((cloud.xyz(0) - spec.origin).norm(), 2.0, 1e-6);
  EXPECT_FLOAT_EQ(cloud.points[0][3], 0.5f);
}

TEST(Raycast, MissEmitsNoPoint) {
  const SceneGeometry g = flat_world();
  EXPECT_FALSE(raycast(g, {0.0, 0.0, 2.0}, Eigen::Vector3d(1.0, 0.0, 0.2).normalized(), 25.0));
  LidarSpec spec;
  spec.n_channels = 1;
  spec.elevation_min_deg = spec.elevation_max_deg = 10.0;
  EXPECT_TRUE(sample_lidar(g, spec).empty());
  // Ground beyond the maximum range is a miss too.
  EXPECT_FALSE(raycast(g, {0.0, 0.0, 2.0}, Eigen::Vector3d(1.0, 0.0, -0.05).normalized(), 25.0));
}

TEST(Raycast, CentralRayHitsUnitSphereFiveMetresAheadAtFour) {
  SceneGeometry g = flat_world();
  Ellipsoid sphere;
  sphere.center = {5.0, 0.0, 2.0};
  sphere.semi_axes = {1.0, 1.0, 1.0};
  g.ellipsoids.push_back(sphere);
  auto hit = raycast(g, {0.0, 0.0, 2.0}, {1.0, 0.0, 0.0}, 25.0);
  ASSERT_TRUE(hit);
  // |o + t d - c| = r along the axis: t = 5 - 1.
  EXPECT_NEAR(hit->range, 4.0, 1e-9);
  EXPECT_EQ(hit->surface, 0);
  EXPECT_NEAR(hit->normal.x(), -1.0, 1e-9);
}

TEST(Raycast, CuboidFaceHitAndNormal) {
  SceneGeometry g = flat_world();
  Cuboid box;
  box.center = {6.0, 0.0, 2.0};
  box.size = {2.0, 2.0, 2.0};
  box.yaw = 0.3;
  g.cuboids.push_back(box);
  auto hit = raycast(g, {0.0, 0.0, 2.0}, {1.0, 0.0, 0.0}, 25.0);
  ASSERT_TRUE(hit);
  EXPECT_LT(box.surface_distance(hit->point), 1e-9);
  EXPECT_LT(hit->normal.x(), 0.0);
}

TEST(Raycast, TerrainHitLiesOnSurface) {
  SceneGeometry g;
  Rng rng = make_rng(3, "terrain-test");
  g.terrain.waves.push_back({0.1, 0.8, 0.3, 0.2});
  g.terrain.craters.push_back({6.0, 0.5, 2.0, 0.3});
  for (int i = 0; i < 500; ++i) {
    const double az = uniform(rng, -1.5, 1.5), el = uniform(rng, -1.2, -0.08);
    const Eigen::Vector3d d(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    auto hit = raycast(g, {0.0, 0.0, 2.0}, d, 25.0);
    if (!hit) continue;
    EXPECT_LT(std::abs(hit->point.z() - g.terrain.height(hit->point.x(), hit->point.y())), 1e-6);
  }
}

TEST(GenerateScene, EmptyConfigGivesTerrainOnlyScene) {
  const Scene s = generate_scene(small_config(4, 0, 0));
  EXPECT_TRUE(s.boxes.empty());
  EXPECT_FALSE(s.cloud.empty());
  ASSERT_EQ(s.cameras.size(), 1u);
  for (float d : s.cameras[0].depth) EXPECT_GE(d, 0.0f);
}

TEST(GenerateScene, SameSeedIsBitIdentical) {
  const Scene a = generate_scene(small_config(11));
  const Scene b = generate_scene(small_config(11));
  EXPECT_TRUE(same_scene(a, b));
  const Scene c = generate_scene(small_config(12));
  EXPECT_FALSE(same_scene(a, c));
}

TEST(GenerateScene, EveryBoxHasSensorSupport) {
  SceneConfig cfg = small_config(7, 3, 1);
  const GeneratedScene g = generate_scene_detailed(cfg);
  ASSERT_EQ(g.scene.boxes.size(), 4u);
  for (std::size_t k = 0; k < g.scene.boxes.size(); ++k) {
    int lidar = 0;
    for (int s : g.lidar_surfaces) lidar += s == static_cast<int>(k);
    // Re-render without noise to count pixels of this object.
    int pixels = 0;
    for (const auto& view : g.scene.cameras) {
      const Render r = render_camera(g.geometry, view.model, g.scene.lighting, cfg.lidar.max_range);
      for (int s : r.surfaces) pixels += s == static_cast<int>(k);
    }
    EXPECT_TRUE(lidar >= 1 || pixels >= 16) << "box " << k;
  }
}

TEST(GenerateScene, ObjectsDoNotInterpenetrate) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Scene s = generate_scene(small_config(seed, 4, 3));
    for (std::size_t i = 0; i < s.boxes.size(); ++i)
      for (std::size_t j = i + 1; j < s.boxes.size(); ++j) {
        // Monte-Carlo footprint overlap as a fraction of the smaller footprint.
        const Box3D &a = s.boxes[i], &b = s.boxes[j];
        auto inside = [](const Box3D& box, const Eigen::Vector2d& p) {
          const Eigen::Vector2d d = p - box.center.head<2>();
          const double c = std::cos(box.yaw), sn = std::sin(box.yaw);
          return std::abs(c * d.x() + sn * d.y()) <= box.size.x() / 2 &&
                 std::abs(-sn * d.x() + c * d.y()) <= box.size.y() / 2;
        };
        const Box3D& small = a.size.x() * a.size.y() < b.size.x() * b.size.y() ? a : b;
        const Box3D& other = &small == &a ? b : a;
        int in_both = 0, in_small = 0;
        for (int u = 0; u < 40; ++u)
          for (int v = 0; v < 40; ++v) {
            const double lx = ((u + 0.5) / 40 - 0.5) * small.size.x(), ly = ((v + 0.5) / 40 - 0.5) * small.size.y();
            const Eigen::Vector2d p = small.center.head<2>() +
                                      Eigen::Vector2d(std::cos(small.yaw) * lx - std::sin(small.yaw) * ly,
                                                      std::sin(small.yaw) * lx + std::cos(small.yaw) * ly);
            ++in_small;
            in_both += inside(other, p);
          }
        EXPECT_LT(double(in_both) / in_small, 0.10);
      }
  }
}

TEST(GenerateScene, AppearanceAndRanges) {
  const GeneratedScene g = generate_scene_detailed(small_config(5));
  for (const auto& e : g.geometry.ellipsoids) {
    EXPECT_GE(e.albedo, 0.45);
    EXPECT_LE(e.albedo, 0.55);
  }
  for (const auto& c : g.geometry.cuboids) EXPECT_GT(std::abs(c.albedo - g.geometry.terrain.albedo), 0.2);
  for (const auto& b : g.scene.boxes) {
    EXPECT_NO_THROW(b.validate());
    EXPECT_TRUE(b.class_id == 0 || b.class_id == 1);
  }
  for (const auto& view : g.scene.cameras)
    for (float d : view.depth) EXPECT_TRUE(d == 0.0f || (d > 0.0f && d <= 25.0f));
}

TEST(GenerateScene, TooDenseConfigFails) {
  SceneConfig cfg = small_config(3, 60, 40);
  EXPECT_THROW(generate_scene(cfg), SceneGenerationError);
}

TEST(GenerateScene, InvalidConfigRejected) {
  SceneConfig cfg = small_config(3);
  cfg.n_meteors = -1;
  EXPECT_THROW(generate_scene(cfg), std::invalid_argument);
  cfg = small_config(3);
  cfg.meteor_size = {1.0, 0.5};
  EXPECT_THROW(generate_scene(cfg), std::invalid_argument);
  cfg = small_config(3);
  cfg.lidar.max_range = 0.0;
  EXPECT_THROW(generate_scene(cfg), std::invalid_argument);
}

TEST(SampleLidar, PointsLieOnAnalyticSurfaces) {
  const GeneratedScene g = generate_scene_detailed(small_config(21));
  const auto& geo = g.geometry;
  ASSERT_EQ(g.lidar_surfaces.size(), g.scene.cloud.size());
  const int n_ell = static_cast<int>(geo.ellipsoids.size());
  for (std::size_t i = 0; i < g.scene.cloud.size(); ++i) {
    const Eigen::Vector3d p = g.scene.cloud.xyz(i);
    const int s = g.lidar_surfaces[i];
    double residual;
    if (s < 0) {
      residual = std::abs(p.z() - geo.terrain.height(p.x(), p.y()));
    } else if (s < n_ell) {
      // Distance along the radial direction in the normalized frame, rescaled.
      const Ellipsoid& e = geo.ellipsoids[s];
      residual = std::abs(std::sqrt(e.implicit(p) + 1.0) - 1.0) * e.semi_axes.maxCoeff();
    } else {
      residual = geo.cuboids[s - n_ell].surface_distance(p);
    }
    EXPECT_LT(residual, 1e-3) << "point " << i << " surface " << s;
  }
}

double bilinear_inverse_depth(const CameraView& view, double u, double v, bool& ok) {
  // Pixel centers sit at integer + 0.5.
  const double x = u - 0.5, y = v - 0.5;
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  double acc = 0.0;
  ok = true;
  for (int dy = 0; dy <= 1; ++dy)
    for (int dx = 0; dx <= 1; ++dx) {
      const int xx = std::clamp(x0 + dx, 0, view.model.width - 1), yy = std::clamp(y0 + dy, 0, view.model.height - 1);
      const float d = view.depth[static_cast<std::size_t>(yy) * view.model.width + xx];
      if (d <= 0.0f) ok = false;
      acc += (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (d > 0.0f ? 1.0 / d : 0.0);
    }
  return ok ? 1.0 / acc : 0.0;
}

TEST(RenderCamera, DepthAgreesWithLidarProjections) {
  for (std::uint64_t seed : {2u, 9u}) {
    const Scene s = generate_scene(small_config(seed));
    for (const auto& view : s.cameras) {
      int agree = 0, total = 0;
      for (const auto& p : project_points(s.cloud, view.model)) {
        bool ok = false;
        const double d = bilinear_inverse_depth(view, p.u, p.v, ok);
        ++total;
        agree += ok && std::abs(d - p.depth) < 0.1;
      }
      ASSERT_GT(total, 100);
      EXPECT_GE(double(agree) / total, 0.95) << "seed " << seed;
    }
  }
}

TEST(RenderCamera, MissPixelsAreSkyWithZeroDepth) {
  const SceneGeometry g = flat_world();
  CameraModel up = CameraModel::looking({0.0, 0.0, 1.8}, 0.0, -0.9, 48.0, 16, 24);
  const Render r = render_camera(g, up, Lighting::kBright, 25.0, 0.01, nullptr);
  EXPECT_EQ(r.depth[0], 0.0f);
  EXPECT_EQ(r.rgb[0], kSkyValue);
  EXPECT_EQ(r.surfaces[0], -2);
}

TEST(RenderCamera, DimLightingScalesRadianceByGain) {
  const GeneratedScene g = generate_scene_detailed(small_config(8));
  const CameraModel& cam = g.scene.cameras[0].model;
  const Render bright = render_camera(g.geometry, cam, Lighting::kBright, 25.0);
  const Render dim = render_camera(g.geometry, cam, Lighting::kDim, 25.0);
  double sb = 0, sd = 0;
  for (std::size_t i = 0; i < bright.rgb.size(); ++i) {
    sb += bright.rgb[i];
    sd += dim.rgb[i];
  }
  ASSERT_GT(sb, 0.0);
  EXPECT_NEAR(sd / sb, 0.4, 0.05);
}

class SceneIo : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("fusion4ca_io_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(SceneIo, RoundTripIsBitIdentical) {
  SceneConfig cfg = small_config(1);
  cfg.n_cameras = 2;
  cfg.lighting = Lighting::kDim;
  const Scene s = generate_scene(cfg, "scene_x");
  write_scene(s, dir_);
  const Scene r = read_scene(dir_);
  EXPECT_TRUE(same_scene(s, r));
}

TEST_F(SceneIo, TruncatedPointsFileIsCorrupt) {
  write_scene(generate_scene(small_config(1)), dir_);
  const auto path = dir_ / "points.f32";
  fs::resize_file(path, fs::file_size(path) - 3);
  try {
    read_scene(dir_);
    FAIL() << "expected an error";
  } catch (const SceneIoError& e) {
    EXPECT_NE(std::string(e.what()).find("points.f32"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("corrupt"), std::string::npos);
  }
}

TEST_F(SceneIo, UnknownFormatVersionIsRejected) {
  write_scene(generate_scene(small_config(1)), dir_);
  auto meta = nlohmann::json::parse(io::read_file(dir_ / "meta.json"));
  meta["format_version"] = 99;
  io::write_file(dir_ / "meta.json", meta.dump());
  try {
    read_scene(dir_);
    FAIL() << "expected an error";
  } catch (const SceneIoError& e) {
    EXPECT_NE(std::string(e.what()).find("format_version"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("meta.json"), std::string::npos);
  }
}

TEST_F(SceneIo, MissingImageNamesTheFile) {
  write_scene(generate_scene(small_config(1)), dir_);
  fs::remove(dir_ / "image_0.ppm");
  try {
    read_scene(dir_);
    FAIL() << "expected an error";
  } catch (const SceneIoError& e) {
    EXPECT_NE(std::string(e.what()).find("image_0.ppm"), std::string::npos);
  }
}

}  // namespace
}  // namespace fusion4ca::synth
