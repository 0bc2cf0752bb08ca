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

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "fusion4ca/core/geometry.hpp"
#include "fusion4ca/core/random.hpp"
#include "fusion4ca/synthdata/raycast.hpp"

namespace fusion4ca::synth {

enum class ClassId : int { kMeteor = 0, kPlatform = 1 };
inline constexpr int kNumClasses = 2;
inline constexpr const char* kClassNames[kNumClasses] = {"Meteor", "Platform"};

enum class Lighting { kBright, kDim };

inline double lighting_gain(Lighting l) { return l == Lighting::kBright ? 1.0 : 0.4; }
inline const char* to_string(Lighting l) { return l == Lighting::kBright ? "bright" : "dim"; }
inline Lighting lighting_from_string(const std::string& s) {
  if (s == "bright") return Lighting::kBright;
  if (s == "dim") return Lighting::kDim;
  throw std::invalid_argument("unknown lighting '" + s + "'");
}

struct LidarSpec {
  Eigen::Vector3d origin{0.0, 0.0, 2.0};
  int n_channels = 32;
  double horizontal_resolution_deg = 0.5;
  double azimuth_min_deg = -90.0;
  double azimuth_max_deg = 90.0;
  double elevation_min_deg = -30.0;
  double elevation_max_deg = 4.0;
  double max_range = 20.0;
};

struct SizeRange {
  double min = 1.0;
  double max = 1.0;
};

struct SceneConfig {
  std::uint64_t seed = 0;
  int n_meteors = 3;
  int n_platforms = 2;
  /// Object centers are drawn from x in [placement_x_min, placement_x_max]
  /// and |y| <= placement_half_width, inside the forward camera wedge.
  double placement_x_min = 3.0;
  double placement_x_max = 14.5;
  double placement_half_width = 6.5;
  SizeRange meteor_size{0.6, 1.4};
  SizeRange platform_size{1.4, 2.4};
  int n_cameras = 1;
  int image_height = 64;
  int image_width = 96;
  double focal = 48.0;
  LidarSpec lidar;
  Lighting lighting = Lighting::kBright;
  double pixel_noise = 0.01;

  void validate() const {
    if (n_meteors < 0 || n_platforms < 0) throw std::invalid_argument("object counts must be >= 0");
    for (const SizeRange& r : {meteor_size, platform_size}) {
      if (!(r.min > 0.0 && r.min <= r.max)) throw std::invalid_argument("size ranges must be positive with min <= max");
    }
    if (!(lidar.max_range > 0.0)) throw std::invalid_argument("lidar max range must be positive");
    if (lidar.n_channels < 1 || !(lidar.horizontal_resolution_deg > 0.0)) {
      throw std::invalid_argument("lidar lattice must be non-empty");
    }
    if (n_cameras != 1 && n_cameras != 2) throw std::invalid_argument("n_cameras must be 1 or 2");
    if (image_height <= 0 || image_width <= 0) throw std::invalid_argument("image size must be positive");
  }
};

/// 8-bit RGB, row-major H x W x 3.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;

  float at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c] / 255.0f; }
  friend bool operator==(const Image&, const Image&) = default;
};

struct CameraView {
  CameraModel model;
  Image image;
  std::vector<float> depth;  // H x W, meters, 0 = miss
};

struct Scene {
  std::string scene_id;
  Lighting lighting = Lighting::kBright;
  PointCloud cloud;
  std::vector<CameraView> cameras;
  std::vector<Box3D> boxes;
};

/// A scene plus the analytic geometry it was rendered from (not persisted).
struct GeneratedScene {
  Scene scene;
  SceneGeometry geometry;
  std::vector<int> lidar_surfaces;  // per point: surface id of the hit
};

class SceneGenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Eigen::Vector3d sun_direction() {
  const double el = 40.0 * std::numbers::pi / 180.0, az = 30.0 * std::numbers::pi / 180.0;
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

inline constexpr double kSkyValue = 0.0;

/// Forward-facing camera rig: one camera straight ahead, or two yawed +-30 deg.
inline std::vector<CameraModel> camera_rig(const SceneConfig& cfg) {
  std::vector<CameraModel> cams;
  const Eigen::Vector3d pos(0.0, 0.0, 3.0);
  const double pitch = 22.0 * std::numbers::pi / 180.0;
  if (cfg.n_cameras == 1) {
    cams.push_back(CameraModel::looking(pos, 0.0, pitch, cfg.focal, cfg.image_height, cfg.image_width));
  } else {
    for (double yaw_deg : {30.0, -30.0}) {
      cams.push_back(CameraModel::looking(pos, yaw_deg * std::numbers::pi / 180.0, pitch, cfg.focal, cfg.image_height,
                                          cfg.image_width));
    }
  }
  return cams;
}

struct LidarSample {
  PointCloud cloud;
  std::vector<int> surfaces;
};

/// Casts a regular azimuth x elevation lattice and keeps the first hit of each
/// ray; intensity is the albedo of the hit surface.
inline LidarSample sample_lidar_detailed(const SceneGeometry& g, const LidarSpec& spec) {
  LidarSample out;
  const int n_az = static_cast<int>(
      std::lround((spec.azimuth_max_deg - spec.azimuth_min_deg) / spec.horizontal_resolution_deg));
  for (int ch = 0; ch < spec.n_channels; ++ch) {
    const double el_deg = spec.n_channels == 1 ? spec.elevation_min_deg
                                               : spec.elevation_min_deg + (spec.elevation_max_deg - spec.elevation_min_deg) *
                                                                              ch / (spec.n_channels - 1);
    const double el = el_deg * std::numbers::pi / 180.0;
    for (int a = 0; a < n_az; ++a) {
      const double az = (spec.azimuth_min_deg + a * spec.horizontal_resolution_deg) * std::numbers::pi / 180.0;
      const Eigen::Vector3d dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      if (auto hit = raycast(g, spec.origin, dir, spec.max_range)) {
        out.cloud.points.push_back({static_cast<float>(hit->point.x()), static_cast<float>(hit->point.y()),
                                    static_cast<float>(hit->point.z()), static_cast<float>(hit->albedo)});
        out.surfaces.push_back(hit->surface);
      }
    }
  }
  return out;
}

inline PointCloud sample_lidar(const SceneGeometry& g, const LidarSpec& spec) {
  return sample_lidar_detailed(g, spec).cloud;
}

struct Render {
  int height = 0;
  int width = 0;
  std::vector<double> rgb;    // H x W x 3, pre-quantization
  std::vector<float> depth;   // camera-frame z, 0 = miss
  std::vector<int> surfaces;  // per pixel, -2 = miss
};

/// Renders albedo x Lambert x lighting gain (+ optional Gaussian noise on
/// surface hits). Misses get the sky constant and depth 0.
inline Render render_camera(const SceneGeometry& g, const CameraModel& cam, Lighting lighting, double max_range,
                            double noise_sigma = 0.0, Rng* noise_rng = nullptr) {
  cam.validate();
  Render r;
  r.height = cam.height;
  r.width = cam.width;
  const std::size_t n = static_cast<std::size_t>(cam.height) * cam.width;
  r.rgb.assign(n * 3, kSkyValue);
  r.depth.assign(n, 0.0f);
  r.surfaces.assign(n, -2);
  const Eigen::Vector3d origin = cam.position();
  const Eigen::Vector3d sun = sun_direction();
  const double gain = lighting_gain(lighting);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Eigen::Vector3d ray_cam = cam.unproject(x + 0.5, y + 0.5, 1.0).normalized();
      const Eigen::Vector3d dir = cam.rotation.transpose() * ray_cam;
      const std::size_t p = static_cast<std::size_t>(y) * cam.width + x;
      auto hit = raycast(g, origin, dir, max_range);
      if (!hit) continue;
      const double z = cam.to_camera(hit->point).z();
      if (!(z > 0.0)) continue;
      r.depth[p] = static_cast<float>(z);
      r.surfaces[p] = hit->surface;
      const double shade = std::max(0.0, hit->normal.dot(sun));
      for (int c = 0; c < 3; ++c) {
        double v = hit->albedo * hit->tint[c] * shade * gain;
        if (noise_sigma > 0.0 && noise_rng != nullptr) v += normal(*noise_rng, 0.0, noise_sigma);
        r.rgb[p * 3 + c] = v;
      }
    }
  }
  return r;
}

namespace detail {

struct Footprint {
  Eigen::Vector2d center;
  double half_l;
  double half_w;
  double yaw;
};

// Separating-axis test on two rotated rectangles.
inline bool footprints_intersect(const Footprint& a, const Footprint& b) {
  auto axes = [](const Footprint& f) {
    return std::array<Eigen::Vector2d, 2>{Eigen::Vector2d(std::cos(f.yaw), std::sin(f.yaw)),
                                          Eigen::Vector2d(-std::sin(f.yaw), std::cos(f.yaw))};
  };
  auto radius = [&](const Footprint& f, const Eigen::Vector2d& axis) {
    const auto ax = axes(f);
    return f.half_l * std::abs(ax[0].dot(axis)) + f.half_w * std::abs(ax[1].dot(axis));
  };
  for (const Footprint* f : {&a, &b}) {
    for (const Eigen::Vector2d& axis : axes(*f)) {
      const double dist = std::abs((b.center - a.center).dot(axis));
      if (dist > radius(a, axis) + radius(b, axis)) return false;
    }
  }
  return true;
}

inline Terrain make_terrain(Rng& rng) {
  Terrain t;
  t.base = 0.0;
  t.albedo = 0.5;
  for (int i = 0; i < 3; ++i) {
    const double wavelength = uniform(rng, 6.0, 15.0);
    const double dir = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double k = 2.0 * std::numbers::pi / wavelength;
    t.waves.push_back({uniform(rng, 0.04, 0.12), k * std::cos(dir), k * std::sin(dir),
                       uniform(rng, 0.0, 2.0 * std::numbers::pi)});
  }
  const int n_craters = 2 + static_cast<int>(rng() % 3);
  for (int i = 0; i < n_craters; ++i) {
    t.craters.push_back({uniform(rng, 2.0, 16.0), uniform(rng, -8.0, 8.0), uniform(rng, 1.0, 2.5),
                         uniform(rng, 0.1, 0.35)});
  }
  return t;
}

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace detail

/// Procedural lunar-like scene: height-field terrain with craters, ellipsoid
/// meteors (near-terrain albedo) and cuboid platforms (bright, bluish).
/// Deterministic in cfg.seed.
inline GeneratedScene generate_scene_detailed(const SceneConfig& cfg, std::string scene_id = {}) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, "scene");
  GeneratedScene out;
  out.geometry.terrain = detail::make_terrain(rng);
  const Terrain& terrain = out.geometry.terrain;
  const auto cams = camera_rig(cfg);
  constexpr int kMaxAttempts = 100;
  constexpr double kMaxYaw = std::numbers::pi / 3.0;
  constexpr double kClearance = 0.3;

  for (int layout = 0;; ++layout) {
    if (layout >= kMaxAttempts) {
      throw SceneGenerationError("could not place objects with sensor support after " + std::to_string(kMaxAttempts) +
                                 " attempts (config too dense?)");
    }
    out.geometry.ellipsoids.clear();
    out.geometry.cuboids.clear();
    std::vector<detail::Footprint> placed;
    std::vector<Box3D> boxes;

    auto place = [&](ClassId cls) {
      const SizeRange& range = cls == ClassId::kMeteor ? cfg.meteor_size : cfg.platform_size;
      for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        double l = uniform(rng, range.min, range.max);
        double w = uniform(rng, range.min, range.max);
        if (w > l) std::swap(l, w);
        const double h = cls == ClassId::kMeteor ? uniform(rng, 0.5, 0.9) * w : uniform(rng, 0.35, 0.6);
        const double x = uniform(rng, cfg.placement_x_min, cfg.placement_x_max);
        const double y = uniform(rng, -cfg.placement_half_width, cfg.placement_half_width);
        const double yaw = uniform(rng, -kMaxYaw, kMaxYaw);
        // Stay inside the forward wedge seen by the camera rig.
        if (std::abs(y) > x * 0.85 - 0.5) continue;
        detail::Footprint fp{{x, y}, l / 2.0 + kClearance, w / 2.0 + kClearance, yaw};
        if (std::any_of(placed.begin(), placed.end(),
                        [&](const detail::Footprint& o) { return detail::footprints_intersect(fp, o); })) {
          continue;
        }
        placed.push_back(fp);
        Box3D box;
        box.size = {l, w, h};
        box.yaw = yaw;
        box.class_id = static_cast<int>(cls);
        box.score = 1.0;
        if (cls == ClassId::kMeteor) {
          const double ground = terrain.height(x, y);
          box.center = {x, y, ground + 0.1 * h};
          Ellipsoid e;
          e.center = box.center;
          e.semi_axes = box.size / 2.0;
          e.yaw = yaw;
          e.albedo = uniform(rng, 0.45, 0.55);
          out.geometry.ellipsoids.push_back(e);
        } else {
          double ground = terrain.height(x, y);
          for (const auto& c : box.bev_corners()) ground = std::min(ground, terrain.height(c.x(), c.y()));
          box.center = {x, y, ground - 0.05 + h / 2.0};
          Cuboid c;
          c.center = box.center;
          c.size = box.size;
          c.yaw = yaw;
          c.albedo = 0.8;
          c.tint = {0.85, 0.92, 1.0};
          out.geometry.cuboids.push_back(c);
        }
        boxes.push_back(box);
        return;
      }
      throw SceneGenerationError("could not place object after " + std::to_string(kMaxAttempts) +
                                 " rejection-sampling attempts (config too dense?)");
    };
    // Meteors first so ellipsoid surface ids match box order.
    for (int i = 0; i < cfg.n_meteors; ++i) place(ClassId::kMeteor);
    for (int i = 0; i < cfg.n_platforms; ++i) place(ClassId::kPlatform);

    LidarSample lidar = sample_lidar_detailed(out.geometry, cfg.lidar);
    std::vector<Render> renders;
    Rng noise = make_rng(cfg.seed, "pixel-noise");
    for (const auto& cam : cams) {
      renders.push_back(render_camera(out.geometry, cam, cfg.lighting, cfg.lidar.max_range, cfg.pixel_noise, &noise));
    }

    // Box k is surface k (meteors are ellipsoids 0..n_m-1, platforms follow).
    const int n_obj = static_cast<int>(boxes.size());
    std::vector<int> lidar_support(n_obj, 0), pixel_support(n_obj, 0);
    for (int s : lidar.surfaces) {
      if (s >= 0) ++lidar_support[s];
    }
    for (const auto& r : renders) {
      for (int s : r.surfaces) {
        if (s >= 0) ++pixel_support[s];
      }
    }
    bool supported = true;
    for (int k = 0; k < n_obj; ++k) supported = supported && (lidar_support[k] >= 1 || pixel_support[k] >= 16);
    if (!supported) continue;

    Scene& scene = out.scene;
    scene.scene_id = scene_id.empty() ? "scene_" + std::to_string(cfg.seed) : std::move(scene_id);
    scene.lighting = cfg.lighting;
    scene.cloud = std::move(lidar.cloud);
    scene.boxes = std::move(boxes);
    scene.cameras.clear();
    for (std::size_t k = 0; k < cams.size(); ++k) {
      CameraView view;
      view.model = cams[k];
      view.image.height = renders[k].height;
      view.image.width = renders[k].width;
      view.image.rgb.resize(renders[k].rgb.size());
      std::transform(renders[k].rgb.begin(), renders[k].rgb.end(), view.image.rgb.begin(), detail::quantize);
      view.depth = std::move(renders[k].depth);
      scene.cameras.push_back(std::move(view));
    }
    out.lidar_surfaces = std::move(lidar.surfaces);
    return out;
  }
}

inline Scene generate_scene(const SceneConfig& cfg, std::string scene_id = {}) {
  return generate_scene_detailed(cfg, std::move(scene_id)).scene;
}

}  // namespace fusion4ca::synth
