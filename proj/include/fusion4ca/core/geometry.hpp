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
#include <Eigen/Geometry>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fusion4ca {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

/// Minimal absolute angular difference, in [0, pi].
inline double yaw_difference(double a, double b) { return std::abs(wrap_angle(a - b)); }

/// Pinhole camera. `rotation`/`translation` map world points into the camera
/// frame (x right, y down, z forward).
struct CameraModel {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  int height = 0;
  int width = 0;

  double fx() const { return intrinsics(0, 0); }
  double fy() const { return intrinsics(1, 1); }
  double cx() const { return intrinsics(0, 2); }
  double cy() const { return intrinsics(1, 2); }

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return rotation * world + translation; }
  Eigen::Vector3d to_world(const Eigen::Vector3d& cam) const { return rotation.transpose() * (cam - translation); }
  Eigen::Vector3d position() const { return -rotation.transpose() * translation; }

  /// Camera-frame point at `depth` along the ray through pixel (u, v).
  Eigen::Vector3d unproject(double u, double v, double depth) const {
    return {(u - cx()) / fx() * depth, (v - cy()) / fy() * depth, depth};
  }

  void validate() const {
    if (height <= 0 || width <= 0) throw GeometryError("camera image size must be positive");
    if (!(fx() > 0.0) || !(fy() > 0.0)) throw GeometryError("camera focal lengths must be positive");
    if (cx() < 0.0 || cx() > width || cy() < 0.0 || cy() > height) {
      throw GeometryError("camera principal point lies outside the image");
    }
    const Eigen::Matrix3d rrt = rotation * rotation.transpose();
    if ((rrt - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
        std::abs(rotation.determinant() - 1.0) > 1e-6) {
      throw GeometryError("camera rotation is not a proper rotation");
    }
  }

  /// Camera at `position` looking along heading `yaw` (world z up), tilted
  /// down by `pitch` radians.
  static CameraModel looking(const Eigen::Vector3d& position, double yaw, double pitch, double focal, int height,
                             int width) {
    const Eigen::Vector3d forward(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), -std::sin(pitch));
    const Eigen::Vector3d up_world(0.0, 0.0, 1.0);
    const Eigen::Vector3d right = forward.cross(up_world).normalized();
    const Eigen::Vector3d down = forward.cross(right).normalized();
    CameraModel cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * position;
    cam.intrinsics << focal, 0.0, width / 2.0, 0.0, focal, height / 2.0, 0.0, 0.0, 1.0;
    cam.height = height;
    cam.width = width;
    return cam;
  }
};

struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();  // length (along yaw), width, height
  double yaw = 0.0;
  int class_id = 0;
  double score = 1.0;

  void validate() const {
    if (!(size.x() > 0.0 && size.y() > 0.0 && size.z() > 0.0)) throw GeometryError("box size must be positive");
    if (!(yaw > -std::numbers::pi && yaw <= std::numbers::pi)) throw GeometryError("box yaw must be in (-pi, pi]");
    if (!(score >= 0.0 && score <= 1.0)) throw GeometryError("box score must be in [0, 1]");
  }

  /// Footprint corners in the ground plane, counter-clockwise.
  std::array<Eigen::Vector2d, 4> bev_corners() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double hl = size.x() / 2.0, hw = size.y() / 2.0;
    std::array<Eigen::Vector2d, 4> out;
    const double sx[4] = {hl, -hl, -hl, hl};
    const double sy[4] = {hw, hw, -hw, -hw};
    for (int i = 0; i < 4; ++i) {
      out[i] = {center.x() + c * sx[i] - s * sy[i], center.y() + s * sx[i] + c * sy[i]};
    }
    return out;
  }
};

/// N x (x, y, z, intensity) in the world frame, stored as float32 exactly as
/// written to disk.
struct PointCloud {
  std::vector<std::array<float, 4>> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  Eigen::Vector3d xyz(std::size_t i) const { return {points[i][0], points[i][1], points[i][2]}; }
};

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Ground-plane grid. Columns run along x, rows along y; both intervals are
/// half-open [min, max).
struct BEVGridSpec {
  double x_min = 0.0, x_max = 16.0;
  double y_min = -8.0, y_max = 8.0;
  double cell_size = 0.5;
  int channels = 16;

  int nx() const { return static_cast<int>(std::lround((x_max - x_min) / cell_size)); }
  int ny() const { return static_cast<int>(std::lround((y_max - y_min) / cell_size)); }
  int cells() const { return nx() * ny(); }

  void validate() const {
    if (!(cell_size > 0.0)) throw GeometryError("grid cell size must be positive");
    for (double extent : {x_max - x_min, y_max - y_min}) {
      const double n = extent / cell_size;
      if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n)) {
        throw GeometryError("grid extent is not divisible by the cell size");
      }
    }
    if (nx() < 8 || ny() < 8) throw GeometryError("grid must be at least 8x8 cells");
    if (channels <= 0) throw GeometryError("grid channels must be positive");
  }

  Eigen::Vector2d cell_center(const Cell& c) const {
    return {x_min + (c.col + 0.5) * cell_size, y_min + (c.row + 0.5) * cell_size};
  }
};

inline std::optional<Cell> world_to_cell(const Eigen::Vector2d& xy, const BEVGridSpec& grid) {
  if (!(xy.x() >= grid.x_min && xy.x() < grid.x_max && xy.y() >= grid.y_min && xy.y() < grid.y_max)) {
    return std::nullopt;
  }
  int col = static_cast<int>(std::floor((xy.x() - grid.x_min) / grid.cell_size));
  int row = static_cast<int>(std::floor((xy.y() - grid.y_min) / grid.cell_size));
  // Rounding right below the max edge can land on nx/ny.
  col = std::min(col, grid.nx() - 1);
  row = std::min(row, grid.ny() - 1);
  return Cell{row, col};
}

inline double bev_center_distance(const Box3D& a, const Box3D& b) {
  return std::hypot(a.center.x() - b.center.x(), a.center.y() - b.center.y());
}

struct PixelProjection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
  std::size_t index = 0;
};

/// Visible points only: positive camera-frame depth and (u, v) inside
/// [0, width) x [0, height).
inline std::vector<PixelProjection> project_points(const PointCloud& cloud, const CameraModel& cam) {
  cam.validate();
  std::vector<PixelProjection> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d pc = cam.to_camera(cloud.xyz(i));
    if (!(pc.z() > 0.0)) continue;
    const double u = cam.fx() * pc.x() / pc.z() + cam.cx();
    const double v = cam.fy() * pc.y() / pc.z() + cam.cy();
    if (u >= 0.0 && u < cam.width && v >= 0.0 && v < cam.height) out.push_back({u, v, pc.z(), i});
  }
  return out;
}

}  // namespace fusion4ca
