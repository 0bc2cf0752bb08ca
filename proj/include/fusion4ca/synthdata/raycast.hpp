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
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

namespace fusion4ca::synth {

struct TerrainWave {
  double amplitude = 0.0;
  double kx = 0.0;  // angular wavenumbers, rad/m
  double ky = 0.0;
  double phase = 0.0;
};

/// Cosine-profile depression: -depth * (1 + cos(pi * r / radius)) / 2 inside
/// the radius, zero outside (C1-continuous at the rim).
struct Crater {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 1.0;
  double depth = 0.0;
};

struct Terrain {
  double base = 0.0;
  double albedo = 0.5;
  std::vector<TerrainWave> waves;
  std::vector<Crater> craters;

  double height(double x, double y) const {
    double h = base;
    for (const auto& w : waves) h += w.amplitude * std::sin(w.kx * x + w.ky * y + w.phase);
    for (const auto& c : craters) {
      const double r = std::hypot(x - c.cx, y - c.cy);
      if (r < c.radius) h -= c.depth * 0.5 * (1.0 + std::cos(std::numbers::pi * r / c.radius));
    }
    return h;
  }

  Eigen::Vector2d gradient(double x, double y) const {
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    for (const auto& w : waves) {
      const double d = w.amplitude * std::cos(w.kx * x + w.ky * y + w.phase);
      g += Eigen::Vector2d(d * w.kx, d * w.ky);
    }
    for (const auto& c : craters) {
      const double dx = x - c.cx, dy = y - c.cy;
      const double r = std::hypot(dx, dy);
      if (r < c.radius && r > 0.0) {
        const double dh_dr = c.depth * 0.5 * std::numbers::pi / c.radius * std::sin(std::numbers::pi * r / c.radius);
        g += Eigen::Vector2d(dh_dr * dx / r, dh_dr * dy / r);
      }
    }
    return g;
  }

  Eigen::Vector3d normal(double x, double y) const {
    const Eigen::Vector2d g = gradient(x, y);
    return Eigen::Vector3d(-g.x(), -g.y(), 1.0).normalized();
  }

  /// Upper bound on |grad h|.
  double slope_bound() const {
    double l = 0.0;
    for (const auto& w : waves) l += std::abs(w.amplitude) * std::hypot(w.kx, w.ky);
    for (const auto& c : craters) l += c.depth * 0.5 * std::numbers::pi / c.radius;
    return l;
  }
};

inline Eigen::Matrix3d yaw_rotation(double yaw) {
  Eigen::Matrix3d r;
  const double c = std::cos(yaw), s = std::sin(yaw);
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return r;
}

struct Ellipsoid {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d semi_axes = Eigen::Vector3d::Ones();
  double yaw = 0.0;
  double albedo = 0.5;
  Eigen::Vector3d tint = Eigen::Vector3d::Ones();

  /// Implicit value |p_local / semi_axes|^2 - 1.
  double implicit(const Eigen::Vector3d& p) const {
    const Eigen::Vector3d q = yaw_rotation(-yaw) * (p - center);
    return q.cwiseQuotient(semi_axes).squaredNorm() - 1.0;
  }
};

struct Cuboid {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  double yaw = 0.0;
  double albedo = 0.8;
  Eigen::Vector3d tint = Eigen::Vector3d::Ones();

  /// Distance from p to the cuboid surface (valid inside and outside).
  double surface_distance(const Eigen::Vector3d& p) const {
    const Eigen::Vector3d q = (yaw_rotation(-yaw) * (p - center)).cwiseAbs() - size / 2.0;
    const double outside = q.cwiseMax(0.0).norm();
    const double inside = std::min(q.maxCoeff(), 0.0);
    return std::abs(outside + inside);
  }
};

struct SceneGeometry {
  Terrain terrain;
  std::vector<Ellipsoid> ellipsoids;
  std::vector<Cuboid> cuboids;
};

/// Surface ids: -1 terrain, [0, n_ellipsoids) ellipsoids, then cuboids.
struct Hit {
  double range = 0.0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double albedo = 0.0;
  Eigen::Vector3d tint = Eigen::Vector3d::Ones();
  int surface = -1;
};

namespace detail {

inline std::optional<double> intersect_ellipsoid(const Ellipsoid& e, const Eigen::Vector3d& o,
                                                 const Eigen::Vector3d& d) {
  const Eigen::Matrix3d rt = yaw_rotation(-e.yaw);
  const Eigen::Vector3d p = (rt * (o - e.center)).cwiseQuotient(e.semi_axes);
  const Eigen::Vector3d v = (rt * d).cwiseQuotient(e.semi_axes);
  const double a = v.squaredNorm(), b = 2.0 * p.dot(v), c = p.squaredNorm() - 1.0;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / (2.0 * a), t1 = (-b + sq) / (2.0 * a);
  if (t0 > 1e-9) return t0;
  if (t1 > 1e-9) return t1;
  return std::nullopt;
}

inline std::optional<std::pair<double, Eigen::Vector3d>> intersect_cuboid(const Cuboid& b, const Eigen::Vector3d& o,
                                                                          const Eigen::Vector3d& d) {
  const Eigen::Matrix3d rt = yaw_rotation(-b.yaw);
  const Eigen::Vector3d p = rt * (o - b.center);
  const Eigen::Vector3d v = rt * d;
  const Eigen::Vector3d half = b.size / 2.0;
  double tmin = -std::numeric_limits<double>::infinity(), tmax = std::numeric_limits<double>::infinity();
  int axis_in = -1, axis_out = -1;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(v[i]) < 1e-15) {
      if (std::abs(p[i]) > half[i]) return std::nullopt;
      continue;
    }
    double t1 = (-half[i] - p[i]) / v[i], t2 = (half[i] - p[i]) / v[i];
    if (t1 > t2) std::swap(t1, t2);
    if (t1 > tmin) {
      tmin = t1;
      axis_in = i;
    }
    if (t2 < tmax) {
      tmax = t2;
      axis_out = i;
    }
  }
  if (tmin > tmax) return std::nullopt;
  double t;
  int axis;
  if (tmin > 1e-9) {
    t = tmin;
    axis = axis_in;
  } else if (tmax > 1e-9) {
    t = tmax;
    axis = axis_out;
  } else {
    return std::nullopt;
  }
  Eigen::Vector3d n_local = Eigen::Vector3d::Zero();
  n_local[axis] = (p[axis] + t * v[axis]) > 0.0 ? 1.0 : -1.0;
  return std::make_pair(t, Eigen::Vector3d(yaw_rotation(b.yaw) * n_local));
}

/// First crossing of the ray with the height field, by conservative marching
/// (step bounded by the terrain slope) followed by bisection.
inline std::optional<double> intersect_terrain(const Terrain& terrain, const Eigen::Vector3d& o,
                                               const Eigen::Vector3d& d, double max_range) {
  auto gap = [&](double t) {
    const Eigen::Vector3d p = o + t * d;
    return p.z() - terrain.height(p.x(), p.y());
  };
  double f0 = gap(0.0);
  if (f0 <= 0.0) return std::nullopt;  // origin below ground
  const double lip = terrain.slope_bound() * std::hypot(d.x(), d.y());
  const double descent = lip - d.z();  // max rate at which the gap can shrink
  if (descent <= 0.0) return std::nullopt;
  constexpr double kMinStep = 0.02;
  double t = 0.0;
  while (t < max_range) {
    const double step = std::max(f0 / descent, kMinStep);
    double t1 = std::min(t + step, max_range);
    double f1 = gap(t1);
    if (f1 <= 0.0) {
      double lo = t, hi = t1;
      for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (gap(mid) > 0.0 ? lo : hi) = mid;
      }
      return hi;
    }
    if (t1 >= max_range) break;
    t = t1;
    f0 = f1;
  }
  return std::nullopt;
}

}  // namespace detail

/// Nearest intersection within (0, max_range]; `dir` must be unit length.
inline std::optional<Hit> raycast(const SceneGeometry& g, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                  double max_range) {
  std::optional<Hit> best;
  auto consider = [&](double t, auto&& make) {
    if (t > max_range) return;
    if (!best || t < best->range) best = make(t);
  };
  for (std::size_t i = 0; i < g.ellipsoids.size(); ++i) {
    const Ellipsoid& e = g.ellipsoids[i];
    if (auto t = detail::intersect_ellipsoid(e, origin, dir)) {
      consider(*t, [&](double tt) {
        Hit h;
        h.range = tt;
        h.point = origin + tt * dir;
        const Eigen::Vector3d q = yaw_rotation(-e.yaw) * (h.point - e.center);
        h.normal = (yaw_rotation(e.yaw) * q.cwiseQuotient(e.semi_axes.cwiseProduct(e.semi_axes))).normalized();
        h.albedo = e.albedo;
        h.tint = e.tint;
        h.surface = static_cast<int>(i);
        return h;
      });
    }
  }
  for (std::size_t i = 0; i < g.cuboids.size(); ++i) {
    const Cuboid& b = g.cuboids[i];
    if (auto r = detail::intersect_cuboid(b, origin, dir)) {
      consider(r->first, [&](double tt) {
        Hit h;
        h.range = tt;
        h.point = origin + tt * dir;
        h.normal = r->second;
        h.albedo = b.albedo;
        h.tint = b.tint;
        h.surface = static_cast<int>(g.ellipsoids.size() + i);
        return h;
      });
    }
  }
  const double limit = best ? best->range : max_range;
  if (auto t = detail::intersect_terrain(g.terrain, origin, dir, limit)) {
    if (!best || *t < best->range) {
      Hit h;
      h.range = *t;
      h.point = origin + *t * dir;
      h.normal = g.terrain.normal(h.point.x(), h.point.y());
      h.albedo = g.terrain.albedo;
      h.surface = -1;
      best = h;
    }
  }
  return best;
}

}  // namespace fusion4ca::synth
