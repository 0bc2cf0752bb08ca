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

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "fusion4ca/core/io.hpp"
#include "fusion4ca/synthdata/scene.hpp"

namespace fusion4ca::synth {

inline constexpr int kSceneFormatVersion = 1;

class SceneIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline nlohmann::json box_to_json(const Box3D& b) {
  return {{"center", {b.center.x(), b.center.y(), b.center.z()}},
          {"size", {b.size.x(), b.size.y(), b.size.z()}},
          {"yaw", b.yaw},
          {"class_id", b.class_id},
          {"score", b.score}};
}

inline Box3D box_from_json(const nlohmann::json& j) {
  Box3D b;
  for (int i = 0; i < 3; ++i) {
    b.center[i] = j.at("center").at(i).get<double>();
    b.size[i] = j.at("size").at(i).get<double>();
  }
  b.yaw = j.at("yaw").get<double>();
  b.class_id = j.at("class_id").get<int>();
  b.score = j.at("score").get<double>();
  return b;
}

inline nlohmann::json camera_to_json(const CameraModel& c) {
  nlohmann::json intr = nlohmann::json::array(), extr = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) intr.push_back(c.intrinsics(r, k));
    for (int k = 0; k < 3; ++k) extr.push_back(c.rotation(r, k));
    extr.push_back(c.translation[r]);
  }
  return {{"intrinsics", intr}, {"extrinsic", extr}, {"height", c.height}, {"width", c.width}};
}

inline CameraModel camera_from_json(const nlohmann::json& j) {
  CameraModel c;
  const auto& intr = j.at("intrinsics");
  const auto& extr = j.at("extrinsic");
  if (intr.size() != 9 || extr.size() != 12) throw std::invalid_argument("camera needs 9 intrinsics and 12 extrinsics");
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) c.intrinsics(r, k) = intr.at(r * 3 + k).get<double>();
    for (int k = 0; k < 3; ++k) c.rotation(r, k) = extr.at(r * 4 + k).get<double>();
    c.translation[r] = extr.at(r * 4 + 3).get<double>();
  }
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
  return c;
}

}  // namespace detail

/// Writes `<dir>/meta.json`, `points.f32`, `image_<k>.ppm`, `depth_<k>.f32`.
inline void write_scene(const Scene& scene, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["format_version"] = kSceneFormatVersion;
  meta["scene_id"] = scene.scene_id;
  meta["lighting"] = to_string(scene.lighting);
  meta["boxes"] = nlohmann::json::array();
  for (const auto& b : scene.boxes) meta["boxes"].push_back(detail::box_to_json(b));
  meta["cameras"] = nlohmann::json::array();
  for (const auto& c : scene.cameras) meta["cameras"].push_back(detail::camera_to_json(c.model));
  io::write_file(dir / "meta.json", meta.dump(2) + "\n");
  io::write_file(dir / "points.f32", io::pack(scene.cloud.points));
  for (std::size_t k = 0; k < scene.cameras.size(); ++k) {
    const auto& view = scene.cameras[k];
    io::write_file(dir / ("image_" + std::to_string(k) + ".ppm"),
                   io::encode_ppm(view.image.height, view.image.width, view.image.rgb));
    io::write_file(dir / ("depth_" + std::to_string(k) + ".f32"), io::pack(view.depth));
  }
}

inline Scene read_scene(const std::filesystem::path& dir) {
  auto fail = [&](const std::filesystem::path& file, const std::string& why) -> SceneIoError {
    return SceneIoError((dir / file).string() + ": " + why);
  };
  auto load = [&](const std::string& file) {
    try {
      return io::read_file(dir / file);
    } catch (const io::FileError&) {
      throw fail(file, "missing or unreadable");
    }
  };

  Scene scene;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(load("meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw fail("meta.json", std::string("corrupt JSON (") + e.what() + ")");
  }
  try {
    const int version = meta.at("format_version").get<int>();
    if (version != kSceneFormatVersion) {
      throw fail("meta.json", "unsupported format_version " + std::to_string(version) + " (expected " +
                                  std::to_string(kSceneFormatVersion) + ")");
    }
    scene.scene_id = meta.value("scene_id", dir.filename().string());
    scene.lighting = lighting_from_string(meta.at("lighting").get<std::string>());
    for (const auto& b : meta.at("boxes")) scene.boxes.push_back(detail::box_from_json(b));
    for (const auto& c : meta.at("cameras")) {
      CameraView view;
      view.model = detail::camera_from_json(c);
      scene.cameras.push_back(std::move(view));
    }
  } catch (const SceneIoError&) {
    throw;
  } catch (const std::exception& e) {
    throw fail("meta.json", std::string("corrupt metadata (") + e.what() + ")");
  }

  try {
    scene.cloud.points = io::unpack<std::array<float, 4>>(load("points.f32"), 16, "points.f32");
  } catch (const io::FileError& e) {
    throw fail("points.f32", e.what());
  }
  for (std::size_t k = 0; k < scene.cameras.size(); ++k) {
    CameraView& view = scene.cameras[k];
    const std::string image_file = "image_" + std::to_string(k) + ".ppm";
    const std::string depth_file = "depth_" + std::to_string(k) + ".f32";
    try {
      io::PpmImage img = io::decode_ppm(load(image_file), image_file);
      if (img.height != view.model.height || img.width != view.model.width) {
        throw io::FileError("image size does not match camera metadata");
      }
      view.image = {img.height, img.width, std::move(img.rgb)};
    } catch (const io::FileError& e) {
      throw fail(image_file, e.what());
    }
    try {
      view.depth = io::unpack<float>(load(depth_file), 4, depth_file);
      if (view.depth.size() != static_cast<std::size_t>(view.model.height) * view.model.width) {
        throw io::FileError("depth map has wrong pixel count");
      }
    } catch (const io::FileError& e) {
      throw fail(depth_file, e.what());
    }
  }
  return scene;
}

}  // namespace fusion4ca::synth
