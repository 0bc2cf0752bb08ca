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

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "fusion4ca/pipeline/config.hpp"
#include "fusion4ca/synthdata/io.hpp"
#include "fusion4ca/synthdata/scene.hpp"

namespace fusion4ca {

enum class Split { kTrain, kVal };

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  throw ConfigError("split must be train or val, got '" + s + "'");
}

inline constexpr std::uint64_t kValSeedOffset = 100000;

inline std::string scene_id(Split split, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05d", split == Split::kTrain ? "train" : "val", index);
  return buf;
}

inline int split_size(const RunConfig& rc, Split split) {
  const long long n = rc.integer(split == Split::kTrain ? "data.n_train" : "data.n_val");
  if (n < 0) throw ConfigError("scene counts must be >= 0");
  return static_cast<int>(n);
}

inline synth::SceneConfig scene_config(const RunConfig& rc, Split split, int index) {
  synth::SceneConfig c;
  c.seed = static_cast<std::uint64_t>(rc.integer("data.seed")) + (split == Split::kVal ? kValSeedOffset : 0) +
           static_cast<std::uint64_t>(index);
  c.n_meteors = static_cast<int>(rc.integer("synth.n_meteors"));
  c.n_platforms = static_cast<int>(rc.integer("synth.n_platforms"));
  c.n_cameras = static_cast<int>(rc.integer("synth.n_cameras"));
  const std::string lighting = rc.choice("synth.lighting", {"bright", "dim", "mixed"});
  c.lighting = lighting == "mixed" ? (index % 2 == 0 ? synth::Lighting::kBright : synth::Lighting::kDim)
                                   : synth::lighting_from_string(lighting);
  c.lidar.n_channels = static_cast<int>(rc.integer("synth.lidar_channels"));
  c.lidar.horizontal_resolution_deg = rc.real("synth.lidar_resolution");
  c.lidar.max_range = rc.real("synth.lidar_max_range");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline std::filesystem::path scenes_root(const RunConfig& rc) { return std::filesystem::path(rc.str("data.dir")) / "scenes"; }

inline synth::Scene generate_split_scene(const RunConfig& rc, Split split, int index) {
  return synth::generate_scene(scene_config(rc, split, index), scene_id(split, index));
}

/// Writes every train and val scene; returns the number written.
inline int synthesize_dataset(const RunConfig& rc) {
  int n = 0;
  for (Split split : {Split::kTrain, Split::kVal}) {
    for (int i = 0; i < split_size(rc, split); ++i, ++n) {
      synth::write_scene(generate_split_scene(rc, split, i), scenes_root(rc) / scene_id(split, i));
    }
  }
  return n;
}

inline std::vector<synth::Scene> load_split(const RunConfig& rc, Split split) {
  std::vector<synth::Scene> out;
  const int n = split_size(rc, split);
  for (int i = 0; i < n; ++i) {
    const auto dir = scenes_root(rc) / scene_id(split, i);
    if (!std::filesystem::exists(dir)) {
      throw synth::SceneIoError("missing scene " + dir.string() + " (run the synth command first)");
    }
    out.push_back(synth::read_scene(dir));
  }
  return out;
}

inline std::vector<synth::Scene> generate_split(const RunConfig& rc, Split split) {
  std::vector<synth::Scene> out;
  for (int i = 0; i < split_size(rc, split); ++i) out.push_back(generate_split_scene(rc, split, i));
  return out;
}

}  // namespace fusion4ca
