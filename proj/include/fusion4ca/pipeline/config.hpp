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
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fusion4ca/core/io.hpp"

namespace fusion4ca {

/// Bad key, bad value or unreadable config. Maps to a usage error.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigKey {
  const char* key;
  const char* default_value;
  const char* doc;
};

// clang-format off
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"data.dir", "data", "dataset root; scenes live in <data.dir>/scenes/<scene_id>"},
      {"data.n_train", "64", "number of training scenes"},
      {"data.n_val", "16", "number of validation scenes"},
      {"data.seed", "1", "seed of training scene i is data.seed + i; validation scenes start at data.seed + 100000"},
      {"synth.n_meteors", "3", "meteors per scene"},
      {"synth.n_platforms", "2", "platforms per scene"},
      {"synth.n_cameras", "1", "1 (forward) or 2 (yawed +-30 deg)"},
      {"synth.lighting", "mixed", "bright | dim | mixed (alternates per scene index)"},
      {"synth.lidar_channels", "32", "LiDAR elevation channels"},
      {"synth.lidar_resolution", "0.5", "LiDAR azimuth step in degrees"},
      {"synth.lidar_max_range", "20", "LiDAR and camera depth range in meters"},
      {"model.channels", "16", "camera feature, BEV and fused channel count"},
      {"model.seed", "0", "parameter init seed; 0 means use train.seed"},
      {"depth.bins", "16", "categorical depth bins"},
      {"depth.min", "1", "first bin edge in meters"},
      {"depth.max", "20", "last bin edge in meters"},
      {"pillar.max_points", "32", "points kept per pillar"},
      {"align.enabled", "true", "contrastive alignment loss (training only)"},
      {"align.tau", "0.07", "InfoNCE temperature"},
      {"align.symmetric", "false", "average in the depth-to-image direction"},
      {"align.weight", "0.1", "lambda_align"},
      {"adapter.enabled", "true", "cognitive adapters in the camera encoder"},
      {"adapter.r", "4", "adapter bottleneck ratio"},
      {"adapter.slots", "2A,2B", "comma list of <stage><A|B> insertion slots"},
      {"coordatt.enabled", "true", "coordinate attention after fusion"},
      {"coordatt.reduction", "8", "coordinate attention reduction ratio"},
      {"auxbranch.enabled", "true", "camera auxiliary branch (training only)"},
      {"auxbranch.weight", "0.5", "lambda_aux"},
      {"detect.k_max", "32", "maximum detections per scene"},
      {"detect.score_thresh", "0.1", "minimum detection score"},
      {"detect.reg_weight", "1", "weight of the box regression term inside L_det and L_aux"},
      {"train.steps", "2000", "optimizer steps"},
      {"train.batch", "2", "scenes per step"},
      {"train.lr", "0.01", "initial learning rate (cosine decay to 0)"},
      {"train.seed", "1", "seed for init and batch order"},
      {"train.optimizer", "sgd", "sgd (momentum) | adam"},
      {"train.momentum", "0.9", "SGD momentum"},
      {"train.clip", "5", "global gradient-norm clip; 0 disables"},
      {"train.checkpoint_every", "0", "also write checkpoints/step_<n>.ckpt every n steps; 0 disables"},
      {"train.resume", "", "checkpoint to resume from"},
      {"freeze.mode", "full", "full | delta (freeze camera encoder except adapters)"},
      {"eval.split", "val", "train | val"},
      {"eval.checkpoint", "", "checkpoint to score; empty means <out.dir>/checkpoints/final.ckpt"},
      {"ablate.rows", "table", "table (7 rows) | grid (all 2^k subsets of ablate.components)"},
      {"ablate.components", "align,auxbranch,coordatt,adapter", "components toggled by the grid"},
      {"ablate.seeds", "1,2,3", "training seeds per row"},
      {"ablate.adapter_freeze", "delta", "freeze.mode of ablation rows with the adapter on (full | delta); other rows use freeze.mode"},
      {"gradcheck.seed", "7", "seed for gradcheck inputs"},
      {"report.scenes", "4", "BEV overlays rendered by report"},
      {"out.dir", "out", "output directory"},
  };
  return keys;
}
// clang-format on

/// Flat key=value configuration. Every key has a default; unknown keys are
/// rejected.
class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[k.key] = k.default_value;
  }

  static RunConfig from_text(const std::string& text, const std::string& origin = "config") {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
      }
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
  }

  static RunConfig from_file(const std::filesystem::path& path) {
    try {
      return from_text(io::read_file(path), path.string());
    } catch (const io::FileError& e) {
      throw ConfigError(e.what());
    }
  }

  void set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
  }

  /// Applies "key=value".
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  long long integer(const std::string& key) const {
    const std::string& v = str(key);
    long long out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad(key, "an integer");
    return out;
  }

  double real(const std::string& key) const {
    const std::string& v = str(key);
    try {
      std::size_t used = 0;
      const double out = std::stod(v, &used);
      if (used != v.size()) bad(key, "a number");
      return out;
    } catch (const std::logic_error&) {
      bad(key, "a number");
    }
  }

  bool boolean(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    bad(key, "true or false");
  }

  std::string choice(const std::string& key, std::initializer_list<const char*> allowed) const {
    const std::string& v = str(key);
    for (const char* a : allowed) {
      if (v == a) return v;
    }
    std::string list;
    for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
    bad(key, "one of {" + list + "}");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  /// Canonical text: every key, sorted, one "key=value" per line.
  std::string snapshot() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  std::string hash() const { return io::git_hash(snapshot()); }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  }

  [[noreturn]] void bad(const std::string& key, const std::string& expected) const {
    throw ConfigError("config key '" + key + "' must be " + expected + ", got '" + str(key) + "'");
  }

  std::map<std::string, std::string> values_;
};

}  // namespace fusion4ca
