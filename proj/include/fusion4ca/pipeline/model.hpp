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

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "fusion4ca/align/align.hpp"
#include "fusion4ca/auxbranch/auxbranch.hpp"
#include "fusion4ca/coordatt/coordatt.hpp"
#include "fusion4ca/detect/head.hpp"
#include "fusion4ca/encoders/camera.hpp"
#include "fusion4ca/encoders/pillar.hpp"
#include "fusion4ca/encoders/view_transform.hpp"
#include "fusion4ca/pipeline/config.hpp"
#include "fusion4ca/synthdata/scene.hpp"

namespace fusion4ca {

struct LossWeights {
  double align = 0.1;
  double aux = 0.5;

  void validate() const {
    if (!(align >= 0.0) || !(aux >= 0.0)) throw std::invalid_argument("loss weights must be >= 0");
  }
};

struct ModelConfig {
  BEVGridSpec grid;
  int n_classes = synth::kNumClasses;
  CameraEncoderConfig camera;
  DepthBins bins;
  PillarSpec pillar;
  int fused_channels = 16;
  bool align = true;
  double tau = 0.07;
  bool symmetric = false;
  bool coordatt = true;
  int coordatt_reduction = 8;
  bool aux = true;
  double reg_weight = 1.0;
  LossWeights weights;
  int k_max = 32;
  double score_thresh = 0.1;
  std::uint64_t seed = 1;
};

inline ModelConfig model_config(const RunConfig& rc) {
  ModelConfig m;
  const int C = static_cast<int>(rc.integer("model.channels"));
  if (C < 4 || C % 4 != 0) throw ConfigError("model.channels must be a positive multiple of 4");
  m.grid.channels = C;
  m.camera.channels = {C / 2, C, C};
  m.camera.adapters = rc.boolean("adapter.enabled");
  m.camera.adapter_r = static_cast<int>(rc.integer("adapter.r"));
  try {
    m.camera.slots = parse_adapter_slots(rc.str("adapter.slots"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("adapter.slots: ") + e.what());
  }
  m.bins = {rc.real("depth.min"), rc.real("depth.max"), static_cast<int>(rc.integer("depth.bins"))};
  m.pillar.grid = m.grid;
  m.pillar.max_points_per_pillar = static_cast<int>(rc.integer("pillar.max_points"));
  m.pillar.embed_width = C;
  m.fused_channels = C;
  m.align = rc.boolean("align.enabled");
  m.tau = rc.real("align.tau");
  m.symmetric = rc.boolean("align.symmetric");
  m.coordatt = rc.boolean("coordatt.enabled");
  m.coordatt_reduction = static_cast<int>(rc.integer("coordatt.reduction"));
  m.aux = rc.boolean("auxbranch.enabled");
  m.reg_weight = rc.real("detect.reg_weight");
  m.weights = {rc.real("align.weight"), rc.real("auxbranch.weight")};
  m.k_max = static_cast<int>(rc.integer("detect.k_max"));
  m.score_thresh = rc.real("detect.score_thresh");
  const long long seed = rc.integer("model.seed");
  m.seed = static_cast<std::uint64_t>(seed != 0 ? seed : rc.integer("train.seed"));
  try {
    m.weights.validate();
    m.bins.validate();
    m.pillar.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (!(m.tau > 0.0)) throw ConfigError("align.tau must be positive");
  if (m.k_max < 1) throw ConfigError("detect.k_max must be >= 1");
  return m;
}

/// Complete parameter tree. Leaf order (the checkpoint order): camera encoder
/// with adapters, depth head, pillar encoder, fusion convs, coordatt, main
/// head, then the training-only align block and auxiliary branch.
template <class T>
struct Model {
  ModelConfig config;
  ParamStore<T> store;
  CameraEncoder camera;
  DepthHead depth;
  PillarEncoder pillar;
  std::array<Conv, 2> fusion;
  std::optional<CoordAttParams> coordatt;
  HeadParams head;
  std::optional<AlignParams> align;
  std::optional<AuxBranchParams> aux;
};

template <class T>
Model<T> build_model(const ModelConfig& cfg) {
  Model<T> m;
  m.config = cfg;
  const std::uint64_t s = cfg.seed;
  const int C = cfg.camera.out_channels();
  m.camera = make_camera_encoder(m.store, cfg.camera, s);
  m.depth = make_depth_head(m.store, C, cfg.bins, s);
  m.pillar = make_pillar_encoder(m.store, cfg.pillar, s);
  const LeafSpec fusion{"fusion", "fusion", true, s};
  m.fusion[0] = make_conv(m.store, fusion, "conv0", C + cfg.pillar.embed_width, cfg.fused_channels, 3);
  m.fusion[1] = make_conv(m.store, fusion, "conv1", cfg.fused_channels, cfg.fused_channels, 3);
  if (cfg.coordatt) m.coordatt = make_coordatt(m.store, cfg.fused_channels, cfg.coordatt_reduction, s);
  m.head = make_head(m.store, LeafSpec{"head", "head", true, s}, cfg.fused_channels, cfg.n_classes);
  if (cfg.align) m.align = make_align(m.store, C, cfg.tau, cfg.symmetric, s);
  if (cfg.aux) m.aux = make_auxbranch(m.store, C, C, cfg.n_classes, s);
  return m;
}

enum class CountMode { kInference, kTraining };

template <class T>
std::size_t count_params(const ParamStore<T>& store, CountMode mode) {
  std::size_t n = 0;
  for (const auto& p : store.all()) {
    if (mode == CountMode::kTraining || p.inference) n += p.value.size();
  }
  return n;
}

template <class T>
std::size_t count_group(const ParamStore<T>& store, const std::string& group) {
  std::size_t n = 0;
  for (const auto& p : store.all()) {
    if (p.group == group) n += p.value.size();
  }
  return n;
}

enum class FreezeMode { kFull, kDelta };

inline FreezeMode freeze_mode_from_string(const std::string& s) {
  if (s == "full") return FreezeMode::kFull;
  if (s == "delta") return FreezeMode::kDelta;
  throw ConfigError("freeze.mode must be full or delta, got '" + s + "'");
}

/// Delta mode freezes the camera encoder's own convs and leaves adapters (and
/// everything else) trainable; full mode trains everything.
template <class T>
void apply_freeze_mask(ParamStore<T>& store, FreezeMode mode) {
  for (auto& p : store.all()) p.trainable = !(mode == FreezeMode::kDelta && p.group == "camera");
}

}  // namespace fusion4ca
