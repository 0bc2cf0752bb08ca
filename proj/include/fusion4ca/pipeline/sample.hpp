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

#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fusion4ca/encoders/pillar.hpp"
#include "fusion4ca/encoders/view_transform.hpp"
#include "fusion4ca/pipeline/model.hpp"
#include "fusion4ca/synthdata/scene.hpp"

namespace fusion4ca {

/// Everything the model consumes from one scene, precomputed once.
template <class T>
struct PreparedSample {
  std::string id;
  std::vector<CameraModel> cameras;
  Tensor<T> images;  // [V, 3, H, W], values in [0, 1]
  Tensor<T> depth;   // [V, 1, H/s, W/s], projected LiDAR depth / d_max
  std::shared_ptr<const std::vector<LiftTable>> tables;
  PillarInput<T> pillars;
  std::vector<Box3D> boxes;
};

template <class T>
PreparedSample<T> prepare_sample(const synth::Scene& scene, const ModelConfig& cfg) {
  if (scene.cameras.empty()) throw std::invalid_argument("scene " + scene.scene_id + " has no cameras");
  const int V = static_cast<int>(scene.cameras.size());
  const int H = scene.cameras[0].model.height, W = scene.cameras[0].model.width;
  const int stride = cfg.camera.stride();
  PreparedSample<T> s;
  s.id = scene.scene_id;
  s.images = Tensor<T>({V, 3, H, W});
  s.depth = Tensor<T>({V, 1, H / stride, W / stride});
  auto tables = std::make_shared<std::vector<LiftTable>>();
  for (int v = 0; v < V; ++v) {
    const synth::CameraView& view = scene.cameras[v];
    if (view.model.height != H || view.model.width != W) {
      throw std::invalid_argument("scene " + scene.scene_id + ": cameras differ in image size");
    }
    s.cameras.push_back(view.model);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int c = 0; c < 3; ++c) s.images(v, c, y, x) = static_cast<T>(view.image.at(y, x, c));
    const Tensor<T> d = depth_project<T>(scene.cloud, view.model, stride);
    const T inv = static_cast<T>(1.0 / cfg.bins.d_max);
    for (std::size_t i = 0; i < d.size(); ++i) s.depth.data()[v * d.size() + i] = d[i] * inv;
    tables->push_back(make_lift_table(view.model, stride, cfg.bins, cfg.grid));
  }
  s.tables = std::move(tables);
  s.pillars = prepare_pillars<T>({&scene.cloud}, cfg.pillar);
  s.boxes = scene.boxes;
  return s;
}

template <class T>
std::vector<PreparedSample<T>> prepare_samples(const std::vector<synth::Scene>& scenes, const ModelConfig& cfg) {
  std::vector<PreparedSample<T>> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(prepare_sample<T>(s, cfg));
  return out;
}

/// Samples stacked along the batch axis (view-major within a sample).
template <class T>
struct Batch {
  int size = 0;
  int views = 0;
  Tensor<T> images;
  Tensor<T> depth;
  std::shared_ptr<const std::vector<LiftTable>> tables;
  std::shared_ptr<const PillarInput<T>> pillars;
  std::vector<std::vector<Box3D>> boxes;
};

inline bool same_camera(const CameraModel& a, const CameraModel& b) {
  return a.intrinsics == b.intrinsics && a.rotation == b.rotation && a.translation == b.translation &&
         a.height == b.height && a.width == b.width;
}

namespace detail {

template <class T>
Tensor<T> stack(const std::vector<const Tensor<T>*>& parts) {
  Shape s = parts.front()->shape();
  int n = 0;
  for (const auto* p : parts) n += p->n();
  s[0] = n;
  Tensor<T> out(s);
  std::size_t offset = 0;
  for (const auto* p : parts) {
    std::memcpy(out.data() + offset, p->data(), p->size() * sizeof(T));
    offset += p->size();
  }
  return out;
}

}  // namespace detail

template <class T>
Batch<T> make_batch(std::span<const PreparedSample<T>* const> samples) {
  if (samples.empty()) throw std::invalid_argument("batch size must be >= 1");
  const PreparedSample<T>& first = *samples.front();
  Batch<T> b;
  b.size = static_cast<int>(samples.size());
  b.views = static_cast<int>(first.cameras.size());
  std::vector<const Tensor<T>*> images, depth;
  auto pillars = std::make_shared<PillarInput<T>>();
  pillars->batch_size = b.size;
  int n_points = 0;
  for (const auto* s : samples) n_points += static_cast<int>(s->pillars.cell.size());
  pillars->features = Tensor<T>({1, kPillarPointFeatures, n_points, 1});
  int offset = 0;
  for (int i = 0; i < b.size; ++i) {
    const PreparedSample<T>& s = *samples[i];
    if (s.cameras.size() != first.cameras.size()) throw std::invalid_argument("batch mixes camera rigs");
    for (std::size_t v = 0; v < s.cameras.size(); ++v) {
      if (!same_camera(s.cameras[v], first.cameras[v])) throw std::invalid_argument("batch mixes camera rigs");
    }
    images.push_back(&s.images);
    depth.push_back(&s.depth);
    const int n = static_cast<int>(s.pillars.cell.size());
    for (int k = 0; k < kPillarPointFeatures; ++k)
      for (int p = 0; p < n; ++p) pillars->features(0, k, offset + p, 0) = s.pillars.features(0, k, p, 0);
    pillars->cell.insert(pillars->cell.end(), s.pillars.cell.begin(), s.pillars.cell.end());
    pillars->batch.insert(pillars->batch.end(), n, i);
    offset += n;
    b.boxes.push_back(s.boxes);
  }
  b.images = detail::stack(images);
  b.depth = detail::stack(depth);
  b.tables = first.tables;
  b.pillars = std::move(pillars);
  return b;
}

template <class T>
Batch<T> make_batch(const PreparedSample<T>& sample) {
  const PreparedSample<T>* p = &sample;
  return make_batch<T>(std::span<const PreparedSample<T>* const>(&p, 1));
}

}  // namespace fusion4ca
