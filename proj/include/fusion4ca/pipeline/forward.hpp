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

#include <optional>
#include <vector>

#include "fusion4ca/detect/losses.hpp"
#include "fusion4ca/pipeline/model.hpp"
#include "fusion4ca/pipeline/sample.hpp"

namespace fusion4ca {

/// Intermediate maps of one forward pass.
struct ForwardState {
  Var camera_features;  // x_rgb^0, [B*V, C, h, w]
  Var camera_bev;       // [B, C, ny, nx]
  Var lidar_bev;        // [B, E, ny, nx]
  Var fused;            // after fusion convs (and coordatt when enabled)
  HeadOutput main;
};

/// Shared inference path: camera encode, depth head, lift-splat, pillars,
/// concat fusion, coordatt, main head.
template <class T>
ForwardState forward_core(Tape<T>& t, const Model<T>& m, const Batch<T>& batch) {
  ForwardState s;
  s.camera_features = camera_encode(t, m.camera, t.constant(batch.images));
  Var depth = predict_depth_dist(t, m.depth, s.camera_features);
  s.camera_bev = lift_splat(t, s.camera_features, depth, batch.tables, m.config.grid);
  s.lidar_bev = pillar_encode(t, m.pillar, batch.pillars);
  Var x = ops::concat(t, {s.camera_bev, s.lidar_bev}, 1);
  x = ops::gelu(t, apply(t, m.fusion[0], x));
  x = ops::gelu(t, apply(t, m.fusion[1], x));
  if (m.coordatt) x = coord_att_forward(t, *m.coordatt, x);
  s.fused = x;
  s.main = head_forward(t, m.head, x);
  return s;
}

/// Loss components as tape nodes. Disabled components are constant zeros.
struct LossBundle {
  Var det;
  Var align;
  Var aux;
  Var total;
};

template <class T>
LossBundle forward_train(Tape<T>& t, const Model<T>& m, const Batch<T>& batch, const LossWeights& w) {
  w.validate();
  const ModelConfig& cfg = m.config;
  ForwardState s = forward_core(t, m, batch);
  const TargetMaps<T> targets = build_targets<T>(batch.boxes, cfg.grid, cfg.n_classes);
  LossBundle l;
  l.det = detection_loss(t, s.main, targets, cfg.reg_weight).total;
  l.total = l.det;
  l.align = t.constant(Tensor<T>::scalar(T(0)));
  l.aux = t.constant(Tensor<T>::scalar(T(0)));
  if (m.align) {
    Var dep = encode_depth_feature(t, *m.align, t.constant(batch.depth));
    l.align = align_loss(t, s.camera_features, dep, m.align->tau, m.align->symmetric);
    l.total = ops::add(t, l.total, ops::scale(t, l.align, static_cast<T>(w.align)));
  }
  if (m.aux) {
    l.aux = detection_loss(t, aux_forward(t, *m.aux, s.camera_bev), targets, cfg.reg_weight).total;
    l.total = ops::add(t, l.total, ops::scale(t, l.aux, static_cast<T>(w.aux)));
  }
  return l;
}

/// Detections for every sample of the batch. When `touched` is given it
/// receives the parameters the pass read.
template <class T>
std::vector<std::vector<Box3D>> forward_infer(const Model<T>& m, const Batch<T>& batch,
                                              std::vector<ParamRef>* touched = nullptr) {
  Tape<T> t(&m.store, false);
  const ForwardState s = forward_core(t, m, batch);
  if (touched) *touched = t.touched();
  std::vector<std::vector<Box3D>> out;
  for (int b = 0; b < batch.size; ++b) {
    out.push_back(decode_detections(t.value(s.main.heatmap), t.value(s.main.reg), m.config.grid, m.config.k_max,
                                    m.config.score_thresh, b));
  }
  return out;
}

template <class T>
std::vector<Box3D> forward_infer(const Model<T>& m, const PreparedSample<T>& sample,
                                 std::vector<ParamRef>* touched = nullptr) {
  return forward_infer(m, make_batch(sample), touched).front();
}

}  // namespace fusion4ca
