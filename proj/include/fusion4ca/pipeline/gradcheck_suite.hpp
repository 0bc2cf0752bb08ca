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

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fusion4ca/autograd/gradcheck.hpp"
#include "fusion4ca/detect/losses.hpp"
#include "fusion4ca/pipeline/model.hpp"

namespace fusion4ca {

inline constexpr double kGradCheckTolerance = 1e-4;

namespace detail {

inline Tensor<double> random_input(Shape s, std::uint64_t seed, const std::string& stream, double lo = -1.0,
                                   double hi = 1.0) {
  Tensor<double> t(s);
  Rng rng = make_rng(seed, stream);
  for (auto& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

inline void randomize_group(ParamStore<double>& store, const std::string& needle, std::uint64_t seed) {
  for (auto& p : store.all()) {
    if (p.name.find(needle) == std::string::npos) continue;
    Rng rng = make_rng(seed, "randomize." + p.name);
    for (auto& v : p.value.values()) v = normal(rng, 0.0, 0.3);
  }
}

inline Var probe(Tape<double>& t, Var y, std::uint64_t seed) { return ops::dot(t, y, probe_weights(t.shape(y), seed)); }

}  // namespace detail

/// Finite-difference checks of every differentiable module in 64-bit, on
/// small shapes. Zero-initialized adapter up-projections are randomized first
/// so gradients reach every adapter leaf.
inline std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed) {
  using detail::probe;
  using detail::random_input;
  std::vector<GradCheckReport> out;

  {
    ParamStore<double> store;
    const AlignParams a = make_align(store, 8, 0.07, false, seed);
    out.push_back(check_gradients("align.conv_block", store, {random_input({2, 1, 5, 6}, seed, "align.depth", 0, 1)},
                                  [&](Tape<double>& t, auto& v) { return probe(t, encode_depth_feature(t, a, v[0]), seed); }));
  }
  {
    ParamStore<double> store;
    out.push_back(check_gradients("align.loss", store,
                                  {random_input({3, 4, 2, 3}, seed, "align.rgb"), random_input({3, 4, 2, 3}, seed, "align.dep")},
                                  [&](Tape<double>& t, auto& v) { return align_loss(t, v[0], v[1], 0.5, false); }));
    out.push_back(check_gradients("align.loss_symmetric", store,
                                  {random_input({3, 4, 2, 3}, seed, "align.rgb"), random_input({3, 4, 2, 3}, seed, "align.dep")},
                                  [&](Tape<double>& t, auto& v) { return align_loss(t, v[0], v[1], 0.5, true); }));
  }
  {
    ParamStore<double> store;
    const Adapter a = adapter_init(store, LeafSpec{"adapter", "adapter", true, seed}, 8, 4);
    detail::randomize_group(store, ".up.", seed);
    store[a.s2].value.fill(0.5);
    out.push_back(check_gradients("adapter", store, {random_input({2, 8, 5, 6}, seed, "adapter.x")},
                                  [&](Tape<double>& t, auto& v) { return probe(t, adapter_forward(t, a, v[0]), seed); }));
  }
  {
    ParamStore<double> store;
    const CoordAttParams c = make_coordatt(store, 8, 4, seed);
    out.push_back(check_gradients("coordatt", store, {random_input({2, 8, 5, 7}, seed, "coordatt.x")},
                                  [&](Tape<double>& t, auto& v) { return probe(t, coord_att_forward(t, c, v[0]), seed); }));
  }
  {
    ParamStore<double> store;
    const DepthHead h = make_depth_head(store, 8, DepthBins{1.0, 20.0, 6}, seed);
    out.push_back(check_gradients("depth_head", store, {random_input({2, 8, 4, 5}, seed, "depth.x")},
                                  [&](Tape<double>& t, auto& v) { return probe(t, predict_depth_dist(t, h, v[0]), seed); }));
  }
  {
    ParamStore<double> store;
    PillarSpec spec;
    spec.grid = BEVGridSpec{0.0, 8.0, -4.0, 4.0, 1.0, 6};
    spec.embed_width = 6;
    spec.max_points_per_pillar = 4;
    const PillarEncoder enc = make_pillar_encoder(store, spec, seed);
    PointCloud cloud;
    Rng rng = make_rng(seed, "pillar.cloud");
    for (int i = 0; i < 40; ++i) {
      cloud.points.push_back({float(uniform(rng, 0.0, 8.0)), float(uniform(rng, -4.0, 4.0)), float(uniform(rng, -0.5, 1.5)),
                              float(uniform(rng, 0.0, 1.0))});
    }
    auto in = std::make_shared<const PillarInput<double>>(prepare_pillars<double>({&cloud}, spec));
    out.push_back(check_gradients("pillar_encoder", store, {},
                                  [&](Tape<double>& t, auto&) { return probe(t, pillar_encode(t, enc, in), seed); }));
  }
  {
    ParamStore<double> store;
    CameraEncoderConfig cfg;
    cfg.channels = {4, 8, 8};
    const CameraEncoder enc = make_camera_encoder(store, cfg, seed);
    detail::randomize_group(store, ".up.", seed);
    out.push_back(check_gradients("camera_encoder", store, {random_input({1, 3, 8, 12}, seed, "camera.x", 0, 1)},
                                  [&](Tape<double>& t, auto& v) { return probe(t, camera_encode(t, enc, v[0]), seed); }));
  }
  {
    ParamStore<double> store;
    const BEVGridSpec grid{0.0, 8.0, -4.0, 4.0, 1.0, 4};
    LiftTable tab{3, 2, 3, 1, {}};
    Rng rng = make_rng(seed, "lift.table");
    for (int i = 0; i < 3 * 2 * 3; ++i) tab.cell.push_back(static_cast<int>(uniform(rng, -8.0, grid.cells())));
    auto tables = std::make_shared<const std::vector<LiftTable>>(std::vector<LiftTable>{tab});
    out.push_back(check_gradients(
        "lift_splat", store, {random_input({2, 4, 2, 3}, seed, "lift.f"), random_input({2, 3, 2, 3}, seed, "lift.d", 0, 1)},
        [&](Tape<double>& t, auto& v) { return probe(t, lift_splat(t, v[0], v[1], tables, grid), seed); }));
  }
  {
    ParamStore<double> store;
    const HeadParams h = make_head(store, LeafSpec{"head", "head", true, seed}, 4, 2);
    out.push_back(check_gradients("main_head", store, {random_input({1, 4, 5, 5}, seed, "head.x")}, [&](Tape<double>& t, auto& v) {
      const HeadOutput o = head_forward(t, h, v[0]);
      return ops::add(t, probe(t, o.heatmap, seed), probe(t, o.reg, seed + 1));
    }));
  }
  {
    ParamStore<double> store;
    const AuxBranchParams a = make_auxbranch(store, 4, 4, 2, seed);
    out.push_back(check_gradients("aux_branch", store, {random_input({1, 4, 6, 6}, seed, "aux.x")}, [&](Tape<double>& t, auto& v) {
      const HeadOutput o = aux_forward(t, a, v[0]);
      return ops::add(t, probe(t, o.heatmap, seed), probe(t, o.reg, seed + 1));
    }));
  }
  {
    ParamStore<double> store;
    const BEVGridSpec grid{0.0, 8.0, -4.0, 4.0, 1.0, 4};
    std::vector<Box3D> boxes(2);
    boxes[0].center = {2.3, -1.2, 0.3};
    boxes[0].size = {1.5, 1.0, 0.6};
    boxes[1].center = {4.6, 1.4, 0.2};
    boxes[1].class_id = 1;
    const TargetMaps<double> targets = build_targets<double>(boxes, grid, 2);
    out.push_back(check_gradients("focal_loss", store, {random_input({1, 2, 8, 8}, seed, "focal.x", -2, 2)},
                                  [&](Tape<double>& t, auto& v) { return heatmap_focal_loss(t, v[0], targets.heatmap); }));
    out.push_back(check_gradients("reg_loss", store, {random_input({1, 8, 8, 8}, seed, "reg.x")},
                                  [&](Tape<double>& t, auto& v) { return bbox_reg_loss(t, v[0], targets.reg, targets.mask); }));
  }
  return out;
}

inline bool gradcheck_passed(const GradCheckReport& r) {
  return r.checked > 0 && r.max_rel_error < kGradCheckTolerance;
}

}  // namespace fusion4ca
