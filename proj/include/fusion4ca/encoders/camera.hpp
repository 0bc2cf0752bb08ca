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
#include <sstream>
#include <string>
#include <vector>

#include "fusion4ca/adapter/adapter.hpp"
#include "fusion4ca/autograd/layers.hpp"

namespace fusion4ca {

/// Adapter insertion point: slot A follows the first conv of a stage, slot B
/// the second.
struct AdapterSlot {
  int stage = 0;
  char slot = 'A';
  friend bool operator==(const AdapterSlot&, const AdapterSlot&) = default;
};

/// Parses "2A,2B" style lists (stage index, slot letter).
inline std::vector<AdapterSlot> parse_adapter_slots(const std::string& text) {
  std::vector<AdapterSlot> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item.size() < 2 || (item.back() != 'A' && item.back() != 'B')) {
      throw std::invalid_argument("bad adapter slot '" + item + "' (expected e.g. 2A)");
    }
    std::size_t used = 0;
    const int stage = std::stoi(item.substr(0, item.size() - 1), &used);
    if (used != item.size() - 1 || stage < 0) throw std::invalid_argument("bad adapter slot '" + item + "'");
    out.push_back({stage, item.back()});
  }
  return out;
}

struct CameraEncoderConfig {
  int in_channels = 3;
  std::vector<int> channels = {8, 16, 16};
  std::vector<int> strides = {2, 2, 1};
  bool adapters = true;
  int adapter_r = 4;
  std::vector<AdapterSlot> slots = {{2, 'A'}, {2, 'B'}};

  int out_channels() const { return channels.back(); }
  int stride() const {
    int s = 1;
    for (int v : strides) s *= v;
    return s;
  }
};

struct CameraStage {
  Conv conv1;
  Conv conv2;
  std::optional<Adapter> slot_a;
  std::optional<Adapter> slot_b;
};

struct CameraEncoder {
  CameraEncoderConfig config;
  std::vector<CameraStage> stages;
};

/// Encoder leaves live in group "camera", adapter leaves in group "adapter".
template <class T>
CameraEncoder make_camera_encoder(ParamStore<T>& store, const CameraEncoderConfig& cfg, std::uint64_t seed,
                                  const std::string& prefix = "camera") {
  if (cfg.channels.size() != cfg.strides.size() || cfg.channels.empty()) {
    throw std::invalid_argument("camera encoder needs one stride per stage");
  }
  for (std::size_t s = 1; s < cfg.channels.size(); ++s) {
    if (cfg.channels[s] < cfg.channels[s - 1]) throw std::invalid_argument("camera channels must be non-decreasing");
  }
  for (int st : cfg.strides) {
    if (st != 1 && st != 2) throw std::invalid_argument("camera stage stride must be 1 or 2");
  }
  if (cfg.adapters) {
    for (const auto& slot : cfg.slots) {
      if (slot.stage >= static_cast<int>(cfg.channels.size())) {
        throw std::invalid_argument("adapter slot stage " + std::to_string(slot.stage) + " does not exist");
      }
    }
  }
  CameraEncoder enc{cfg, {}};
  int cin = cfg.in_channels;
  for (std::size_t s = 0; s < cfg.channels.size(); ++s) {
    const std::string stage = prefix + ".stage" + std::to_string(s);
    LeafSpec spec{stage, "camera", true, seed};
    CameraStage st;
    st.conv1 = make_conv(store, spec, "conv1", cin, cfg.channels[s], 3, cfg.strides[s]);
    st.conv2 = make_conv(store, spec, "conv2", cfg.channels[s], cfg.channels[s], 3);
    if (cfg.adapters) {
      for (const auto& slot : cfg.slots) {
        if (slot.stage != static_cast<int>(s)) continue;
        LeafSpec aspec{stage + ".adapter" + slot.slot, "adapter", true, seed};
        auto& target = slot.slot == 'A' ? st.slot_a : st.slot_b;
        if (target) throw std::invalid_argument("adapter slot listed twice");
        target = adapter_init(store, aspec, cfg.channels[s], cfg.adapter_r);
      }
    }
    enc.stages.push_back(std::move(st));
    cin = cfg.channels[s];
  }
  return enc;
}

/// Images [B, 3, H, W] -> features [B, C, H/stride, W/stride].
template <class T>
Var camera_encode(Tape<T>& t, const CameraEncoder& enc, Var image) {
  const Shape& s = t.shape(image);
  const int stride = enc.config.stride();
  if (s[1] != enc.config.in_channels || s[2] % stride != 0 || s[3] % stride != 0) {
    throw ShapeError("camera encoder input " + to_string(s) + " must have " + std::to_string(enc.config.in_channels) +
                     " channels and spatial size divisible by " + std::to_string(stride));
  }
  Var x = image;
  for (const CameraStage& st : enc.stages) {
    x = ops::gelu(t, apply(t, st.conv1, x));
    if (st.slot_a) x = adapter_forward(t, *st.slot_a, x);
    x = ops::gelu(t, apply(t, st.conv2, x));
    if (st.slot_b) x = adapter_forward(t, *st.slot_b, x);
  }
  return x;
}

}  // namespace fusion4ca
