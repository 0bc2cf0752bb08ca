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
#include <nlohmann/json.hpp>
#include <string>

#include "fusion4ca/eval/metrics.hpp"
#include "fusion4ca/synthdata/scene.hpp"

namespace fusion4ca::eval {

inline std::string threshold_key(double t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

/// metrics.json body. Undefined APs are written as null.
inline nlohmann::ordered_json metrics_json(const EvalResult& r, const std::string& config_hash,
                                           const std::string& checkpoint_hash) {
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < r.per_class_ap.size(); ++c) {
    nlohmann::ordered_json row = nlohmann::ordered_json::object();
    for (std::size_t t = 0; t < kDistanceThresholds.size(); ++t) {
      const auto& ap = r.per_class_ap[c][t];
      row[threshold_key(kDistanceThresholds[t])] = ap ? nlohmann::ordered_json(*ap) : nlohmann::ordered_json(nullptr);
    }
    const std::string name = c < synth::kNumClasses ? synth::kClassNames[c] : "class" + std::to_string(c);
    per_class[name] = row;
  }
  return {{"mAP", r.map},
          {"nds_lite", r.nds_lite},
          {"per_class", per_class},
          {"mATE", r.errors.ate},
          {"mASE", r.errors.ase},
          {"mAOE", r.errors.aoe},
          {"num_tp", r.num_tp},
          {"config_hash", config_hash},
          {"checkpoint_hash", checkpoint_hash}};
}

}  // namespace fusion4ca::eval
