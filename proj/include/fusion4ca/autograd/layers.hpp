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

#include <cmath>
#include <cstdint>
#include <string>

#include "fusion4ca/autograd/conv.hpp"
#include "fusion4ca/autograd/ops.hpp"
#include "fusion4ca/core/random.hpp"

namespace fusion4ca {

/// Where a leaf lives in the parameter tree and how to initialize it.
struct LeafSpec {
  std::string prefix;
  std::string group;
  bool inference = true;
  std::uint64_t seed = 0;
};

enum class Init { kHeNormal, kZeros, kOnes };

template <class T>
ParamRef add_leaf(ParamStore<T>& store, const LeafSpec& spec, const std::string& name, Shape shape, Init init,
                  double fan_in = 1.0) {
  const std::string full = spec.prefix + "." + name;
  Tensor<T> value(shape);
  if (init == Init::kOnes) {
    value.fill(T(1));
  } else if (init == Init::kHeNormal) {
    Rng rng = make_rng(spec.seed, full);
    const double stddev = std::sqrt(2.0 / fan_in);
    for (auto& v : value.values()) v = static_cast<T>(normal(rng, 0.0, stddev));
  }
  return store.add(full, spec.group, std::move(value), spec.inference);
}

template <class T>
ParamRef add_bias(ParamStore<T>& store, const LeafSpec& spec, const std::string& name, int channels, double fan_in) {
  const std::string full = spec.prefix + "." + name;
  Tensor<T> value({1, channels, 1, 1});
  Rng rng = make_rng(spec.seed, full);
  const double bound = 1.0 / std::sqrt(fan_in);
  for (auto& v : value.values()) v = static_cast<T>(uniform(rng, -bound, bound));
  return store.add(full, spec.group, std::move(value), spec.inference);
}

struct Conv {
  ParamRef weight;
  ParamRef bias;
  ops::ConvOptions options;
};

template <class T>
Conv make_conv(ParamStore<T>& store, const LeafSpec& spec, const std::string& name, int cin, int cout, int k,
               int stride = 1, Init init = Init::kHeNormal) {
  const double fan_in = static_cast<double>(cin) * k * k;
  Conv c;
  c.weight = add_leaf(store, spec, name + ".weight", {cout, cin, k, k}, init, fan_in);
  c.bias = init == Init::kZeros ? add_leaf(store, spec, name + ".bias", {1, cout, 1, 1}, Init::kZeros)
                                : add_bias(store, spec, name + ".bias", cout, fan_in);
  c.options = {stride, k / 2, false};
  return c;
}

template <class T>
Conv make_depthwise(ParamStore<T>& store, const LeafSpec& spec, const std::string& name, int channels, int k) {
  const double fan_in = static_cast<double>(k) * k;
  Conv c;
  c.weight = add_leaf(store, spec, name + ".weight", {channels, 1, k, k}, Init::kHeNormal, fan_in);
  c.bias = add_bias(store, spec, name + ".bias", channels, fan_in);
  c.options = {1, k / 2, true};
  return c;
}

template <class T>
Var apply(Tape<T>& t, const Conv& c, Var x) {
  return ops::conv2d(t, x, t.param(c.weight), t.param(c.bias), c.options);
}

/// Channel layer norm (per spatial location) with affine parameters.
struct ChannelNorm {
  ParamRef gamma;
  ParamRef beta;
};

template <class T>
ChannelNorm make_norm(ParamStore<T>& store, const LeafSpec& spec, const std::string& name, int channels) {
  return {add_leaf(store, spec, name + ".gamma", {1, channels, 1, 1}, Init::kOnes),
          add_leaf(store, spec, name + ".beta", {1, channels, 1, 1}, Init::kZeros)};
}

template <class T>
Var apply(Tape<T>& t, const ChannelNorm& n, Var x) {
  return ops::layer_norm_channels(t, x, t.param(n.gamma), t.param(n.beta));
}

}  // namespace fusion4ca
