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
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "fusion4ca/autograd/tape.hpp"
#include "fusion4ca/core/random.hpp"

namespace fusion4ca {

struct GradCheckOptions {
  double step = 1e-5;
  /// Entries checked per tensor; larger tensors are subsampled with a fixed seed.
  std::size_t max_entries = 24;
  /// Denominator floor of the relative error, so entries whose true gradient
  /// is ~0 are judged on absolute error.
  double floor = 1e-6;
  std::uint64_t seed = 11;
};

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<tensor>[<index>]"
};

/// Compares reverse-mode gradients of a scalar function against central finite
/// differences, for every trainable parameter in `store` and every input.
/// `build(tape, input_vars)` must return a scalar Var and must be a pure
/// function of the store values and inputs.
template <class Build>
GradCheckReport check_gradients(const std::string& name, ParamStore<double>& store,
                                std::vector<Tensor<double>> inputs, Build build, GradCheckOptions opts = {}) {
  GradCheckReport report;
  report.name = name;

  auto evaluate = [&]() {
    Tape<double> tape(&store, false);
    std::vector<Var> vars;
    for (const auto& x : inputs) vars.push_back(tape.constant(x));
    return tape.value(build(tape, vars)).item();
  };

  std::vector<Tensor<double>> analytic_params, analytic_inputs;
  {
    Tape<double> tape(&store, true);
    std::vector<Var> vars;
    for (const auto& x : inputs) vars.push_back(tape.input(x));
    Var out = build(tape, vars);
    tape.backward(out);
    for (std::size_t i = 0; i < store.size(); ++i) analytic_params.push_back(tape.param_grad(ParamRef{uint32_t(i)}));
    for (std::size_t i = 0; i < vars.size(); ++i) {
      analytic_inputs.push_back(tape.has_grad(vars[i]) ? tape.grad(vars[i]) : Tensor<double>(inputs[i].shape()));
    }
  }

  Rng rng = make_rng(opts.seed, name);
  auto check_tensor = [&](const std::string& label, Tensor<double>& target, const Tensor<double>& analytic) {
    std::vector<std::size_t> idx(target.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (idx.size() > opts.max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.max_entries);
    }
    for (std::size_t i : idx) {
      const double saved = target[i];
      target[i] = saved + opts.step;
      const double fp = evaluate();
      target[i] = saved - opts.step;
      const double fm = evaluate();
      target[i] = saved;
      const double numeric = (fp - fm) / (2.0 * opts.step);
      const double a = analytic[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.floor});
      ++report.checked;
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        report.worst = label + "[" + std::to_string(i) + "]";
      }
    }
  };

  for (std::size_t p = 0; p < store.size(); ++p) {
    Param<double>& leaf = store.at(p);
    if (!leaf.trainable) continue;
    check_tensor(leaf.name, leaf.value, analytic_params[p]);
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    check_tensor("input" + std::to_string(i), inputs[i], analytic_inputs[i]);
  }
  return report;
}

/// Fixed random probe weights, so a tensor-valued module reduces to a scalar
/// with a generic (non-symmetric) upstream gradient.
inline Tensor<double> probe_weights(const Shape& shape, std::uint64_t seed) {
  Tensor<double> w(shape);
  Rng rng = make_rng(seed, "probe");
  for (auto& v : w.values()) v = normal(rng);
  return w;
}

}  // namespace fusion4ca
