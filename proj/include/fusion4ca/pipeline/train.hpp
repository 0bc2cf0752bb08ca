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
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fusion4ca/pipeline/forward.hpp"

namespace fusion4ca {

/// A loss component became NaN or infinite; what() names it.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Optimizer { kSgd, kAdam };

struct TrainOptions {
  int steps = 2000;
  int batch = 2;
  double lr = 1e-2;
  Optimizer optimizer = Optimizer::kSgd;
  double momentum = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip = 5.0;  // global gradient norm; 0 disables
  std::uint64_t seed = 1;
};

inline TrainOptions train_options(const RunConfig& rc) {
  TrainOptions o;
  o.steps = static_cast<int>(rc.integer("train.steps"));
  o.batch = static_cast<int>(rc.integer("train.batch"));
  o.lr = rc.real("train.lr");
  o.optimizer = rc.choice("train.optimizer", {"sgd", "adam"}) == "adam" ? Optimizer::kAdam : Optimizer::kSgd;
  o.momentum = rc.real("train.momentum");
  o.clip = rc.real("train.clip");
  o.seed = static_cast<std::uint64_t>(rc.integer("train.seed"));
  if (o.steps < 0 || o.batch < 1) throw ConfigError("train.steps must be >= 0 and train.batch >= 1");
  if (!(o.lr >= 0.0) || !(o.clip >= 0.0) || !(o.momentum >= 0.0 && o.momentum < 1.0)) {
    throw ConfigError("train.lr, train.clip must be >= 0 and train.momentum in [0, 1)");
  }
  return o;
}

/// Cosine decay from lr at step 0 to 0 at `steps`.
inline double cosine_lr(double lr, int step, int steps) {
  if (steps <= 0) return lr;
  return 0.5 * lr * (1.0 + std::cos(std::numbers::pi * std::min(step, steps) / steps));
}

struct LossValues {
  double det = 0, align = 0, aux = 0, total = 0;
  friend bool operator==(const LossValues&, const LossValues&) = default;
};

/// Optimizer and sampler state; everything needed to resume bit-exactly.
template <class T>
struct TrainState {
  std::int64_t step = 0;
  std::vector<Tensor<T>> moment1;  // SGD velocity or Adam first moment, one per leaf
  std::vector<Tensor<T>> moment2;  // Adam second moment
  Rng rng;
  std::vector<int> order;          // current epoch permutation
  std::int64_t cursor = 0;         // next position in `order`
  LossValues running;              // exponential moving average, factor 0.9

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

template <class T>
TrainState<T> init_train_state(const ParamStore<T>& store, std::uint64_t seed) {
  TrainState<T> s;
  for (const auto& p : store.all()) {
    s.moment1.emplace_back(p.value.shape());
    s.moment2.emplace_back(p.value.shape());
  }
  s.rng = make_rng(seed, "batch-order");
  return s;
}

/// Draws the next batch of indices; reshuffles at each epoch boundary.
template <class T>
std::vector<int> next_batch(TrainState<T>& s, int n_samples, int batch) {
  if (n_samples <= 0) throw std::invalid_argument("training set is empty");
  std::vector<int> out;
  while (static_cast<int>(out.size()) < batch) {
    if (s.cursor >= static_cast<std::int64_t>(s.order.size())) {
      s.order.resize(n_samples);
      std::iota(s.order.begin(), s.order.end(), 0);
      std::shuffle(s.order.begin(), s.order.end(), s.rng);
      s.cursor = 0;
    }
    out.push_back(s.order[s.cursor++]);
  }
  return out;
}

struct StepReport {
  LossValues loss;
  double lr = 0;
  double grad_norm = 0;
};

/// One optimization step on `batch`. Frozen leaves receive no update. When
/// `grads` is non-null it receives the raw gradient of every leaf.
template <class T>
StepReport train_step(Model<T>& m, TrainState<T>& state, const Batch<T>& batch, const TrainOptions& opt,
                      std::vector<Tensor<T>>* grads = nullptr) {
  ParamStore<T>& store = m.store;
  if (state.moment1.size() != store.size()) throw std::logic_error("train state does not match the model");
  StepReport r;
  r.lr = cosine_lr(opt.lr, static_cast<int>(state.step), opt.steps);
  std::vector<Tensor<T>> g(store.size());
  {
    Tape<T> t(&store);
    const LossBundle l = forward_train(t, m, batch, m.config.weights);
    const std::pair<const char*, Var> parts[] = {{"L_det", l.det}, {"L_align", l.align}, {"L_aux", l.aux}};
    for (const auto& [name, v] : parts) {
      if (!std::isfinite(static_cast<double>(t.value(v).item()))) {
        throw NonFiniteLoss(std::string("non-finite loss component ") + name + " at step " +
                            std::to_string(state.step));
      }
    }
    r.loss = {double(t.value(l.det).item()), double(t.value(l.align).item()), double(t.value(l.aux).item()),
              double(t.value(l.total).item())};
    t.backward(l.total);
    for (std::size_t i = 0; i < store.size(); ++i) g[i] = t.param_grad(ParamRef{static_cast<std::uint32_t>(i)});
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!store.at(i).trainable) continue;
    for (T v : g[i].values()) sq += double(v) * double(v);
  }
  r.grad_norm = std::sqrt(sq);
  if (!std::isfinite(r.grad_norm)) {
    throw NonFiniteLoss("non-finite gradient at step " + std::to_string(state.step));
  }
  const T scale = (opt.clip > 0.0 && r.grad_norm > opt.clip) ? static_cast<T>(opt.clip / r.grad_norm) : T(1);
  const T lr = static_cast<T>(r.lr);
  const double t1 = static_cast<double>(state.step + 1);
  for (std::size_t i = 0; i < store.size(); ++i) {
    Param<T>& p = store.at(i);
    if (!p.trainable) continue;
    T* w = p.value.data();
    T* m1 = state.moment1[i].data();
    T* m2 = state.moment2[i].data();
    const T* gi = g[i].data();
    const std::size_t n = p.value.size();
    if (opt.optimizer == Optimizer::kSgd) {
      const T mu = static_cast<T>(opt.momentum);
      for (std::size_t k = 0; k < n; ++k) {
        m1[k] = mu * m1[k] + scale * gi[k];
        w[k] -= lr * m1[k];
      }
    } else {
      const T b1 = static_cast<T>(opt.momentum), b2 = static_cast<T>(opt.beta2), eps = static_cast<T>(opt.eps);
      const T c1 = static_cast<T>(1.0 - std::pow(opt.momentum, t1)), c2 = static_cast<T>(1.0 - std::pow(opt.beta2, t1));
      for (std::size_t k = 0; k < n; ++k) {
        const T gk = scale * gi[k];
        m1[k] = b1 * m1[k] + (1 - b1) * gk;
        m2[k] = b2 * m2[k] + (1 - b2) * gk * gk;
        w[k] -= lr * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + eps);
      }
    }
  }
  auto ema = [&](double& acc, double v) { acc = state.step == 0 ? v : 0.9 * acc + 0.1 * v; };
  ema(state.running.det, r.loss.det);
  ema(state.running.align, r.loss.align);
  ema(state.running.aux, r.loss.aux);
  ema(state.running.total, r.loss.total);
  ++state.step;
  if (grads) *grads = std::move(g);
  return r;
}

inline std::string loss_csv_header() { return "step,L_det,L_align,L_aux,total\n"; }

inline std::string loss_csv_row(std::int64_t step, const LossValues& l) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(step), l.det, l.align, l.aux,
                l.total);
  return buf;
}

/// Runs steps until state.step == opt.steps, appending one CSV row per step.
/// `on_step` (optional) is called after each step with the new step count.
template <class T>
void train_loop(Model<T>& m, TrainState<T>& state, const std::vector<PreparedSample<T>>& samples,
                const TrainOptions& opt, std::string& csv,
                const std::function<void(std::int64_t, const StepReport&)>& on_step = {}) {
  while (state.step < opt.steps) {
    const std::vector<int> idx = next_batch(state, static_cast<int>(samples.size()), opt.batch);
    std::vector<const PreparedSample<T>*> ptrs;
    for (int i : idx) ptrs.push_back(&samples[i]);
    const Batch<T> batch = make_batch<T>(ptrs);
    const std::int64_t step = state.step;
    const StepReport r = train_step(m, state, batch, opt);
    csv += loss_csv_row(step, r.loss);
    if (on_step) on_step(state.step, r);
  }
}

}  // namespace fusion4ca
