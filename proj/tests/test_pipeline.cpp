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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fusion4ca/cli/run.hpp"
#include "fusion4ca/pipeline/checkpoint.hpp"
#include "fusion4ca/pipeline/data.hpp"
#include "fusion4ca/pipeline/train.hpp"

namespace fusion4ca {
namespace {

RunConfig base_config() {
  RunConfig rc;
  rc.set("data.n_train", "2");
  rc.set("data.n_val", "1");
  return rc;
}

template <class T>
const std::vector<PreparedSample<T>>& samples() {
  static const std::vector<PreparedSample<T>> s = [] {
    const RunConfig rc = base_config();
    return prepare_samples<T>(generate_split(rc, Split::kTrain), model_config(rc));
  }();
  return s;
}

template <class T>
Batch<T> pair_batch() {
  const auto& s = samples<T>();
  std::vector<const PreparedSample<T>*> p = {&s[0], &s[1]};
  return make_batch<T>(p);
}

template <class T>
Model<T> model_with(std::initializer_list<std::pair<const char*, const char*>> sets) {
  RunConfig rc = base_config();
  for (const auto& [k, v] : sets) rc.set(k, v);
  return build_model<T>(model_config(rc));
}

template <class T>
void randomize(ParamStore<T>& store, const std::string& group, std::uint64_t seed, double sd = 0.2) {
  for (auto& p : store.all()) {
    if (!group.empty() && p.group != group) continue;
    Rng rng = make_rng(seed, p.name);
    for (auto& v : p.value.values()) v = static_cast<T>(normal(rng, 0.0, sd));
  }
}

std::vector<std::vector<Box3D>> infer(const Model<float>& m, const Batch<float>& b) { return forward_infer(m, b); }

bool same_boxes(const std::vector<std::vector<Box3D>>& a, const std::vector<std::vector<Box3D>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return false;
    for (std::size_t k = 0; k < a[i].size(); ++k) {
      const Box3D &x = a[i][k], &y = b[i][k];
      if (x.center != y.center || x.size != y.size || x.yaw != y.yaw || x.score != y.score || x.class_id != y.class_id) {
        return false;
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------- forward_train

TEST(ForwardTrain, TotalIsWeightedSumOfComponents) {
  Model<double> m = model_with<double>({});
  randomize(m.store, "adapter", 4);
  const Batch<double> b = pair_batch<double>();
  for (const LossWeights w : {LossWeights{0.1, 0.5}, LossWeights{0.37, 1.9}, LossWeights{2.0, 0.0}}) {
    Tape<double> t(&m.store);
    const LossBundle l = forward_train(t, m, b, w);
    const double det = t.value(l.det).item(), al = t.value(l.align).item(), aux = t.value(l.aux).item();
    EXPECT_GT(al, 0.0);
    EXPECT_GT(aux, 0.0);
    const double expected = det + w.align * al + w.aux * aux;
    EXPECT_NEAR(t.value(l.total).item(), expected, 1e-7 * std::abs(expected));
  }
}

TEST(ForwardTrain, ZeroWeightsGiveDetectionLossExactly) {
  const Model<double> m = model_with<double>({});
  Tape<double> t(&m.store);
  const LossBundle l = forward_train(t, m, pair_batch<double>(), LossWeights{0.0, 0.0});
  EXPECT_EQ(t.value(l.total).item(), t.value(l.det).item());
}

TEST(ForwardTrain, SingleSampleBatchHasZeroAlignLoss) {
  const Model<float> m = model_with<float>({});
  Tape<float> t(&m.store);
  const LossBundle l = forward_train(t, m, make_batch(samples<float>()[0]), m.config.weights);
  EXPECT_EQ(t.value(l.align).item(), 0.0f);
}

TEST(ForwardTrain, NegativeWeightRejected) {
  const Model<float> m = model_with<float>({});
  Tape<float> t(&m.store);
  EXPECT_THROW(forward_train(t, m, pair_batch<float>(), LossWeights{-0.1, 0.5}), std::invalid_argument);
}

// ---------------------------------------------------------------- forward_infer

TEST(ForwardInfer, TrainingOnlyTogglesAreBitIdentical) {
  const Batch<float> b = pair_batch<float>();
  Model<float> full = model_with<float>({{"detect.score_thresh", "0.0"}});
  randomize(full.store, "", 9);
  const auto ref = infer(full, b);
  ASSERT_FALSE(ref[0].empty());
  for (auto [al, aux] : {std::pair{"false", "false"}, {"true", "false"}, {"false", "true"}}) {
    Model<float> m = model_with<float>({{"detect.score_thresh", "0.0"}, {"align.enabled", al}, {"auxbranch.enabled", aux}});
    for (const auto& p : m.store.all()) m.store[*m.store.find(p.name)].value = full.store[*full.store.find(p.name)].value;
    EXPECT_TRUE(same_boxes(infer(m, b), ref)) << al << " " << aux;
  }
}

TEST(ForwardInfer, NeverReadsTrainingOnlyLeaves) {
  const Model<float> m = model_with<float>({});
  std::vector<ParamRef> touched;
  forward_infer(m, pair_batch<float>(), &touched);
  std::size_t inference_leaves = 0;
  for (const auto& p : m.store.all()) inference_leaves += p.inference;
  EXPECT_EQ(touched.size(), inference_leaves);
  for (ParamRef r : touched) {
    EXPECT_TRUE(m.store[r].inference) << m.store[r].name;
    EXPECT_NE(m.store[r].group, "align");
    EXPECT_NE(m.store[r].group, "aux");
  }
}

TEST(ForwardInfer, PerturbingTrainingOnlyLeavesChangesNothing) {
  Model<float> m = model_with<float>({{"detect.score_thresh", "0.0"}});
  const Batch<float> b = pair_batch<float>();
  const auto ref = infer(m, b);
  randomize(m.store, "align", 1, 5.0);
  randomize(m.store, "aux", 2, 5.0);
  EXPECT_TRUE(same_boxes(infer(m, b), ref));
}

TEST(ForwardInfer, ZeroInputsAreFiniteAndDeterministic) {
  const Model<float> m = model_with<float>({});
  PreparedSample<float> s = samples<float>()[0];
  s.images.fill(0.0f);
  PointCloud empty;
  s.pillars = prepare_pillars<float>({&empty}, m.config.pillar);
  const auto a = forward_infer(m, s), b = forward_infer(m, s);
  EXPECT_TRUE(same_boxes({a}, {b}));
  for (const Box3D& box : a) {
    EXPECT_TRUE(box.center.allFinite() && box.size.allFinite() && std::isfinite(box.yaw) && std::isfinite(box.score));
  }
}

TEST(ForwardInfer, RepeatedCallsAgree) {
  Model<float> m = model_with<float>({{"detect.score_thresh", "0.0"}});
  randomize(m.store, "", 3);
  const Batch<float> b = pair_batch<float>();
  EXPECT_TRUE(same_boxes(infer(m, b), infer(m, b)));
}

// ---------------------------------------------------------------- count_params

TEST(CountParams, InferenceCountIgnoresTrainingOnlyModules) {
  const Model<float> full = model_with<float>({});
  const Model<float> lean = model_with<float>({{"align.enabled", "false"}, {"auxbranch.enabled", "false"}});
  EXPECT_EQ(count_params(full.store, CountMode::kInference), count_params(lean.store, CountMode::kInference));
  EXPECT_GT(count_params(full.store, CountMode::kTraining), count_params(full.store, CountMode::kInference));
  EXPECT_EQ(count_params(lean.store, CountMode::kTraining), count_params(lean.store, CountMode::kInference));
}

TEST(CountParams, OverheadMatchesShapeArithmetic) {
  const int C = 16, h = C / 4, m = C / 8;
  // adapter: LN 2C, two scales, down Ch+h, depthwise 3x3/5x5/7x7 with biases, pointwise h*h+h, up hC+C
  const std::size_t adapter = 2 * C + 2 + (C * h + h) + (83 * h + 3 * h) + (h * h + h) + (h * C + C);
  // coordatt: shared 1x1 C->m, norm affine, conv_h and conv_w m->C
  const std::size_t coordatt = (C * m + m) + 2 * m + 2 * (m * C + C);
  const Model<float> model = model_with<float>({});
  const Model<float> plain = model_with<float>({{"adapter.enabled", "false"}, {"coordatt.enabled", "false"}});
  const cli::ParamSummary s = cli::summarize_params(model.store);
  EXPECT_EQ(s.adapter, 2 * adapter);
  EXPECT_EQ(s.coordatt, coordatt);
  EXPECT_EQ(s.inference, count_params(plain.store, CountMode::kInference) + 2 * adapter + coordatt);
  EXPECT_DOUBLE_EQ(s.overhead(), static_cast<double>(2 * adapter + coordatt) /
                                     static_cast<double>(count_params(plain.store, CountMode::kInference)));
}

TEST(ModelParams, LeafTagsFollowModuleRoles) {
  const Model<float> m = model_with<float>({});
  for (const auto& p : m.store.all()) {
    const bool training_only = p.group == "align" || p.group == "aux";
    EXPECT_EQ(p.inference, !training_only) << p.name;
    EXPECT_TRUE(p.trainable);
  }
}

// ---------------------------------------------------------------- freeze mask

TEST(FreezeMask, DeltaFreezesCameraConvsOnlyAndFullRestores) {
  Model<float> m = model_with<float>({});
  apply_freeze_mask(m.store, FreezeMode::kDelta);
  apply_freeze_mask(m.store, FreezeMode::kDelta);
  for (const auto& p : m.store.all()) EXPECT_EQ(p.trainable, p.group != "camera") << p.name;
  apply_freeze_mask(m.store, FreezeMode::kFull);
  for (const auto& p : m.store.all()) EXPECT_TRUE(p.trainable) << p.name;
  EXPECT_THROW(freeze_mode_from_string("partial"), ConfigError);
}

TEST(FreezeMask, DeltaStepLeavesCameraBitUnchangedAndMovesAdapters) {
  Model<float> m = model_with<float>({});
  apply_freeze_mask(m.store, FreezeMode::kDelta);
  TrainOptions opt;
  TrainState<float> st = init_train_state(m.store, 1);
  const Batch<float> b = pair_batch<float>();
  train_step(m, st, b, opt);  // warm-up: moves the zero-initialized up projections off zero
  const ParamStore<float> before = m.store;
  std::vector<Tensor<float>> grads;
  train_step(m, st, b, opt, &grads);
  std::size_t adapters = 0, changed = 0;
  for (std::size_t i = 0; i < m.store.size(); ++i) {
    const auto& p = m.store.at(i);
    if (p.group == "camera") {
      EXPECT_TRUE(p.value == before.at(i).value) << p.name;
      for (float g : grads[i].values()) ASSERT_EQ(g, 0.0f) << p.name;
    }
    if (p.group == "adapter") {
      ++adapters;
      changed += !(p.value == before.at(i).value);
    }
  }
  ASSERT_GT(adapters, 0u);
  EXPECT_GE(static_cast<double>(changed) / adapters, 0.95);
}

TEST(FreezeMask, FreezingEverythingLeavesParamsUnchanged) {
  Model<float> m = model_with<float>({});
  for (auto& p : m.store.all()) p.trainable = false;
  const ParamStore<float> before = m.store;
  TrainState<float> st = init_train_state(m.store, 1);
  train_step(m, st, pair_batch<float>(), TrainOptions{});
  for (std::size_t i = 0; i < m.store.size(); ++i) EXPECT_TRUE(m.store.at(i).value == before.at(i).value);
}

// ---------------------------------------------------------------- training

TEST(Train, FiftyStepsOnFixedBatchReduceLoss) {
  Model<float> m = model_with<float>({});
  TrainOptions opt;
  opt.steps = 50;
  TrainState<float> st = init_train_state(m.store, 1);
  const Batch<float> b = pair_batch<float>();
  std::vector<double> loss;
  for (int i = 0; i < opt.steps; ++i) loss.push_back(train_step(m, st, b, opt).loss.total);
  double prev = INFINITY;
  for (int i = 9; i < opt.steps; ++i) {
    const double avg = std::accumulate(loss.begin() + i - 9, loss.begin() + i + 1, 0.0) / 10;
    EXPECT_LT(avg, prev) << "moving average rose at step " << i;
    prev = avg;
  }
}

TEST(Train, SameSeedGivesIdenticalTrajectory) {
  auto run = [] {
    Model<float> m = model_with<float>({});
    TrainOptions opt;
    opt.steps = 6;
    TrainState<float> st = init_train_state(m.store, 5);
    std::string csv;
    train_loop(m, st, samples<float>(), opt, csv);
    return csv;
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, CosineScheduleEndpoints) {
  EXPECT_EQ(cosine_lr(0.01, 0, 100), 0.01);
  EXPECT_NEAR(cosine_lr(0.01, 50, 100), 0.005, 1e-15);
  EXPECT_NEAR(cosine_lr(0.01, 100, 100), 0.0, 1e-18);
}

TEST(Train, NonFiniteLossNamesComponent) {
  Model<float> m = model_with<float>({});
  for (auto& p : m.store.all()) {
    if (p.group == "head") p.value.fill(std::numeric_limits<float>::quiet_NaN());
  }
  TrainState<float> st = init_train_state(m.store, 1);
  try {
    train_step(m, st, pair_batch<float>(), TrainOptions{});
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_NE(std::string(e.what()).find("L_det"), std::string::npos) << e.what();
  }
}

// ---------------------------------------------------------------- checkpoints

TEST(Checkpoint, RoundTripIsBitExact) {
  Model<float> m = model_with<float>({});
  TrainOptions opt;
  opt.steps = 3;
  TrainState<float> st = init_train_state(m.store, 1);
  std::string csv;
  train_loop(m, st, samples<float>(), opt, csv);
  const RunConfig rc = base_config();
  const std::string bytes = encode_checkpoint(rc, m.store, st);
  const Checkpoint<float> c = decode_checkpoint<float>(bytes);
  EXPECT_EQ(encode_checkpoint(c.config, c.store, c.state), bytes);
  EXPECT_TRUE(c.state == st);
  ASSERT_EQ(c.store.size(), m.store.size());
  for (std::size_t i = 0; i < m.store.size(); ++i) {
    EXPECT_EQ(c.store.at(i).name, m.store.at(i).name);
    EXPECT_TRUE(c.store.at(i).value == m.store.at(i).value);
    EXPECT_EQ(c.store.at(i).inference, m.store.at(i).inference);
  }
  EXPECT_EQ(c.config.snapshot(), rc.snapshot());
}

TEST(Checkpoint, ResumeReproducesLossTrajectory) {
  TrainOptions opt;
  opt.steps = 8;
  Model<float> a = model_with<float>({});
  TrainState<float> sa = init_train_state(a.store, 2);
  std::string full;
  train_loop(a, sa, samples<float>(), opt, full);

  Model<float> b = model_with<float>({});
  TrainState<float> sb = init_train_state(b.store, 2);
  std::string head;
  std::string blob;
  train_loop(b, sb, samples<float>(), opt, head, [&](std::int64_t step, const StepReport&) {
    if (step == 3) blob = encode_checkpoint(base_config(), b.store, sb);
  });
  ASSERT_FALSE(blob.empty());
  Checkpoint<float> c = decode_checkpoint<float>(blob);
  Model<float> r = model_with<float>({});
  restore_params(r.store, c.store);
  std::string tail;
  train_loop(r, c.state, samples<float>(), opt, tail);
  EXPECT_EQ(cli::truncate_loss_csv(loss_csv_header() + full, 3) + tail, loss_csv_header() + full);
  for (std::size_t i = 0; i < a.store.size(); ++i) EXPECT_TRUE(a.store.at(i).value == r.store.at(i).value);
}

TEST(Checkpoint, CorruptFilesRaiseDocumentedErrors) {
  const Model<float> m = model_with<float>({});
  const std::string good = encode_checkpoint(base_config(), m.store, init_train_state(m.store, 1));
  auto error_of = [](const std::string& bytes) -> std::string {
    try {
      decode_checkpoint<float>(bytes, "t.ckpt");
    } catch (const CheckpointError& e) {
      return e.what();
    }
    return "";
  };
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_NE(error_of(bad_magic).find("bad magic"), std::string::npos);
  std::string bad_version = good;
  bad_version[8] = 7;
  EXPECT_NE(error_of(bad_version).find("format_version 7"), std::string::npos);
  EXPECT_NE(error_of(good.substr(0, good.size() / 2)), "");
  EXPECT_NE(error_of(good.substr(0, 10)), "");
  EXPECT_NE(error_of(good + "x").find("trailing"), std::string::npos);
  EXPECT_THROW(decode_checkpoint<double>(good), CheckpointError);
  EXPECT_THROW(load_checkpoint<float>("/nonexistent/x.ckpt"), CheckpointError);
}

TEST(Checkpoint, RestoreRejectsMismatchedModel) {
  const Model<float> full = model_with<float>({});
  Model<float> lean = model_with<float>({{"auxbranch.enabled", "false"}});
  EXPECT_THROW(restore_params(lean.store, full.store), CheckpointError);
}

// ---------------------------------------------------------------- config

TEST(Config, ParsesCommentsAndRejectsUnknownKeys) {
  const RunConfig rc = RunConfig::from_text("# comment\ntrain.steps = 12  # trailing\n\ntrain.lr=0.5\n");
  EXPECT_EQ(rc.integer("train.steps"), 12);
  EXPECT_EQ(rc.real("train.lr"), 0.5);
  EXPECT_EQ(rc.str("freeze.mode"), "full");
  EXPECT_THROW(RunConfig::from_text("train.stepz = 3\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_text("no equals sign\n"), ConfigError);
  RunConfig o;
  EXPECT_THROW(o.apply_override("train.steps"), ConfigError);
  o.apply_override("train.steps=7");
  EXPECT_EQ(o.integer("train.steps"), 7);
  o.set("train.steps", "seven");
  EXPECT_THROW(o.integer("train.steps"), ConfigError);
}

TEST(Config, EveryKeyHasDefaultAndSnapshotRoundTrips) {
  RunConfig rc;
  rc.set("align.tau", "0.2");
  const RunConfig back = RunConfig::from_text(rc.snapshot());
  EXPECT_EQ(back.snapshot(), rc.snapshot());
  for (const auto& k : config_keys()) EXPECT_NO_THROW(rc.str(k.key)) << k.key;
}

TEST(Config, ModelConfigValidates) {
  RunConfig rc;
  rc.set("model.channels", "6");
  EXPECT_THROW(model_config(rc), ConfigError);
  rc = RunConfig{};
  rc.set("align.weight", "-1");
  EXPECT_THROW(model_config(rc), ConfigError);
  rc = RunConfig{};
  rc.set("adapter.slots", "9Z");
  EXPECT_THROW(model_config(rc), ConfigError);
}

}  // namespace
}  // namespace fusion4ca
