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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fusion4ca/cli/render.hpp"
#include "fusion4ca/eval/json.hpp"
#include "fusion4ca/eval/metrics.hpp"
#include "fusion4ca/pipeline/checkpoint.hpp"
#include "fusion4ca/pipeline/data.hpp"
#include "fusion4ca/pipeline/gradcheck_suite.hpp"

namespace fusion4ca::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c = {"synth", "train", "eval", "gradcheck", "ablate", "report"};
  return c;
}

/// Failure attributed to a module, reported as "[module] message".
class ModuleError : public std::runtime_error {
 public:
  ModuleError(std::string module, const std::string& what)
      : std::runtime_error("[" + module + "] " + what), module_(std::move(module)) {}
  const std::string& module() const { return module_; }

 private:
  std::string module_;
};

using Model32 = Model<float>;

inline std::filesystem::path out_dir(const RunConfig& cfg) { return cfg.str("out.dir"); }

inline void write_snapshot(const RunConfig& cfg) {
  io::write_file(out_dir(cfg) / "config.txt", cfg.snapshot());
  io::write_file(out_dir(cfg) / "config.hash", cfg.hash() + "\n");
}

inline std::filesystem::path checkpoint_path(const RunConfig& cfg) {
  const std::string& p = cfg.str("eval.checkpoint");
  return p.empty() ? out_dir(cfg) / "checkpoints" / "final.ckpt" : std::filesystem::path(p);
}

/// Model built from the checkpoint's own config; decode settings come from
/// `cfg` so they can be changed at evaluation time.
inline Model32 model_from_checkpoint(const Checkpoint<float>& ckpt, const RunConfig& cfg) {
  ModelConfig mc = model_config(ckpt.config);
  mc.k_max = static_cast<int>(cfg.integer("detect.k_max"));
  mc.score_thresh = cfg.real("detect.score_thresh");
  Model32 m = build_model<float>(mc);
  restore_params(m.store, ckpt.store);
  return m;
}

inline std::vector<eval::Frame> predict(const Model32& m, const std::vector<PreparedSample<float>>& samples) {
  std::vector<eval::Frame> frames;
  for (const auto& s : samples) frames.push_back({forward_infer(m, s), s.boxes});
  return frames;
}

// ---------------------------------------------------------------- synth

inline int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  const int n = synthesize_dataset(cfg);
  out << "synth: wrote " << n << " scenes to " << scenes_root(cfg).string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

/// Keeps the header and the rows of an earlier loss.csv with step < `step`.
inline std::string truncate_loss_csv(const std::string& text, std::int64_t step) {
  std::istringstream in(text);
  std::string line, out = loss_csv_header();
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) < step) out += line + "\n";
  }
  return out;
}

struct TrainResult {
  Model32 model;
  TrainState<float> state;
  std::string csv;
};

/// Trains on already prepared samples. `resume` may be null.
inline TrainResult train_model(const RunConfig& cfg, const std::vector<PreparedSample<float>>& samples,
                               const Checkpoint<float>* resume = nullptr,
                               const std::function<void(std::int64_t, const StepReport&, const TrainResult&)>& hook = {}) {
  const TrainOptions opt = train_options(cfg);
  TrainResult r{build_model<float>(model_config(cfg)), {}, loss_csv_header()};
  r.state = init_train_state(r.model.store, opt.seed);
  if (resume) {
    restore_params(r.model.store, resume->store);
    r.state = resume->state;
  }
  apply_freeze_mask(r.model.store, freeze_mode_from_string(cfg.str("freeze.mode")));
  train_loop(r.model, r.state, samples, opt, r.csv, [&](std::int64_t step, const StepReport& rep) {
    if (hook) hook(step, rep, r);
  });
  return r;
}

inline int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const std::filesystem::path dir = out_dir(cfg);
  const ModelConfig mc = model_config(cfg);
  const std::vector<PreparedSample<float>> samples = prepare_samples<float>(load_split(cfg, Split::kTrain), mc);
  std::optional<Checkpoint<float>> resume;
  std::string previous_csv;
  if (!cfg.str("train.resume").empty()) {
    resume = load_checkpoint<float>(cfg.str("train.resume"));
    if (std::filesystem::exists(dir / "loss.csv")) previous_csv = io::read_file(dir / "loss.csv");
  }
  const long long every = cfg.integer("train.checkpoint_every");
  const TrainOptions opt = train_options(cfg);
  TrainResult r = train_model(cfg, samples, resume ? &*resume : nullptr,
                              [&](std::int64_t step, const StepReport& rep, const TrainResult& cur) {
                                if (every > 0 && step % every == 0) {
                                  save_checkpoint(dir / "checkpoints" / ("step_" + std::to_string(step) + ".ckpt"), cfg,
                                                  cur.model.store, cur.state);
                                }
                                if (step % 100 == 0 || step == opt.steps) {
                                  char buf[160];
                                  std::snprintf(buf, sizeof buf, "step %lld/%d  lr %.2e  L_det %.4f  L_align %.4f  L_aux %.4f\n",
                                                static_cast<long long>(step), opt.steps, rep.lr, cur.state.running.det,
                                                cur.state.running.align, cur.state.running.aux);
                                  out << buf << std::flush;
                                }
                              });
  std::string csv = r.csv;
  if (resume) {
    const std::int64_t start = resume->state.step;
    csv = truncate_loss_csv(previous_csv, start) + r.csv.substr(loss_csv_header().size());
  }
  io::write_file(dir / "loss.csv", csv);
  save_checkpoint(dir / "checkpoints" / "final.ckpt", cfg, r.model.store, r.state);
  out << "train: " << r.state.step << " steps, checkpoint " << (dir / "checkpoints" / "final.ckpt").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval

inline int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const auto path = checkpoint_path(cfg);
  std::string bytes;
  try {
    bytes = io::read_file(path);
  } catch (const io::FileError& e) {
    throw CheckpointError(e.what());
  }
  const Checkpoint<float> ckpt = decode_checkpoint<float>(bytes, path.string());
  const Model32 m = model_from_checkpoint(ckpt, cfg);
  const Split split = split_from_string(cfg.str("eval.split"));
  const auto samples = prepare_samples<float>(load_split(cfg, split), m.config);
  const eval::EvalResult r = eval::evaluate(predict(m, samples), m.config.n_classes);
  io::write_file(out_dir(cfg) / "metrics.json", eval::metrics_json(r, cfg.hash(), io::git_hash(bytes)).dump(2) + "\n");
  char buf[200];
  std::snprintf(buf, sizeof buf, "eval (%s, %zu scenes): mAP %.4f  NDS-lite %.4f  mATE %.3f  mASE %.3f  mAOE %.3f\n",
                cfg.str("eval.split").c_str(), samples.size(), r.map, r.nds_lite, r.errors.ate, r.errors.ase,
                r.errors.aoe);
  out << buf;
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

inline int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
  const auto reports = run_gradcheck_suite(static_cast<std::uint64_t>(cfg.integer("gradcheck.seed")));
  std::string csv = "module,checked,max_rel_error,worst,pass\n";
  bool ok = true;
  out << std::left << std::setw(24) << "module" << std::setw(10) << "checked" << std::setw(16) << "max_rel_error"
      << "status\n";
  for (const auto& r : reports) {
    const bool pass = gradcheck_passed(r);
    ok = ok && pass;
    char err[32];
    std::snprintf(err, sizeof err, "%.3e", r.max_rel_error);
    out << std::left << std::setw(24) << r.name << std::setw(10) << r.checked << std::setw(16) << err
        << (pass ? "ok" : "FAIL") << "\n";
    csv += r.name + "," + std::to_string(r.checked) + "," + err + "," + r.worst + "," + (pass ? "1" : "0") + "\n";
  }
  io::write_file(out_dir(cfg) / "gradcheck.csv", csv);
  if (!ok) out << "gradcheck: at least one module exceeds " << kGradCheckTolerance << "\n";
  return ok ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- ablate

inline const std::vector<std::string>& ablation_components() {
  static const std::vector<std::string> c = {"align", "auxbranch", "coordatt", "adapter"};
  return c;
}

struct AblationRow {
  std::string name;
  std::map<std::string, bool> enabled;  // component -> on/off
};

inline std::string row_name(std::size_t index) {
  std::string n = std::to_string(index + 1);
  return n.size() < 2 ? "0" + n : n;
}

/// The seven component combinations of the reference ablation, in order.
inline std::vector<AblationRow> table_rows() {
  const std::vector<std::vector<std::string>> on = {{},
                                                    {"align"},
                                                    {"auxbranch"},
                                                    {"coordatt"},
                                                    {"align", "auxbranch"},
                                                    {"align", "auxbranch", "coordatt"},
                                                    {"align", "auxbranch", "coordatt", "adapter"}};
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < on.size(); ++i) {
    AblationRow r;
    r.name = row_name(i);
    for (const auto& c : ablation_components()) r.enabled[c] = std::find(on[i].begin(), on[i].end(), c) != on[i].end();
    rows.push_back(r);
  }
  return rows;
}

/// All 2^k on/off combinations of `components`; other components keep their
/// configured setting.
inline std::vector<AblationRow> grid_rows(const RunConfig& cfg, const std::vector<std::string>& components) {
  std::vector<AblationRow> rows;
  const std::size_t k = components.size();
  for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
    AblationRow r;
    r.name = row_name(mask);
    for (const auto& c : ablation_components()) r.enabled[c] = cfg.boolean(c + ".enabled");
    for (std::size_t i = 0; i < k; ++i) r.enabled[components[i]] = (mask >> i) & 1;
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<AblationRow> ablation_rows(const RunConfig& cfg) {
  const std::string mode = cfg.choice("ablate.rows", {"table", "grid"});
  const std::vector<std::string> comps = cfg.list("ablate.components");
  for (const auto& c : comps) {
    if (std::find(ablation_components().begin(), ablation_components().end(), c) == ablation_components().end()) {
      throw ConfigError("ablate.components: unknown component '" + c + "'");
    }
  }
  if (mode == "table") return table_rows();
  if (comps.empty()) throw ConfigError("ablate.components must name at least one component");
  return grid_rows(cfg, comps);
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct AblationOutcome {
  AblationRow row;
  std::string freeze;
  std::vector<std::uint64_t> seeds;
  std::vector<eval::EvalResult> results;  // one per seed
  double median_map = 0, median_nds = 0;
};

inline std::vector<std::uint64_t> ablation_seeds(const RunConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (const auto& s : cfg.list("ablate.seeds")) {
    try {
      seeds.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw ConfigError("ablate.seeds: '" + s + "' is not an integer");
    }
  }
  if (seeds.empty()) throw ConfigError("ablate.seeds must list at least one seed");
  return seeds;
}

inline RunConfig row_config(const RunConfig& cfg, const AblationRow& row, std::uint64_t seed) {
  RunConfig c = cfg;
  for (const auto& [comp, on] : row.enabled) c.set(comp + ".enabled", on ? "true" : "false");
  if (row.enabled.at("adapter")) c.set("freeze.mode", cfg.str("ablate.adapter_freeze"));
  c.set("train.seed", std::to_string(seed));
  return c;
}

/// Trains every (row, seed) on the train split and scores it on the val split.
inline std::vector<AblationOutcome> run_ablation(const RunConfig& cfg, const std::vector<synth::Scene>& train,
                                                 const std::vector<synth::Scene>& val, std::ostream& log) {
  const ModelConfig base = model_config(cfg);
  const auto train_samples = prepare_samples<float>(train, base);
  const auto val_samples = prepare_samples<float>(val, base);
  std::vector<AblationOutcome> out;
  for (const AblationRow& row : ablation_rows(cfg)) {
    AblationOutcome o{row, row_config(cfg, row, 0).str("freeze.mode"), ablation_seeds(cfg), {}, 0, 0};
    std::vector<double> maps, nds;
    for (std::uint64_t seed : o.seeds) {
      const RunConfig rc = row_config(cfg, row, seed);
      const TrainResult tr = train_model(rc, train_samples);
      o.results.push_back(eval::evaluate(predict(tr.model, val_samples), tr.model.config.n_classes));
      maps.push_back(o.results.back().map);
      nds.push_back(o.results.back().nds_lite);
      char buf[120];
      std::snprintf(buf, sizeof buf, "ablate row %s seed %llu: mAP %.4f NDS-lite %.4f\n", row.name.c_str(),
                    static_cast<unsigned long long>(seed), maps.back(), nds.back());
      log << buf << std::flush;
    }
    o.median_map = median(maps);
    o.median_nds = median(nds);
    out.push_back(std::move(o));
  }
  return out;
}

inline std::string ablation_csv(const std::vector<AblationOutcome>& rows) {
  std::string csv = "order";
  for (const auto& c : ablation_components()) csv += "," + c;
  csv += ",freeze,mAP,nds_lite,mATE,mASE,mAOE,seeds,mAP_per_seed\n";
  for (const auto& o : rows) {
    std::vector<double> ate, ase, aoe;
    std::string per_seed, seeds;
    for (std::size_t i = 0; i < o.results.size(); ++i) {
      ate.push_back(o.results[i].errors.ate);
      ase.push_back(o.results[i].errors.ase);
      aoe.push_back(o.results[i].errors.aoe);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%s%.4f", i ? ";" : "", o.results[i].map);
      per_seed += buf;
      seeds += (i ? ";" : "") + std::to_string(o.seeds[i]);
    }
    char buf[200];
    std::snprintf(buf, sizeof buf, ",%.4f,%.4f,%.4f,%.4f,%.4f,", o.median_map, o.median_nds, median(ate), median(ase),
                  median(aoe));
    csv += o.row.name;
    for (const auto& c : ablation_components()) csv += o.row.enabled.at(c) ? ",1" : ",0";
    csv += "," + o.freeze + buf + seeds + "," + per_seed + "\n";
  }
  return csv;
}

inline int cmd_ablate(const RunConfig& cfg, std::ostream& out) {
  const auto rows = run_ablation(cfg, load_split(cfg, Split::kTrain), load_split(cfg, Split::kVal), out);
  io::write_file(out_dir(cfg) / "ablation.csv", ablation_csv(rows));
  out << "ablate: wrote " << rows.size() << " rows to " << (out_dir(cfg) / "ablation.csv").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- report

struct ParamSummary {
  std::size_t inference = 0;
  std::size_t training = 0;
  std::size_t adapter = 0;
  std::size_t coordatt = 0;
  /// (adapter + coordatt) relative to the inference model without them.
  double overhead() const {
    const double base = static_cast<double>(inference - adapter - coordatt);
    return base > 0 ? static_cast<double>(adapter + coordatt) / base : 0.0;
  }
};

template <class T>
ParamSummary summarize_params(const ParamStore<T>& store) {
  return {count_params(store, CountMode::kInference), count_params(store, CountMode::kTraining),
          count_group(store, "adapter"), count_group(store, "coordatt")};
}

inline std::vector<std::vector<double>> parse_loss_csv(const std::string& text) {
  std::vector<std::vector<double>> cols(4);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    for (auto& col : cols) {
      if (!std::getline(ss, cell, ',')) throw std::runtime_error("malformed loss.csv row: " + line);
      col.push_back(std::stod(cell));
    }
  }
  return cols;
}

inline int cmd_report(const RunConfig& cfg, std::ostream& out) {
  const std::filesystem::path dir = out_dir(cfg), plots = dir / "plots";
  const auto cols = parse_loss_csv(io::read_file(dir / "loss.csv"));
  const render::Canvas curve = render::line_plot({{cols[3], {0, 0, 0}},
                                                  {cols[0], {30, 90, 220}},
                                                  {cols[1], {220, 120, 20}},
                                                  {cols[2], {30, 160, 60}}});
  io::write_file(plots / "loss.ppm", curve.ppm());
  const auto path = checkpoint_path(cfg);
  const Checkpoint<float> ckpt = load_checkpoint<float>(path);
  const Model32 m = model_from_checkpoint(ckpt, cfg);
  Split split = split_from_string(cfg.str("eval.split"));
  if (split_size(cfg, split) == 0) split = Split::kTrain;
  const auto scenes = load_split(cfg, split);
  const int n = std::min<int>(static_cast<int>(cfg.integer("report.scenes")), static_cast<int>(scenes.size()));
  for (int i = 0; i < n; ++i) {
    const auto preds = forward_infer(m, prepare_sample<float>(scenes[i], m.config));
    const render::Canvas c = render::bev_overlay(m.config.grid, scenes[i].cloud, scenes[i].boxes, preds);
    io::write_file(plots / ("bev_" + scenes[i].scene_id + ".ppm"), c.ppm());
  }
  const ParamSummary p = summarize_params(m.store);
  char buf[400];
  std::snprintf(buf, sizeof buf,
                "inference_params %zu\ntraining_params %zu\nadapter_params %zu\ncoordatt_params %zu\n"
                "inference_overhead %.4f%%\n",
                p.inference, p.training, p.adapter, p.coordatt, 100.0 * p.overhead());
  io::write_file(dir / "params.txt", buf);
  out << "report: plots/loss.ppm, " << n << " BEV overlays (green GT, yellow correct, red wrong)\n" << buf;
  return kExitOk;
}

// ---------------------------------------------------------------- dispatch

/// Runs one command. Usage errors (unknown command, bad config) return 2;
/// runtime failures return 1 with a module-attributed message on `err`.
inline int run(const std::string& command, const std::string& config_path, const std::vector<std::string>& overrides,
               std::ostream& out, std::ostream& err) {
  if (std::find(commands().begin(), commands().end(), command) == commands().end()) {
    err << "fusion4ca: unknown command '" << command << "' (expected synth, train, eval, gradcheck, ablate, report)\n";
    return kExitUsage;
  }
  RunConfig cfg;
  try {
    cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
    for (const auto& o : overrides) cfg.apply_override(o);
    model_config(cfg);
    train_options(cfg);
    freeze_mode_from_string(cfg.str("freeze.mode"));
    split_from_string(cfg.str("eval.split"));
    scene_config(cfg, Split::kTrain, 0);
    if (command == "ablate") {
      ablation_rows(cfg);
      ablation_seeds(cfg);
      freeze_mode_from_string(cfg.str("ablate.adapter_freeze"));
    }
  } catch (const ConfigError& e) {
    err << "fusion4ca " << command << ": " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    write_snapshot(cfg);
    if (command == "synth") return cmd_synth(cfg, out);
    if (command == "train") return cmd_train(cfg, out);
    if (command == "eval") return cmd_eval(cfg, out);
    if (command == "gradcheck") return cmd_gradcheck(cfg, out);
    if (command == "ablate") return cmd_ablate(cfg, out);
    return cmd_report(cfg, out);
  } catch (const ConfigError& e) {
    err << "fusion4ca " << command << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const synth::SceneIoError& e) {
    err << "fusion4ca " << command << ": [synthdata] " << e.what() << "\n";
  } catch (const synth::SceneGenerationError& e) {
    err << "fusion4ca " << command << ": [synthdata] " << e.what() << "\n";
  } catch (const CheckpointError& e) {
    err << "fusion4ca " << command << ": [pipeline] " << e.what() << "\n";
  } catch (const NonFiniteLoss& e) {
    err << "fusion4ca " << command << ": [pipeline] " << e.what() << "\n";
  } catch (const DegenerateAlignInput& e) {
    err << "fusion4ca " << command << ": [align] " << e.what() << "\n";
  } catch (const GeometryError& e) {
    err << "fusion4ca " << command << ": [core] " << e.what() << "\n";
  } catch (const ShapeError& e) {
    err << "fusion4ca " << command << ": [core] " << e.what() << "\n";
  } catch (const io::FileError& e) {
    err << "fusion4ca " << command << ": [io] " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "fusion4ca " << command << ": [" << command << "] " << e.what() << "\n";
  }
  return kExitFailure;
}

}  // namespace fusion4ca::cli
