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
#include <filesystem>
#include <sstream>
#include <string>
#include <type_traits>

#include "fusion4ca/core/io.hpp"
#include "fusion4ca/pipeline/train.hpp"

namespace fusion4ca {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[8] = {'F', '4', 'C', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/*
 * Layout (little-endian):
 *   magic "F4CACKPT", u32 format_version, u32 sizeof(scalar)
 *   str config snapshot
 *   u32 leaf count, then per leaf in store order:
 *     str name, str group, u8 trainable, u8 inference, i32[4] shape, scalar[n] values
 *   TrainState: i64 step, per leaf scalar[n] moment1 and moment2,
 *     str rng state, u32 order length, i32[] order, i64 cursor, f64[4] running
 * where str = u64 length + bytes.
 */
namespace detail {

class Writer {
 public:
  template <class V>
  void pod(const V& v) {
    static_assert(std::is_trivially_copyable_v<V>);
    out_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint64_t>(s.size()));
    out_ += s;
  }
  template <class V>
  void array(const V* p, std::size_t n) {
    out_.append(reinterpret_cast<const char*>(p), n * sizeof(V));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}
  template <class V>
  V pod() {
    V v;
    need(sizeof v);
    std::memcpy(&v, bytes_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  template <class V>
  void array(V* p, std::size_t n) {
    need(n * sizeof(V));
    std::memcpy(p, bytes_.data() + pos_, n * sizeof(V));
    pos_ += n * sizeof(V);
  }
  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& why) const { throw CheckpointError("corrupt checkpoint " + what_ + ": " + why); }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) fail("truncated");
  }
  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <class T>
std::string encode_checkpoint(const RunConfig& cfg, const ParamStore<T>& store, const TrainState<T>& state) {
  detail::Writer w;
  w.array(kCheckpointMagic, 8);
  w.pod(kCheckpointVersion);
  w.pod(static_cast<std::uint32_t>(sizeof(T)));
  w.str(cfg.snapshot());
  w.pod(static_cast<std::uint32_t>(store.size()));
  for (const auto& p : store.all()) {
    w.str(p.name);
    w.str(p.group);
    w.pod(static_cast<std::uint8_t>(p.trainable));
    w.pod(static_cast<std::uint8_t>(p.inference));
    for (int d : p.value.shape()) w.pod(static_cast<std::int32_t>(d));
    w.array(p.value.data(), p.value.size());
  }
  w.pod(static_cast<std::int64_t>(state.step));
  for (std::size_t i = 0; i < store.size(); ++i) {
    w.array(state.moment1.at(i).data(), state.moment1[i].size());
    w.array(state.moment2.at(i).data(), state.moment2[i].size());
  }
  std::ostringstream rng;
  rng << state.rng;
  w.str(rng.str());
  w.pod(static_cast<std::uint32_t>(state.order.size()));
  w.array(state.order.data(), state.order.size());
  w.pod(static_cast<std::int64_t>(state.cursor));
  for (double v : {state.running.det, state.running.align, state.running.aux, state.running.total}) w.pod(v);
  return w.take();
}

template <class T>
struct Checkpoint {
  RunConfig config;
  ParamStore<T> store;
  TrainState<T> state;
};

template <class T>
Checkpoint<T> decode_checkpoint(std::string_view bytes, const std::string& what = "checkpoint") {
  detail::Reader r(bytes, what);
  char magic[8];
  r.array(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) r.fail("bad magic (not a checkpoint file)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint format_version " + std::to_string(version) + " in " + what +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  if (r.pod<std::uint32_t>() != sizeof(T)) r.fail("scalar width does not match");
  Checkpoint<T> c;
  try {
    c.config = RunConfig::from_text(r.str());
  } catch (const ConfigError& e) {
    r.fail(std::string("config snapshot: ") + e.what());
  }
  const auto n = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str(), group = r.str();
    const bool trainable = r.pod<std::uint8_t>() != 0, inference = r.pod<std::uint8_t>() != 0;
    Shape s;
    for (int& d : s) {
      d = r.pod<std::int32_t>();
      if (d < 0) r.fail("negative dimension in leaf " + name);
    }
    Tensor<T> v(s);
    r.array(v.data(), v.size());
    ParamRef ref = c.store.add(std::move(name), std::move(group), std::move(v), inference);
    c.store[ref].trainable = trainable;
  }
  c.state.step = r.pod<std::int64_t>();
  for (const auto& p : c.store.all()) {
    c.state.moment1.emplace_back(p.value.shape());
    c.state.moment2.emplace_back(p.value.shape());
    r.array(c.state.moment1.back().data(), p.value.size());
    r.array(c.state.moment2.back().data(), p.value.size());
  }
  std::istringstream rng(r.str());
  rng >> c.state.rng;
  if (!rng) r.fail("bad RNG state");
  c.state.order.resize(r.pod<std::uint32_t>());
  r.array(c.state.order.data(), c.state.order.size());
  c.state.cursor = r.pod<std::int64_t>();
  for (double* v : {&c.state.running.det, &c.state.running.align, &c.state.running.aux, &c.state.running.total}) {
    *v = r.pod<double>();
  }
  if (!r.done()) r.fail("trailing bytes");
  return c;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const ParamStore<T>& store,
                     const TrainState<T>& state) {
  io::write_file(path, encode_checkpoint(cfg, store, state));
}

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = io::read_file(path);
  } catch (const io::FileError& e) {
    throw CheckpointError(e.what());
  }
  return decode_checkpoint<T>(bytes, path.string());
}

/// Copies checkpoint leaves into a model built from the same config; names,
/// order and shapes must agree.
template <class T>
void restore_params(ParamStore<T>& into, const ParamStore<T>& from) {
  if (into.size() != from.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(from.size()) + " leaves, model has " +
                          std::to_string(into.size()));
  }
  for (std::size_t i = 0; i < into.size(); ++i) {
    Param<T>& dst = into.at(i);
    const Param<T>& src = from.at(i);
    if (dst.name != src.name || dst.value.shape() != src.value.shape()) {
      throw CheckpointError("checkpoint leaf " + src.name + " does not match model leaf " + dst.name);
    }
    dst.value = src.value;
    dst.trainable = src.trainable;
  }
}

}  // namespace fusion4ca
