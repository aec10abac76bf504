// Copyright 2026 The SLF Authors. All Rights Reserved.
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

#include "slf/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "slf/error.hpp"

namespace slf::ckpt {
namespace {

constexpr int kMaxDims = 8;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    le(u);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  void need(std::size_t n, const char* what) const {
    if (buf_.size() - pos_ < n) {
      throw Error(ErrorKind::kFormat, std::string("checkpoint truncated reading ") + what +
                                          " at byte offset " + std::to_string(pos_) + ": need " +
                                          std::to_string(n) + " bytes, " +
                                          std::to_string(buf_.size() - pos_) + " remain");
    }
  }
  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(T{buf_[pos_ + i]} << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  float f32() {
    const auto u = le<std::uint32_t>("tensor data");
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

void add_store(std::vector<NamedTensor>& out, const std::string& block, const ad::ParamStore& s) {
  for (const auto& [id, e] : s) {
    out.push_back({block + "/" + id + ".weight", e.weights});
    if (e.bias) out.push_back({block + "/" + id + ".bias", *e.bias});
  }
}

void fill_store(std::map<std::string, const ad::Tensor*>& named, std::set<std::string>& used,
                const std::string& block, ad::ParamStore& s) {
  for (auto& [id, e] : s) {
    auto take = [&](const std::string& name, ad::Tensor& dst) {
      auto it = named.find(name);
      if (it == named.end()) throw Error(ErrorKind::kFormat, "checkpoint lacks tensor '" + name + "'");
      if (it->second->shape() != dst.shape()) {
        throw Error(ErrorKind::kFormat, "checkpoint tensor '" + name + "' has shape " +
                                            ad::shape_str(it->second->shape()) + ", expected " +
                                            ad::shape_str(dst.shape()));
      }
      dst = *it->second;
      used.insert(name);
    };
    take(block + "/" + id + ".weight", e.weights);
    if (e.bias) take(block + "/" + id + ".bias", *e.bias);
  }
}

}  // namespace

std::vector<std::uint8_t> encode(const RawCheckpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.le<std::uint32_t>(kVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& nt : ckpt.tensors) {
    if (nt.name.empty() || nt.name.size() > 0xFFFF) {
      throw Error(ErrorKind::kArgument, "checkpoint tensor name length out of range");
    }
    if (nt.tensor.ndim() < 1 || nt.tensor.ndim() > kMaxDims) {
      throw Error(ErrorKind::kArgument, "checkpoint tensor '" + nt.name + "' has unsupported rank");
    }
    w.le<std::uint16_t>(static_cast<std::uint16_t>(nt.name.size()));
    w.bytes(nt.name.data(), nt.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(nt.tensor.ndim()));
    for (int d : nt.tensor.shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float f : nt.tensor.data()) w.f32(f);
  }
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.metadata.size()));
  w.bytes(ckpt.metadata.data(), ckpt.metadata.size());
  return w.take();
}

RawCheckpoint decode(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic))) {
    throw Error(ErrorKind::kFormat, "not a checkpoint: bad magic at byte offset 0");
  }
  const auto version = r.le<std::uint32_t>("version");
  if (version != kVersion) {
    throw Error(ErrorKind::kFormat, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.le<std::uint32_t>("tensor count");
  RawCheckpoint out;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    const auto len = r.le<std::uint16_t>("name length");
    nt.name = r.str(len, "tensor name");
    if (!names.insert(nt.name).second) {
      throw Error(ErrorKind::kFormat, "duplicate checkpoint tensor '" + nt.name + "'");
    }
    const int ndim = r.le<std::uint8_t>("rank");
    if (ndim < 1 || ndim > kMaxDims) {
      throw Error(ErrorKind::kFormat, "tensor '" + nt.name + "': rank " + std::to_string(ndim) +
                                          " at byte offset " + std::to_string(r.pos() - 1));
    }
    ad::Shape shape(static_cast<std::size_t>(ndim));
    std::uint64_t n = 1;
    for (int& d : shape) {
      const auto v = r.le<std::uint32_t>("dimension");
      if (v == 0 || v > 0x7FFFFFFF) {
        throw Error(ErrorKind::kFormat, "tensor '" + nt.name + "': invalid dimension " +
                                            std::to_string(v));
      }
      d = static_cast<int>(v);
      n *= v;
    }
    r.need(n * 4, "tensor data");
    std::vector<float> values(n);
    for (float& f : values) f = r.f32();
    nt.tensor = ad::Tensor(std::move(shape), std::move(values));
    out.tensors.push_back(std::move(nt));
  }
  const auto meta_len = r.le<std::uint32_t>("metadata length");
  out.metadata = r.str(meta_len, "metadata");
  if (r.remaining() != 0) {
    throw Error(ErrorKind::kFormat, std::to_string(r.remaining()) +
                                        " trailing bytes after checkpoint metadata");
  }
  return out;
}

RawCheckpoint to_raw(const trx::Transceiver& t) {
  RawCheckpoint raw;
  add_store(raw.tensors, "theta", t.theta);
  add_store(raw.tensors, "phi", t.phi);
  raw.tensors.push_back({vq::Codebook::kParamId, t.codebook.entries()});
  if (t.gamma) add_store(raw.tensors, "gamma", t.gamma->params);
  for (auto& nt : raw.tensors) nt.tensor.clear_grad();

  nlohmann::ordered_json meta;
  meta["task"] = std::string(trx::task_name(t.task));
  meta["trained_epsilon"] = t.trained_epsilon;
  meta["dataset_id"] = t.trained_dataset_id;
  meta["seed"] = t.seed;
  meta["classifier_classes"] = t.gamma ? t.gamma->num_classes : 0;
  raw.metadata = meta.dump();
  return raw;
}

trx::Transceiver from_raw(const RawCheckpoint& raw) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(raw.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  trx::Transceiver t;
  int classes = 0;
  try {
    const trx::Task task = trx::parse_task(meta.at("task").get<std::string>());
    classes = meta.at("classifier_classes").get<int>();
    if (task == trx::Task::kClassification && classes < 2) {
      throw Error(ErrorKind::kFormat, "classification checkpoint without a classifier");
    }
    t = trx::build_transceiver(task, {1, data::kCanonicalSide, data::kCanonicalSide}, 0,
                               classes > 0 ? classes : 10);
    t.trained_epsilon = meta.at("trained_epsilon").get<double>();
    t.trained_dataset_id = meta.at("dataset_id").get<std::string>();
    t.seed = meta.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("checkpoint metadata: ") + e.what());
  }

  std::map<std::string, const ad::Tensor*> named;
  for (const auto& nt : raw.tensors) named[nt.name] = &nt.tensor;
  std::set<std::string> used;
  fill_store(named, used, "theta", t.theta);
  fill_store(named, used, "phi", t.phi);
  auto cb = named.find(vq::Codebook::kParamId);
  if (cb == named.end()) throw Error(ErrorKind::kFormat, "checkpoint lacks tensor 'codebook'");
  if (cb->second->shape() != t.codebook.entries().shape()) {
    throw Error(ErrorKind::kFormat, "checkpoint codebook has shape " +
                                        ad::shape_str(cb->second->shape()));
  }
  t.codebook = vq::Codebook(*cb->second);
  used.insert(cb->first);
  if (t.gamma) {
    fill_store(named, used, "gamma", t.gamma->params);
    t.gamma->params.set_all_frozen(true);
  }
  for (const auto& nt : raw.tensors) {
    if (!used.count(nt.name)) {
      throw Error(ErrorKind::kFormat, "unexpected checkpoint tensor '" + nt.name + "'");
    }
  }
  return t;
}

void save(const trx::Transceiver& t, const std::filesystem::path& path) {
  const auto bytes = encode(to_raw(t));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

trx::Transceiver load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
  try {
    return from_raw(decode(bytes));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace slf::ckpt
