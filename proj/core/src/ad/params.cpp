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

#include "slf/ad/params.hpp"

#include "slf/error.hpp"

namespace slf::ad {

ParamEntry& ParamStore::add(const std::string& id, Tensor weights, std::optional<Tensor> bias) {
  auto [it, inserted] = entries_.try_emplace(id);
  if (!inserted) throw Error(ErrorKind::kArgument, "duplicate parameter id '" + id + "'");
  it->second.weights = std::move(weights);
  it->second.bias = std::move(bias);
  return it->second;
}

ParamEntry& ParamStore::at(const std::string& id) {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw Error(ErrorKind::kArgument, "unknown parameter id '" + id + "'");
  return it->second;
}

const ParamEntry& ParamStore::at(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw Error(ErrorKind::kArgument, "unknown parameter id '" + id + "'");
  return it->second;
}

Tensor& ParamStore::tensor(const std::string& id, ParamSlot slot) {
  ParamEntry& e = at(id);
  if (slot == ParamSlot::kWeights) return e.weights;
  if (!e.bias) throw Error(ErrorKind::kArgument, "parameter '" + id + "' has no bias");
  return *e.bias;
}

std::vector<std::string> ParamStore::ids() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [id, _] : entries_) out.push_back(id);
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.parameter_count();
  return n;
}

void ParamStore::set_all_frozen(bool frozen) {
  for (auto& [_, e] : entries_) e.frozen = frozen;
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : entries_) {
    e.weights.clear_grad();
    if (e.bias) e.bias->clear_grad();
  }
}

bool ParamStore::bitwise_equal(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    if (!a->second.weights.bitwise_equal(b->second.weights)) return false;
    if (a->second.bias.has_value() != b->second.bias.has_value()) return false;
    if (a->second.bias && !a->second.bias->bitwise_equal(*b->second.bias)) return false;
  }
  return true;
}

}  // namespace slf::ad
