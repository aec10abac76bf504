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

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "slf/ad/tensor.hpp"

namespace slf::ad {

struct ParamEntry {
  Tensor weights;
  std::optional<Tensor> bias;
  /// Frozen entries never receive gradients and are skipped by the optimizer.
  bool frozen = false;

  std::size_t parameter_count() const {
    return weights.size() + (bias ? bias->size() : 0);
  }
};

enum class ParamSlot { kWeights, kBias };

/// Named parameter blocks keyed by layer id. Iteration order is by id.
class ParamStore {
 public:
  ParamEntry& add(const std::string& id, Tensor weights, std::optional<Tensor> bias = {});

  bool contains(const std::string& id) const { return entries_.count(id) != 0; }
  ParamEntry& at(const std::string& id);
  const ParamEntry& at(const std::string& id) const;
  Tensor& tensor(const std::string& id, ParamSlot slot);

  std::vector<std::string> ids() const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t parameter_count() const;

  void set_frozen(const std::string& id, bool frozen) { at(id).frozen = frozen; }
  void set_all_frozen(bool frozen);
  void zero_grad();

  /// Bitwise equality of ids, shapes and values (gradients and frozen flags ignored).
  bool bitwise_equal(const ParamStore& other) const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::map<std::string, ParamEntry> entries_;
};

}  // namespace slf::ad
