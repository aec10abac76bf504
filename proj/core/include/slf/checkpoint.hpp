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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slf/ad/tensor.hpp"
#include "slf/transceiver.hpp"

namespace slf::ckpt {

// Layout, little-endian throughout:
//   "SLFCKPT1" | u32 version | u32 tensor count
//   per tensor: u16 name length | name | u8 ndim | u32 dims[ndim] | f32 data
//   u32 metadata length | metadata (JSON object, UTF-8)
inline constexpr char kMagic[8] = {'S', 'L', 'F', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

struct RawCheckpoint {
  std::vector<NamedTensor> tensors;
  std::string metadata;
};

std::vector<std::uint8_t> encode(const RawCheckpoint& ckpt);
/// Validates magic, version and every length; trailing bytes are an error.
RawCheckpoint decode(const std::vector<std::uint8_t>& bytes);

/// Tensors are named "<block>/<layer>.weight", "<block>/<layer>.bias" and
/// "codebook". The metadata holds task, trained_epsilon, dataset_id, seed and
/// classifier_classes.
void save(const trx::Transceiver& t, const std::filesystem::path& path);
trx::Transceiver load(const std::filesystem::path& path);

RawCheckpoint to_raw(const trx::Transceiver& t);
trx::Transceiver from_raw(const RawCheckpoint& raw);

}  // namespace slf::ckpt
