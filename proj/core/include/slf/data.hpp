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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slf/ad/tensor.hpp"

namespace slf::data {

/// Canonical image layout shared by every transceiver: 1 x 28 x 28.
inline constexpr int kCanonicalChannels = 1;
inline constexpr int kCanonicalSide = 28;

/// Labeled images, [N, C, H, W] with values in [0, 1]. Labels are absolute in
/// a (possibly joint) label space: label_offset <= y < label_offset + num_classes.
struct Dataset {
  ad::Tensor images;
  std::vector<int> labels;
  std::string source_id;
  int label_offset = 0;
  int num_classes = 10;

  std::size_t size() const { return labels.size(); }
  int channels() const { return images.dim(1); }
  int height() const { return images.dim(2); }
  int width() const { return images.dim(3); }
  std::size_t sample_size() const { return images.size() / std::max<std::size_t>(1, size()); }

  /// Images at `indices`, stacked as [indices.size(), C, H, W].
  ad::Tensor gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
  Dataset subset(std::span<const std::size_t> indices) const;
  /// First min(n, size()) samples.
  Dataset head(std::size_t n) const;

  /// Throws Error(kFormat) if any documented invariant is violated.
  void validate() const;
};

/// Reads an IDX image/label file pair (magic 0x00000803 / 0x00000801,
/// big-endian dimensions). Pixels are scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::string source_id = "mnist", int label_offset = 0);

/// Reads CIFAR-10 binary batch files: 1 label byte + 3072 channel-planar RGB
/// bytes per record.
Dataset load_cifar_bin(std::span<const std::filesystem::path> paths, int label_offset = 0,
                       std::string source_id = "cifar10");

void write_idx(const Dataset& ds, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);
void write_cifar_bin(const Dataset& ds, const std::filesystem::path& path);

/// Maps 28x28x1 unchanged and 32x32x3 to grayscale (0.299 R + 0.587 G +
/// 0.114 B) center-cropped to 28x28x1. Other shapes are rejected.
Dataset canonicalize(const Dataset& ds);

/// Deterministic shuffled split into round(ratio * N) and the remainder.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double ratio, std::uint64_t seed);

/// Concatenation of two canonical datasets; the label space covers both.
Dataset concat(const Dataset& a, const Dataset& b);

}  // namespace slf::data
