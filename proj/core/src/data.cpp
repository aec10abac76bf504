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

#include "slf/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "slf/error.hpp"
#include "slf/rng.hpp"

namespace slf::data {
namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr std::size_t kCifarPixels = 3 * 32 * 32;
constexpr std::size_t kCifarRecord = 1 + kCifarPixels;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t offset,
                        const std::filesystem::path& path) {
  if (buf.size() < offset + 4) {
    throw Error(ErrorKind::kFormat, path.string() + ": truncated header at byte offset " +
                                        std::to_string(offset) + " (file has " +
                                        std::to_string(buf.size()) + " bytes)");
  }
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

ad::Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  const std::size_t per = sample_size();
  ad::Shape shape = images.shape();
  shape[0] = static_cast<int>(indices.size());
  ad::Tensor out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(images.ptr() + indices[i] * per, per, out.ptr() + i * per);
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = labels.at(indices[i]);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset d;
  d.images = gather(indices);
  d.labels = gather_labels(indices);
  d.source_id = source_id;
  d.label_offset = label_offset;
  d.num_classes = num_classes;
  return d;
}

Dataset Dataset::head(std::size_t n) const {
  std::vector<std::size_t> idx(std::min(n, size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return subset(idx);
}

void Dataset::validate() const {
  if (images.ndim() != 4 || static_cast<std::size_t>(images.dim(0)) != labels.size()) {
    throw Error(ErrorKind::kFormat, "dataset '" + source_id + "': " +
                                        std::to_string(labels.size()) + " labels for images " +
                                        ad::shape_str(images.shape()));
  }
  for (float v : images.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(ErrorKind::kFormat, "dataset '" + source_id + "': pixel outside [0,1]");
    }
  }
  for (int y : labels) {
    if (y < label_offset || y >= label_offset + num_classes) {
      throw Error(ErrorKind::kFormat, "dataset '" + source_id + "': label " + std::to_string(y) +
                                          " outside its label space");
    }
  }
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::string source_id, int label_offset) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);

  const std::uint32_t img_magic = read_be32(img, 0, images_path);
  if (img_magic != kIdxImageMagic) {
    throw Error(ErrorKind::kFormat, images_path.string() + ": bad IDX image magic at byte offset 0");
  }
  const std::uint32_t n = read_be32(img, 4, images_path);
  const std::uint32_t rows = read_be32(img, 8, images_path);
  const std::uint32_t cols = read_be32(img, 12, images_path);
  const std::size_t expected = 16 + std::size_t{n} * rows * cols;
  if (img.size() != expected) {
    throw Error(ErrorKind::kFormat, images_path.string() + ": expected " +
                                        std::to_string(expected) + " bytes, found " +
                                        std::to_string(img.size()));
  }

  if (read_be32(lab, 0, labels_path) != kIdxLabelMagic) {
    throw Error(ErrorKind::kFormat, labels_path.string() + ": bad IDX label magic at byte offset 0");
  }
  const std::uint32_t n_labels = read_be32(lab, 4, labels_path);
  if (n_labels != n) {
    throw Error(ErrorKind::kFormat, labels_path.string() + ": " + std::to_string(n_labels) +
                                        " labels for " + std::to_string(n) + " images");
  }
  if (lab.size() != 8 + std::size_t{n}) {
    throw Error(ErrorKind::kFormat, labels_path.string() + ": expected " +
                                        std::to_string(8 + std::size_t{n}) + " bytes, found " +
                                        std::to_string(lab.size()));
  }

  Dataset ds;
  ds.source_id = std::move(source_id);
  ds.label_offset = label_offset;
  ds.num_classes = 10;
  ds.images = ad::Tensor({static_cast<int>(n), 1, static_cast<int>(rows), static_cast<int>(cols)});
  for (std::size_t i = 0; i < ds.images.size(); ++i) ds.images[i] = img[16 + i] / 255.0f;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[8 + i] > 9) {
      throw Error(ErrorKind::kFormat, labels_path.string() + ": label byte " +
                                          std::to_string(lab[8 + i]) + " at byte offset " +
                                          std::to_string(8 + i) + " exceeds 9");
    }
    ds.labels[i] = label_offset + lab[8 + i];
  }
  return ds;
}

Dataset load_cifar_bin(std::span<const std::filesystem::path> paths, int label_offset,
                       std::string source_id) {
  std::vector<std::uint8_t> all;
  for (const auto& p : paths) {
    auto buf = read_file(p);
    if (buf.empty() || buf.size() % kCifarRecord != 0) {
      throw Error(ErrorKind::kFormat, p.string() + ": size " + std::to_string(buf.size()) +
                                          " is not a multiple of the " +
                                          std::to_string(kCifarRecord) + "-byte record length");
    }
    all.insert(all.end(), buf.begin(), buf.end());
  }
  if (all.empty()) throw Error(ErrorKind::kIo, "load_cifar_bin: no input files");
  const std::size_t n = all.size() / kCifarRecord;

  Dataset ds;
  ds.source_id = std::move(source_id);
  ds.label_offset = label_offset;
  ds.num_classes = 10;
  ds.images = ad::Tensor({static_cast<int>(n), 3, 32, 32});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = all.data() + i * kCifarRecord;
    if (rec[0] > 9) {
      throw Error(ErrorKind::kFormat, "cifar record " + std::to_string(i) + ": label byte " +
                                          std::to_string(rec[0]) + " exceeds 9");
    }
    ds.labels[i] = label_offset + rec[0];
    float* dst = ds.images.ptr() + i * kCifarPixels;
    for (std::size_t j = 0; j < kCifarPixels; ++j) dst[j] = rec[1 + j] / 255.0f;
  }
  return ds;
}

void write_idx(const Dataset& ds, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  if (ds.images.ndim() != 4 || ds.channels() != 1) {
    throw Error(ErrorKind::kShape, "write_idx: single-channel images required");
  }
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw Error(ErrorKind::kIo, "write_idx: cannot create output files");
  put_be32(img, kIdxImageMagic);
  put_be32(img, static_cast<std::uint32_t>(ds.size()));
  put_be32(img, static_cast<std::uint32_t>(ds.height()));
  put_be32(img, static_cast<std::uint32_t>(ds.width()));
  for (float v : ds.images.data()) img.put(static_cast<char>(to_byte(v)));
  put_be32(lab, kIdxLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) lab.put(static_cast<char>(y - ds.label_offset));
}

void write_cifar_bin(const Dataset& ds, const std::filesystem::path& path) {
  if (ds.images.ndim() != 4 || ds.channels() != 3 || ds.height() != 32 || ds.width() != 32) {
    throw Error(ErrorKind::kShape, "write_cifar_bin: 3x32x32 images required");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "write_cifar_bin: cannot create " + path.string());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.put(static_cast<char>(ds.labels[i] - ds.label_offset));
    const float* src = ds.images.ptr() + i * kCifarPixels;
    for (std::size_t j = 0; j < kCifarPixels; ++j) out.put(static_cast<char>(to_byte(src[j])));
  }
}

Dataset canonicalize(const Dataset& ds) {
  const ad::Shape& s = ds.images.shape();
  if (s.size() == 4 && s[1] == 1 && s[2] == kCanonicalSide && s[3] == kCanonicalSide) return ds;
  if (s.size() != 4 || s[1] != 3 || s[2] != 32 || s[3] != 32) {
    throw Error(ErrorKind::kShape, "canonicalize: unsupported image shape " + ad::shape_str(s));
  }
  constexpr int kCrop = (32 - kCanonicalSide) / 2;
  const int n = s[0];
  Dataset out;
  out.labels = ds.labels;
  out.source_id = ds.source_id;
  out.label_offset = ds.label_offset;
  out.num_classes = ds.num_classes;
  out.images = ad::Tensor({n, 1, kCanonicalSide, kCanonicalSide});
  for (int i = 0; i < n; ++i) {
    const float* r = ds.images.ptr() + static_cast<std::size_t>(i) * kCifarPixels;
    const float* g = r + 1024;
    const float* b = g + 1024;
    float* dst = out.images.ptr() + static_cast<std::size_t>(i) * kCanonicalSide * kCanonicalSide;
    for (int y = 0; y < kCanonicalSide; ++y) {
      for (int x = 0; x < kCanonicalSide; ++x) {
        const int src = (y + kCrop) * 32 + (x + kCrop);
        const double luma = 0.299 * r[src] + 0.587 * g[src] + 0.114 * b[src];
        dst[y * kCanonicalSide + x] = static_cast<float>(std::clamp(luma, 0.0, 1.0));
      }
    }
  }
  return out;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error(ErrorKind::kArgument, "split_train_test: ratio must lie in (0,1)");
  }
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(ds.size())));
  std::span<const std::size_t> all(idx);
  return {ds.subset(all.first(n_train)), ds.subset(all.subspan(n_train))};
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.images.ndim() != 4 || b.images.ndim() != 4 || a.sample_size() != b.sample_size() ||
      a.channels() != b.channels()) {
    throw Error(ErrorKind::kShape, "concat: datasets have different image shapes");
  }
  Dataset out;
  ad::Shape shape = a.images.shape();
  shape[0] = static_cast<int>(a.size() + b.size());
  ad::FloatBuffer pix(a.images.storage());
  pix.insert(pix.end(), b.images.storage().begin(), b.images.storage().end());
  out.images = ad::Tensor(shape, std::move(pix));
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.source_id = a.source_id == b.source_id ? a.source_id : a.source_id + "+" + b.source_id;
  out.label_offset = std::min(a.label_offset, b.label_offset);
  out.num_classes = std::max(a.label_offset + a.num_classes, b.label_offset + b.num_classes) -
                    out.label_offset;
  return out;
}

}  // namespace slf::data
