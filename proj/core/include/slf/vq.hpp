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

#include <span>
#include <vector>

#include "slf/ad/params.hpp"
#include "slf/ad/tape.hpp"
#include "slf/rng.hpp"

namespace slf::vq {

/// K x D trainable codeword matrix, stored as the single ParamStore entry
/// `kParamId` so it can be fed to the tape and optimizer like any layer.
class Codebook {
 public:
  static constexpr const char* kParamId = "codebook";

  Codebook() = default;
  /// Wraps existing entries; throws if K < 2, D < 1 or any entry is non-finite.
  explicit Codebook(ad::Tensor entries);
  /// Entries drawn from U(-1/K, 1/K).
  static Codebook random(int num_codewords, int dim, Rng& rng);

  int num_codewords() const { return entries().dim(0); }
  int dim() const { return entries().dim(1); }
  const ad::Tensor& entries() const { return store_.at(kParamId).weights; }
  ad::Tensor& entries() { return store_.at(kParamId).weights; }
  std::span<const float> codeword(int k) const;

  ad::ParamStore& store() { return store_; }
  const ad::ParamStore& store() const { return store_; }
  bool frozen() const { return store_.at(kParamId).frozen; }
  void set_frozen(bool f) { store_.set_frozen(kParamId, f); }
  std::size_t parameter_count() const { return entries().size(); }

  bool bitwise_equal(const Codebook& other) const { return store_.bitwise_equal(other.store_); }

 private:
  ad::ParamStore store_;
};

/// Index of the codeword closest to `z` in Euclidean distance; ties go to the
/// lowest index.
int nearest_codeword(std::span<const float> z, const Codebook& cb);

struct QuantizeResult {
  std::vector<int> indices;   // one per latent position
  ad::Tensor quantized;       // codewords gathered at `indices`, same shape as pre_quant
  ad::Tensor pre_quant;       // the latents that were quantized
};

/// Quantizes every D-vector along the last dimension of `latents` independently.
QuantizeResult quantize(const ad::Tensor& latents, const Codebook& cb);

/// Nearest-codeword indices for a [P, D] row matrix.
std::vector<int> nearest_indices(const ad::Tensor& rows, const Codebook& cb);

/// Which codewords the codebook and commitment terms compare against.
enum class CodebookLossTarget {
  kReceived,    // the codewords after the channel, as written in the loss
  kPreChannel,  // the encoder's own choice k*, the conventional VQ-VAE form
};

/// Batch mean of the per-sample VQ-VAE objective
///
///   |x - x_hat|^2 + |z_q - sg[z_e]|^2 + lambda_c |sg[z_q] - z_e|^2
///
/// where z_q are codebook rows (gradient flows into the codebook) and z_e the
/// encoder output (gradient flows into the encoder). The batch size is the
/// leading dimension of `x`.
ad::Var vqvae_loss(ad::Var x, ad::Var x_hat, ad::Var z_codewords, ad::Var z_pre, double lambda_c);

}  // namespace slf::vq
