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

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slf/ad/params.hpp"
#include "slf/data.hpp"
#include "slf/transceiver.hpp"
#include "slf/vq.hpp"

namespace slf::protocol {

/// Freezable decoder-side units in freeze order: output layer first, codebook last.
enum class Unit { kDecConv3, kDecConv2, kDecConv1, kCodebook };

inline constexpr int kMaxEll = 4;
inline constexpr std::array<Unit, kMaxEll> kFreezeOrder = {Unit::kDecConv3, Unit::kDecConv2,
                                                           Unit::kDecConv1, Unit::kCodebook};
inline constexpr std::uint64_t kBytesPerParam = 4;

/// Parameter-store id of a unit ("dec_conv3", ..., "codebook").
std::string_view unit_name(Unit unit);

struct FreezeMask {
  int ell = 0;
  std::vector<Unit> frozen_units;

  bool is_frozen(Unit unit) const;
  std::vector<Unit> unfrozen_units() const;
};

/// The first `ell` units of kFreezeOrder frozen. Throws for ell outside [0, 4].
FreezeMask freeze_mask(int ell);

struct SlfConfig {
  int ell = 0;
  /// Unset: 1e-3 when ell == 0, 1e-4 otherwise.
  std::optional<double> lr;
  bool reinit_on_full_retrain = true;
  int epochs = 10;
  int batch_size = 128;
  double lambda_c = 0.25;
  double measured_epsilon = 1e-5;
  std::uint64_t seed = 0;
  vq::CodebookLossTarget loss_target = vq::CodebookLossTarget::kReceived;

  double effective_lr() const;
};

/// Receiver-side state as seen by the transmitter after the download step.
struct DownloadedDecoder {
  ad::ParamStore phi;
  vq::Codebook codebook;
  const trx::Classifier* gamma = nullptr;  // read-only, never trained
  std::uint64_t dl_bytes = 0;
};

DownloadedDecoder download_decoder(const trx::Transceiver& rx);

struct FineTuneResult {
  ad::ParamStore theta;
  ad::ParamStore phi;
  vq::Codebook codebook;
  FreezeMask mask;
  std::vector<double> loss_curve;  // mean train loss per epoch
};

/// Trains theta together with the unfrozen decoder-side units on the
/// transmitter's local data, through DMC(measured_epsilon) sampled per batch.
FineTuneResult fine_tune(const ad::ParamStore& theta, const DownloadedDecoder& downloaded,
                         const data::Dataset& local_train, const SlfConfig& cfg);

struct UnitBytes {
  Unit unit;
  std::uint64_t params = 0;
  std::uint64_t bytes = 0;
  bool uploaded = false;
};

struct PayloadReport {
  std::uint64_t dl_bytes = 0;
  std::uint64_t ul_bytes = 0;
  std::vector<UnitBytes> units;  // in freeze order
};

/// Uploaded units keyed by unit name.
struct UploadPayload {
  std::map<std::string, ad::ParamEntry> phi_units;
  std::optional<ad::Tensor> codebook;

  bool empty() const { return phi_units.empty() && !codebook; }
};

struct Upload {
  UploadPayload payload;
  PayloadReport report;
};

Upload upload_payload(const ad::ParamStore& phi, const vq::Codebook& codebook,
                      const FreezeMask& mask);

/// rx with the uploaded units replaced. Throws on unknown names or shape changes.
trx::Transceiver apply_upload(const trx::Transceiver& rx, const UploadPayload& payload);

/// round((1 - lambda13) * n) samples drawn from x1 and the rest from x3,
/// shuffled. Sampling is without replacement while a source lasts.
data::Dataset mix_datasets(const data::Dataset& x1, const data::Dataset& x3, double lambda13,
                           std::size_t n, std::uint64_t seed);

/// Transmitter after fine-tuning: updated encoder quantizing against the
/// fine-tuned codebook.
trx::Transceiver updated_transmitter(const trx::Transceiver& tx, const FineTuneResult& ft);
/// The transmitter-side virtual pair's receiver: [phi', codebook', gamma].
trx::Transceiver virtual_receiver(const trx::Transceiver& rx, const FineTuneResult& ft);

}  // namespace slf::protocol
