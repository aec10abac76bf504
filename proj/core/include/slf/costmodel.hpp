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
#include <optional>
#include <string>
#include <vector>

#include "slf/protocol.hpp"

namespace slf::cost {

struct LinkParams {
  double ul_rate_bps = 2e6;
  double dl_rate_bps = 2e6;
};

struct ComputeParams {
  double flops_per_second = 30e12;
};

struct CostBreakdown {
  double dl_latency_s = 0.0;
  double ft_latency_s = 0.0;
  double ul_latency_s = 0.0;
  double recovery_time_s = 0.0;
};

/// payload_bytes * 8 / rate_bps. Non-positive or non-finite rates are rejected.
double link_latency(std::uint64_t payload_bytes, double rate_bps);

double compute_latency(double flops, const ComputeParams& cp);

CostBreakdown recovery_time(std::uint64_t dl_bytes, double flops, std::uint64_t ul_bytes,
                            const LinkParams& links, const ComputeParams& cp);

enum class Block { kEncoder, kDecoder, kCodebook, kClassifier };

/// Per-sample forward cost of one weight-bearing stage.
struct LayerCost {
  std::string id;
  Block block = Block::kEncoder;
  std::uint64_t macs = 0;
  /// Whether backward must propagate a gradient to this stage's input.
  bool input_grad = true;
};

struct ArchCost {
  std::vector<LayerCost> layers;
};

/// Counting rule, in FLOPs per MAC. Backward of a trainable stage costs
/// weight_grad + input_grad; a frozen stage costs input_grad only.
struct FlopsRule {
  double forward = 2.0;
  double weight_grad = 2.0;
  double input_grad = 2.0;
  /// Count the frozen classifier's forward pass on reconstructions.
  bool include_task_head = false;
};

/// Costs of the encoder, quantizer search (P*K*D MACs, no input gradient),
/// decoder and optionally a classifier, for one canonical sample.
ArchCost transceiver_arch(std::optional<int> classifier_classes = std::nullopt);

/// Whether a stage is trained during fine-tuning under `mask`.
bool is_trainable(const LayerCost& layer, const protocol::FreezeMask& mask);

double fine_tune_flops(const ArchCost& arch, const protocol::FreezeMask& mask,
                       std::uint64_t n_samples, int epochs, const FlopsRule& rule = {});

/// Reference per-ell measurements (kB are decimal) used as cost-model inputs.
struct ReferenceRow {
  int ell;
  double dl_kb;
  double ul_kb;
  double recon_tflops;
  double cls_tflops;
  double dl_s;
  double ul_s;
  double recon_ft_s;
  double cls_ft_s;
  double recon_recovery_s;
  double cls_recovery_s;
  double recon_mse;
  double cls_top1_percent;
};

inline constexpr std::array<ReferenceRow, 5> kReferenceRows = {{
    {0, 114, 114, 79.02, 75.43, 0.456, 0.456, 2.63, 2.51, 3.542, 3.422, 0.087, 98.55},
    {1, 114, 76, 64.28, 67.49, 0.456, 0.304, 2.14, 2.24, 2.900, 3.000, 0.103, 98.04},
    {2, 114, 22, 48.19, 39.69, 0.456, 0.088, 1.60, 1.32, 2.144, 1.864, 0.113, 97.83},
    {3, 114, 2, 50.63, 37.31, 0.456, 0.008, 1.68, 1.24, 2.144, 1.704, 0.121, 97.01},
    {4, 114, 0, 47.32, 34.17, 0.456, 0.000, 1.57, 1.13, 2.026, 1.586, 0.123, 96.90},
}};

}  // namespace slf::cost
