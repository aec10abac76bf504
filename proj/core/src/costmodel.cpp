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

#include "slf/costmodel.hpp"

#include <cmath>

#include "slf/error.hpp"
#include "slf/transceiver.hpp"

namespace slf::cost {
namespace {

void append_stack(ArchCost& arch, const std::vector<ad::LayerSpec>& layers, Block block,
                  ad::Shape& shape) {
  for (const auto& layer : layers) {
    if (layer.has_params()) {
      LayerCost c;
      c.id = layer.id;
      c.block = block;
      c.macs = ad::forward_macs(layer, shape);
      arch.layers.push_back(c);
    }
    shape = ad::output_shape(layer, shape);
  }
}

}  // namespace

double link_latency(std::uint64_t payload_bytes, double rate_bps) {
  if (!(rate_bps > 0.0) || !std::isfinite(rate_bps)) {
    throw Error(ErrorKind::kArgument, "link rate must be positive and finite");
  }
  return static_cast<double>(payload_bytes) * 8.0 / rate_bps;
}

double compute_latency(double flops, const ComputeParams& cp) {
  if (!(cp.flops_per_second > 0.0) || !std::isfinite(cp.flops_per_second)) {
    throw Error(ErrorKind::kArgument, "compute rate must be positive and finite");
  }
  if (!(flops >= 0.0)) throw Error(ErrorKind::kArgument, "FLOP count must be >= 0");
  return flops / cp.flops_per_second;
}

CostBreakdown recovery_time(std::uint64_t dl_bytes, double flops, std::uint64_t ul_bytes,
                            const LinkParams& links, const ComputeParams& cp) {
  CostBreakdown c;
  c.dl_latency_s = link_latency(dl_bytes, links.dl_rate_bps);
  c.ft_latency_s = compute_latency(flops, cp);
  c.ul_latency_s = link_latency(ul_bytes, links.ul_rate_bps);
  c.recovery_time_s = c.dl_latency_s + c.ft_latency_s + c.ul_latency_s;
  return c;
}

ArchCost transceiver_arch(std::optional<int> classifier_classes) {
  ArchCost arch;
  ad::Shape shape = {1, data::kCanonicalChannels, data::kCanonicalSide, data::kCanonicalSide};
  append_stack(arch, trx::encoder_layers(), Block::kEncoder, shape);

  LayerCost search;
  search.id = vq::Codebook::kParamId;
  search.block = Block::kCodebook;
  search.macs = static_cast<std::uint64_t>(shape[2]) * shape[3] * trx::kNumCodewords *
                trx::kCodeDim;
  search.input_grad = false;
  arch.layers.push_back(search);

  append_stack(arch, trx::decoder_layers(), Block::kDecoder, shape);
  if (classifier_classes) {
    append_stack(arch, trx::classifier_layers(*classifier_classes), Block::kClassifier, shape);
  }
  return arch;
}

bool is_trainable(const LayerCost& layer, const protocol::FreezeMask& mask) {
  switch (layer.block) {
    case Block::kEncoder: return true;
    case Block::kClassifier: return false;
    case Block::kCodebook: return !mask.is_frozen(protocol::Unit::kCodebook);
    case Block::kDecoder:
      for (protocol::Unit u : protocol::kFreezeOrder) {
        if (protocol::unit_name(u) == layer.id) return !mask.is_frozen(u);
      }
      return true;
  }
  return true;
}

double fine_tune_flops(const ArchCost& arch, const protocol::FreezeMask& mask,
                       std::uint64_t n_samples, int epochs, const FlopsRule& rule) {
  if (epochs < 0) throw Error(ErrorKind::kArgument, "fine_tune_flops: epochs must be >= 0");
  double per_sample = 0.0;
  for (const LayerCost& layer : arch.layers) {
    const double macs = static_cast<double>(layer.macs);
    if (layer.block == Block::kClassifier) {
      if (rule.include_task_head) per_sample += rule.forward * macs;
      continue;
    }
    per_sample += rule.forward * macs;
    if (is_trainable(layer, mask)) per_sample += rule.weight_grad * macs;
    if (layer.input_grad) per_sample += rule.input_grad * macs;
  }
  return per_sample * static_cast<double>(n_samples) * epochs;
}

}  // namespace slf::cost
