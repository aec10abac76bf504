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

#include "slf/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "slf/ad/adam.hpp"
#include "slf/channel.hpp"
#include "slf/error.hpp"
#include "slf/rng.hpp"

namespace slf::protocol {
namespace {

constexpr std::uint64_t kStreamReinit = 20;
constexpr std::uint64_t kStreamFineTune = 30;
constexpr std::uint64_t kStreamMix = 40;

void assert_no_frozen_grad(const ad::ParamStore& store) {
  for (const auto& [id, e] : store) {
    if (e.frozen && (e.weights.has_grad() || (e.bias && e.bias->has_grad()))) {
      throw Error(ErrorKind::kInternal, "fine_tune: frozen unit '" + id + "' received a gradient");
    }
  }
}

std::vector<std::size_t> draw_indices(std::size_t available, std::size_t n, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(n);
  std::vector<std::size_t> pool(available);
  while (out.size() < n) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    rng.shuffle(pool);
    const std::size_t take = std::min(available, n - out.size());
    out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return out;
}

}  // namespace

std::string_view unit_name(Unit unit) {
  switch (unit) {
    case Unit::kDecConv3: return "dec_conv3";
    case Unit::kDecConv2: return "dec_conv2";
    case Unit::kDecConv1: return "dec_conv1";
    case Unit::kCodebook: return vq::Codebook::kParamId;
  }
  return "?";
}

bool FreezeMask::is_frozen(Unit unit) const {
  return std::find(frozen_units.begin(), frozen_units.end(), unit) != frozen_units.end();
}

std::vector<Unit> FreezeMask::unfrozen_units() const {
  std::vector<Unit> out;
  for (Unit u : kFreezeOrder) {
    if (!is_frozen(u)) out.push_back(u);
  }
  return out;
}

FreezeMask freeze_mask(int ell) {
  if (ell < 0 || ell > kMaxEll) {
    throw Error(ErrorKind::kArgument, "freeze_mask: ell=" + std::to_string(ell) +
                                          " outside [0," + std::to_string(kMaxEll) + "]");
  }
  FreezeMask m;
  m.ell = ell;
  m.frozen_units.assign(kFreezeOrder.begin(), kFreezeOrder.begin() + ell);
  return m;
}

double SlfConfig::effective_lr() const {
  if (lr) return *lr;
  return ell == 0 ? 1e-3 : 1e-4;
}

DownloadedDecoder download_decoder(const trx::Transceiver& rx) {
  DownloadedDecoder d;
  d.phi = rx.phi;
  d.codebook = rx.codebook;
  d.phi.zero_grad();
  d.codebook.store().zero_grad();
  d.gamma = rx.gamma ? &*rx.gamma : nullptr;
  d.dl_bytes = kBytesPerParam * (d.phi.parameter_count() + d.codebook.parameter_count());
  return d;
}

FineTuneResult fine_tune(const ad::ParamStore& theta, const DownloadedDecoder& downloaded,
                         const data::Dataset& local_train, const SlfConfig& cfg) {
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.effective_lr() > 0.0)) {
    throw Error(ErrorKind::kArgument, "fine_tune: epochs, batch_size and lr must be positive");
  }
  if (local_train.size() == 0) throw Error(ErrorKind::kArgument, "fine_tune: empty local dataset");

  FineTuneResult r;
  r.mask = freeze_mask(cfg.ell);
  r.theta = theta;
  r.phi = downloaded.phi;
  r.codebook = downloaded.codebook;
  if (cfg.ell == 0 && cfg.reinit_on_full_retrain) {
    Rng rng = Rng::derive(cfg.seed, kStreamReinit);
    const auto layers = trx::decoder_layers();
    ad::init_params(layers, r.phi, rng);
    r.codebook = vq::Codebook::random(r.codebook.num_codewords(), r.codebook.dim(), rng);
  }
  r.theta.set_all_frozen(false);
  r.phi.set_all_frozen(false);
  r.codebook.set_frozen(r.mask.is_frozen(Unit::kCodebook));
  for (Unit u : r.mask.frozen_units) {
    if (u != Unit::kCodebook) r.phi.set_frozen(std::string(unit_name(u)), true);
  }
  r.theta.zero_grad();
  r.phi.zero_grad();
  r.codebook.store().zero_grad();

  const channel::DmcChannel ch(r.codebook.num_codewords(), cfg.measured_epsilon);
  Rng rng = Rng::derive(cfg.seed, kStreamFineTune);
  const double lr = cfg.effective_lr();
  ad::AdamState opt_theta, opt_phi, opt_cb;
  std::vector<std::size_t> order(local_train.size());
  const auto b = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < order.size(); i += b) {
      std::span<const std::size_t> idx(order.data() + i, std::min(b, order.size() - i));
      const double loss = trx::vq_backward(r.theta, r.phi, r.codebook, local_train.gather(idx), ch,
                                           rng, cfg.lambda_c, cfg.loss_target);
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::kNumeric, "fine_tune: loss diverged at epoch " +
                                             std::to_string(epoch) + ", batch " +
                                             std::to_string(batches));
      }
      assert_no_frozen_grad(r.phi);
      assert_no_frozen_grad(r.codebook.store());
      ad::adam_step(r.theta, opt_theta, lr);
      ad::adam_step(r.phi, opt_phi, lr);
      ad::adam_step(r.codebook.store(), opt_cb, lr);
      r.theta.zero_grad();
      r.phi.zero_grad();
      r.codebook.store().zero_grad();
      loss_sum += loss;
      ++batches;
    }
    r.loss_curve.push_back(loss_sum / static_cast<double>(batches));
  }
  return r;
}

Upload upload_payload(const ad::ParamStore& phi, const vq::Codebook& codebook,
                      const FreezeMask& mask) {
  Upload up;
  up.report.dl_bytes = kBytesPerParam * (phi.parameter_count() + codebook.parameter_count());
  for (Unit u : kFreezeOrder) {
    UnitBytes ub;
    ub.unit = u;
    ub.uploaded = !mask.is_frozen(u);
    if (u == Unit::kCodebook) {
      ub.params = codebook.parameter_count();
      if (ub.uploaded) {
        up.payload.codebook = codebook.entries();
        up.payload.codebook->clear_grad();
      }
    } else {
      const std::string name(unit_name(u));
      const ad::ParamEntry& e = phi.at(name);
      ub.params = e.parameter_count();
      if (ub.uploaded) {
        ad::ParamEntry copy = e;
        copy.frozen = false;
        copy.weights.clear_grad();
        if (copy.bias) copy.bias->clear_grad();
        up.payload.phi_units.emplace(name, std::move(copy));
      }
    }
    ub.bytes = kBytesPerParam * ub.params;
    if (ub.uploaded) up.report.ul_bytes += ub.bytes;
    up.report.units.push_back(ub);
  }
  return up;
}

trx::Transceiver apply_upload(const trx::Transceiver& rx, const UploadPayload& payload) {
  trx::Transceiver out = rx;
  for (const auto& [name, entry] : payload.phi_units) {
    const bool known = std::any_of(std::begin(trx::kDecoderUnits), std::end(trx::kDecoderUnits),
                                   [&](std::string_view u) { return u == name; });
    if (!known || !out.phi.contains(name)) {
      throw Error(ErrorKind::kArgument, "apply_upload: unknown unit '" + name + "'");
    }
    ad::ParamEntry& dst = out.phi.at(name);
    const bool bias_ok = dst.bias.has_value() == entry.bias.has_value() &&
                         (!dst.bias || dst.bias->shape() == entry.bias->shape());
    if (dst.weights.shape() != entry.weights.shape() || !bias_ok) {
      throw Error(ErrorKind::kShape, "apply_upload: unit '" + name + "' has shape " +
                                         ad::shape_str(entry.weights.shape()) + ", receiver expects " +
                                         ad::shape_str(dst.weights.shape()));
    }
    dst.weights = entry.weights;
    dst.bias = entry.bias;
  }
  if (payload.codebook) {
    if (payload.codebook->shape() != out.codebook.entries().shape()) {
      throw Error(ErrorKind::kShape, "apply_upload: codebook shape " +
                                         ad::shape_str(payload.codebook->shape()) +
                                         ", receiver expects " +
                                         ad::shape_str(out.codebook.entries().shape()));
    }
    out.codebook = vq::Codebook(*payload.codebook);
  }
  return out;
}

data::Dataset mix_datasets(const data::Dataset& x1, const data::Dataset& x3, double lambda13,
                           std::size_t n, std::uint64_t seed) {
  if (!(lambda13 >= 0.0 && lambda13 <= 1.0)) {
    throw Error(ErrorKind::kArgument, "mix_datasets: lambda13 must lie in [0,1]");
  }
  if (n == 0) throw Error(ErrorKind::kArgument, "mix_datasets: n must be positive");
  const auto n1 = static_cast<std::size_t>(std::llround((1.0 - lambda13) * static_cast<double>(n)));
  const std::size_t n3 = n - n1;
  if ((n1 > 0 && x1.size() == 0) || (n3 > 0 && x3.size() == 0)) {
    throw Error(ErrorKind::kArgument, "mix_datasets: a required source is empty");
  }
  Rng rng = Rng::derive(seed, kStreamMix);
  const auto i1 = draw_indices(x1.size(), n1, rng);
  const auto i3 = draw_indices(x3.size(), n3, rng);

  data::Dataset mixed;
  if (n3 == 0) {
    mixed = x1.subset(i1);
  } else if (n1 == 0) {
    mixed = x3.subset(i3);
  } else {
    mixed = data::concat(x1.subset(i1), x3.subset(i3));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  return mixed.subset(order);
}

trx::Transceiver updated_transmitter(const trx::Transceiver& tx, const FineTuneResult& ft) {
  trx::Transceiver out = tx;
  out.theta = ft.theta;
  out.codebook = ft.codebook;
  return out;
}

trx::Transceiver virtual_receiver(const trx::Transceiver& rx, const FineTuneResult& ft) {
  trx::Transceiver out = rx;
  out.phi = ft.phi;
  out.codebook = ft.codebook;
  return out;
}

}  // namespace slf::protocol
