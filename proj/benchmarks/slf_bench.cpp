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

#include <vector>

#include "benchmark/benchmark.h"
#include "slf/ad/adam.hpp"
#include "slf/ad/layers.hpp"
#include "slf/ad/tape.hpp"
#include "slf/channel.hpp"
#include "slf/protocol.hpp"
#include "slf/rng.hpp"
#include "slf/transceiver.hpp"

namespace {

using slf::ad::LayerSpec;
using slf::ad::Tensor;

Tensor uniform(slf::ad::Shape shape, slf::Rng& rng) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(rng.uniform01());
  return t;
}

slf::data::Dataset images(int n) {
  slf::Rng rng(1);
  slf::data::Dataset ds;
  ds.images = uniform({n, 1, 28, 28}, rng);
  for (int i = 0; i < n; ++i) ds.labels.push_back(i % 10);
  return ds;
}

// Arg: 0 conv, 1 transposed conv. Both are the mid-network 4x4/s2 layers.
LayerSpec bench_layer(int which) {
  return which == 0 ? LayerSpec::conv2d("c", 16, 32, 4, 2, 1)
                    : LayerSpec::conv_transpose2d("t", 32, 16, 4, 2, 1);
}

void BM_ConvForward(benchmark::State& state) {
  slf::Rng rng(2);
  const std::vector<LayerSpec> layer = {bench_layer(static_cast<int>(state.range(0)))};
  const int batch = static_cast<int>(state.range(1));
  slf::ad::ParamStore store;
  slf::ad::init_params(layer, store, rng);
  const Tensor x = uniform(state.range(0) == 0 ? slf::ad::Shape{batch, 16, 14, 14}
                                               : slf::ad::Shape{batch, 32, 7, 7},
                           rng);
  for (auto _ : state) {
    slf::ad::Tape t;
    benchmark::DoNotOptimize(slf::ad::forward_all(layer, store, t.constant(x)).value().ptr());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ConvForward)->ArgsProduct({{0, 1}, {1, 128}});

void BM_ConvForwardBackward(benchmark::State& state) {
  slf::Rng rng(3);
  const std::vector<LayerSpec> layer = {bench_layer(static_cast<int>(state.range(0)))};
  const int batch = static_cast<int>(state.range(1));
  slf::ad::ParamStore store;
  slf::ad::init_params(layer, store, rng);
  const Tensor x = uniform(state.range(0) == 0 ? slf::ad::Shape{batch, 16, 14, 14}
                                               : slf::ad::Shape{batch, 32, 7, 7},
                           rng);
  for (auto _ : state) {
    slf::ad::Tape t;
    auto y = slf::ad::forward_all(layer, store, t.leaf(x));
    t.backward(slf::ad::sum_squares(y));
    store.zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ConvForwardBackward)->ArgsProduct({{0, 1}, {1, 128}});

void BM_VqTrainStep(benchmark::State& state) {
  auto trx = slf::trx::build_transceiver(slf::trx::Task::kReconstruction, {1, 28, 28}, 4);
  const int batch = static_cast<int>(state.range(0));
  const auto ds = images(batch);
  const slf::channel::DmcChannel ch(16, 1e-5);
  slf::Rng rng(5);
  slf::ad::AdamState a, b, c;
  for (auto _ : state) {
    benchmark::DoNotOptimize(slf::trx::vq_backward(trx.theta, trx.phi, trx.codebook, ds.images, ch, rng, 0.25,
                                                   slf::vq::CodebookLossTarget::kReceived));
    slf::ad::adam_step(trx.theta, a, 1e-3);
    slf::ad::adam_step(trx.phi, b, 1e-3);
    slf::ad::adam_step(trx.codebook.store(), c, 1e-3);
    trx.theta.zero_grad();
    trx.phi.zero_grad();
    trx.codebook.store().zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_VqTrainStep)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Evaluate(benchmark::State& state) {
  const auto tx = slf::trx::build_transceiver(slf::trx::Task::kClassification, {1, 28, 28}, 6);
  const auto rx = slf::trx::build_transceiver(slf::trx::Task::kClassification, {1, 28, 28}, 7);
  const auto ds = images(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(slf::trx::evaluate(tx, rx, ds, 0.1, 1, 8).mse);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Evaluate)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_DmcTransmit(benchmark::State& state) {
  const slf::channel::DmcChannel ch(16, 0.1);
  const std::vector<int> sent(static_cast<std::size_t>(state.range(0)), 5);
  slf::Rng rng(9);
  for (auto _ : state) benchmark::DoNotOptimize(ch.transmit(sent, rng).data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DmcTransmit)->Arg(49 * 128);

void BM_FineTuneEpoch(benchmark::State& state) {
  const auto tx = slf::trx::build_transceiver(slf::trx::Task::kReconstruction, {1, 28, 28}, 10);
  const auto rx = slf::trx::build_transceiver(slf::trx::Task::kReconstruction, {1, 28, 28}, 11);
  const auto dl = slf::protocol::download_decoder(rx);
  const auto ds = images(256);
  slf::protocol::SlfConfig cfg;
  cfg.ell = static_cast<int>(state.range(0));
  cfg.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(slf::protocol::fine_tune(tx.theta, dl, ds, cfg).loss_curve);
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_FineTuneEpoch)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
