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
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slf/ad/layers.hpp"
#include "slf/ad/params.hpp"
#include "slf/channel.hpp"
#include "slf/data.hpp"
#include "slf/rng.hpp"
#include "slf/vq.hpp"

namespace slf::trx {

enum class Task { kReconstruction, kClassification };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);

inline constexpr int kNumCodewords = 16;
inline constexpr int kCodeDim = 16;

/// Encoder: conv4x4/s2 1->16, conv4x4/s2 16->32, conv3x3 32->16. 28x28 -> 7x7x16.
std::vector<ad::LayerSpec> encoder_layers();
/// Decoder: conv3x3 16->32, convT4x4/s2 32->16, convT4x4/s2 16->1. 7x7x16 -> 28x28.
std::vector<ad::LayerSpec> decoder_layers();
/// Classifier: two conv3x3 + maxpool blocks (8, 16 channels), dense 784->64, dense 64->C.
std::vector<ad::LayerSpec> classifier_layers(int num_classes);

/// Weight-bearing decoder layer ids, input side first.
inline constexpr std::string_view kDecoderUnits[] = {"dec_conv1", "dec_conv2", "dec_conv3"};

struct Classifier {
  ad::ParamStore params;
  int num_classes = 10;
};

struct Transceiver {
  ad::ParamStore theta;
  ad::ParamStore phi;
  vq::Codebook codebook;
  std::optional<Classifier> gamma;
  Task task = Task::kReconstruction;
  double trained_epsilon = 0.0;
  std::string trained_dataset_id;
  std::uint64_t seed = 0;
};

/// Fresh transceiver. Reconstruction transceivers carry no classifier;
/// classification transceivers get an untrained one with `num_classes` outputs.
Transceiver build_transceiver(Task task, const ad::Shape& input_shape, std::uint64_t seed,
                              int num_classes = 10);

/// Attaches a (pretrained) classifier, turning the transceiver into a
/// classification transceiver.
Transceiver with_classifier(Transceiver trx, Classifier gamma);

struct PretrainConfig {
  int epochs = 30;
  int batch_size = 128;
  double lr = 1e-3;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  double lambda_c = 0.25;
  vq::CodebookLossTarget loss_target = vq::CodebookLossTarget::kReceived;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double test_mse = 0.0;
};

struct PretrainResult {
  double untrained_test_mse = 0.0;
  std::vector<EpochStats> curve;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Jointly trains theta, phi and the codebook through the channel at
/// cfg.epsilon. Test MSE is measured at the same epsilon after each epoch.
PretrainResult pretrain(Transceiver& trx, const data::Dataset& train, const data::Dataset& test,
                        const PretrainConfig& cfg, const EpochCallback& on_epoch = {});

/// One optimization step's forward/backward over the full VQ-VAE pipeline.
/// Gradients are left in the unfrozen entries of theta, phi and the codebook.
/// Returns the batch loss.
double vq_backward(ad::ParamStore& theta, ad::ParamStore& phi, vq::Codebook& codebook,
                   const ad::Tensor& x, const channel::DmcChannel& ch, Rng& rng, double lambda_c,
                   vq::CodebookLossTarget target);

struct ClassifierConfig {
  int epochs = 10;
  int batch_size = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Cross-entropy training on clean images. The label space is the union of
/// the datasets' label spaces, starting at 0.
Classifier pretrain_classifier(std::span<const data::Dataset* const> datasets,
                               const ClassifierConfig& cfg);

std::vector<int> classify(const Classifier& gamma, const ad::Tensor& images);

/// Encoder plus nearest-codeword search: one index per latent position,
/// sample-major.
std::vector<int> encode(const ad::ParamStore& theta, const vq::Codebook& codebook,
                        const ad::Tensor& x);
/// Index lookup in `codebook` followed by the decoder.
ad::Tensor decode(const ad::ParamStore& phi, const vq::Codebook& codebook,
                  std::span<const int> indices, int n);

struct EndToEndOutput {
  ad::Tensor x_hat;
  std::optional<std::vector<int>> predicted;
};

/// tx.theta and tx.codebook encode; the indices cross DMC(epsilon); rx.codebook,
/// rx.phi and rx.gamma decode and classify.
EndToEndOutput end_to_end(const Transceiver& tx, const Transceiver& rx, const ad::Tensor& x,
                          double epsilon, Rng& rng);

struct Metrics {
  double mse = 0.0;
  double mse_stderr = 0.0;
  std::optional<double> top1_accuracy;
  std::size_t n_samples = 0;
};

/// Mean per-pixel squared error (and top-1 when rx classifies) over every
/// sample and n_channel_draws channel realizations.
Metrics evaluate(const Transceiver& tx, const Transceiver& rx, const data::Dataset& ds,
                 double epsilon, int n_channel_draws, std::uint64_t seed);

double classifier_accuracy(const Classifier& gamma, const data::Dataset& ds);

}  // namespace slf::trx
