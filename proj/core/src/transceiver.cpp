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

#include "slf/transceiver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "slf/ad/adam.hpp"
#include "slf/ad/tape.hpp"
#include "slf/error.hpp"

namespace slf::trx {
namespace {

using ad::LayerSpec;

constexpr int kEvalBatch = 256;

// Seed streams, one per independently initialized block.
constexpr std::uint64_t kStreamEncoder = 1;
constexpr std::uint64_t kStreamDecoder = 2;
constexpr std::uint64_t kStreamCodebook = 3;
constexpr std::uint64_t kStreamClassifier = 4;
constexpr std::uint64_t kStreamTraining = 10;

const std::vector<LayerSpec>& encoder() {
  static const std::vector<LayerSpec> layers = encoder_layers();
  return layers;
}

const std::vector<LayerSpec>& decoder() {
  static const std::vector<LayerSpec> layers = decoder_layers();
  return layers;
}

void check_canonical(const ad::Shape& shape, const char* what) {
  if (shape.size() != 4 || shape[1] != data::kCanonicalChannels ||
      shape[2] != data::kCanonicalSide || shape[3] != data::kCanonicalSide) {
    throw Error(ErrorKind::kShape, std::string(what) + ": expected [N,1,28,28] input, got " +
                                       ad::shape_str(shape));
  }
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size, Rng* rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (rng != nullptr) rng->shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  const auto b = static_cast<std::size_t>(batch_size);
  for (std::size_t i = 0; i < n; i += b) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + b)));
  }
  return out;
}

void check_finite(double loss, const char* what, int epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    throw Error(ErrorKind::kNumeric, std::string(what) + ": loss diverged (" +
                                         std::to_string(loss) + ") at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batch));
  }
}

}  // namespace

std::string_view task_name(Task task) {
  return task == Task::kReconstruction ? "reconstruction" : "classification";
}

Task parse_task(std::string_view name) {
  if (name == "reconstruction") return Task::kReconstruction;
  if (name == "classification") return Task::kClassification;
  throw Error(ErrorKind::kConfig, "unknown task '" + std::string(name) + "'");
}

std::vector<LayerSpec> encoder_layers() {
  return {
      LayerSpec::conv2d("enc_conv1", 1, 16, 4, 2, 1),
      LayerSpec::relu("enc_relu1"),
      LayerSpec::conv2d("enc_conv2", 16, 32, 4, 2, 1),
      LayerSpec::relu("enc_relu2"),
      LayerSpec::conv2d("enc_conv3", 32, kCodeDim, 3, 1, 1),
  };
}

std::vector<LayerSpec> decoder_layers() {
  return {
      LayerSpec::conv2d("dec_conv1", kCodeDim, 32, 3, 1, 1),
      LayerSpec::relu("dec_relu1"),
      LayerSpec::conv_transpose2d("dec_conv2", 32, 16, 4, 2, 1),
      LayerSpec::relu("dec_relu2"),
      LayerSpec::conv_transpose2d("dec_conv3", 16, 1, 4, 2, 1),
  };
}

std::vector<LayerSpec> classifier_layers(int num_classes) {
  if (num_classes < 2) throw Error(ErrorKind::kArgument, "classifier needs at least 2 classes");
  return {
      LayerSpec::conv2d("cls_conv1", 1, 8, 3, 1, 1),
      LayerSpec::relu("cls_relu1"),
      LayerSpec::maxpool2d("cls_pool1", 2, 2),
      LayerSpec::conv2d("cls_conv2", 8, 16, 3, 1, 1),
      LayerSpec::relu("cls_relu2"),
      LayerSpec::maxpool2d("cls_pool2", 2, 2),
      LayerSpec::dense("cls_fc1", 16 * 7 * 7, 64),
      LayerSpec::relu("cls_relu3"),
      LayerSpec::dense("cls_fc2", 64, num_classes),
  };
}

Transceiver build_transceiver(Task task, const ad::Shape& input_shape, std::uint64_t seed,
                              int num_classes) {
  ad::Shape batch_shape = input_shape;
  if (batch_shape.size() == 3) batch_shape.insert(batch_shape.begin(), 1);
  check_canonical(batch_shape, "build_transceiver");

  Transceiver t;
  t.task = task;
  t.seed = seed;
  Rng enc_rng = Rng::derive(seed, kStreamEncoder);
  Rng dec_rng = Rng::derive(seed, kStreamDecoder);
  Rng cb_rng = Rng::derive(seed, kStreamCodebook);
  ad::init_params(encoder(), t.theta, enc_rng);
  ad::init_params(decoder(), t.phi, dec_rng);
  t.codebook = vq::Codebook::random(kNumCodewords, kCodeDim, cb_rng);
  if (task == Task::kClassification) {
    Rng cls_rng = Rng::derive(seed, kStreamClassifier);
    Classifier c;
    c.num_classes = num_classes;
    const auto layers = classifier_layers(num_classes);
    ad::init_params(layers, c.params, cls_rng);
    t.gamma = std::move(c);
  }
  return t;
}

Transceiver with_classifier(Transceiver trx, Classifier gamma) {
  trx.gamma = std::move(gamma);
  trx.task = Task::kClassification;
  return trx;
}

double vq_backward(ad::ParamStore& theta, ad::ParamStore& phi, vq::Codebook& codebook,
                   const ad::Tensor& x, const channel::DmcChannel& ch, Rng& rng, double lambda_c,
                   vq::CodebookLossTarget target) {
  check_canonical(x.shape(), "vq_backward");
  ad::Tape tape;
  ad::Var xv = tape.constant(x);
  ad::Var z = ad::forward_all(encoder(), theta, xv);
  const int n = z.value().dim(0), h = z.value().dim(2), w = z.value().dim(3);
  ad::Var z_rows = ad::channels_to_rows(z);

  const std::vector<int> sent = vq::nearest_indices(z_rows.value(), codebook);
  const std::vector<int> received = ch.transmit(sent, rng);

  ad::Var table = tape.param(codebook.store(), vq::Codebook::kParamId);
  ad::Var zq_received = ad::gather_rows(table, received);
  ad::Var zq_target = target == vq::CodebookLossTarget::kReceived
                          ? zq_received
                          : ad::gather_rows(table, sent);

  ad::Var dec_in = ad::rows_to_channels(ad::straight_through(z_rows, zq_received), n, h, w);
  ad::Var x_hat = ad::forward_all(decoder(), phi, dec_in);
  ad::Var loss = vq::vqvae_loss(xv, x_hat, zq_target, z_rows, lambda_c);
  tape.backward(loss);
  return loss.value()[0];
}

PretrainResult pretrain(Transceiver& trx, const data::Dataset& train, const data::Dataset& test,
                        const PretrainConfig& cfg, const EpochCallback& on_epoch) {
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0.0) || !(cfg.lambda_c >= 0.0)) {
    throw Error(ErrorKind::kArgument, "pretrain: epochs, batch_size and lr must be positive");
  }
  if (train.size() == 0 || test.size() == 0) {
    throw Error(ErrorKind::kArgument, "pretrain: empty train or test split");
  }
  check_canonical(train.images.shape(), "pretrain");
  const channel::DmcChannel ch(trx.codebook.num_codewords(), cfg.epsilon);
  Rng rng = Rng::derive(cfg.seed, kStreamTraining);
  const std::uint64_t eval_seed = mix_seed(cfg.seed, kStreamTraining + 1);

  PretrainResult result;
  result.untrained_test_mse = evaluate(trx, trx, test, cfg.epsilon, 1, eval_seed).mse;

  ad::AdamState opt_theta, opt_phi, opt_cb;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = make_batches(train.size(), cfg.batch_size, &rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      trx.theta.zero_grad();
      trx.phi.zero_grad();
      trx.codebook.store().zero_grad();
      const double loss = vq_backward(trx.theta, trx.phi, trx.codebook, train.gather(batches[b]),
                                      ch, rng, cfg.lambda_c, cfg.loss_target);
      check_finite(loss, "pretrain", epoch, b);
      loss_sum += loss;
      ad::adam_step(trx.theta, opt_theta, cfg.lr);
      ad::adam_step(trx.phi, opt_phi, cfg.lr);
      ad::adam_step(trx.codebook.store(), opt_cb, cfg.lr);
    }
    trx.theta.zero_grad();
    trx.phi.zero_grad();
    trx.codebook.store().zero_grad();

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(batches.size());
    stats.test_mse = evaluate(trx, trx, test, cfg.epsilon, 1, eval_seed).mse;
    result.curve.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  trx.trained_epsilon = cfg.epsilon;
  trx.trained_dataset_id = train.source_id;
  return result;
}

Classifier pretrain_classifier(std::span<const data::Dataset* const> datasets,
                               const ClassifierConfig& cfg) {
  if (datasets.empty()) throw Error(ErrorKind::kArgument, "pretrain_classifier: no datasets");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0.0)) {
    throw Error(ErrorKind::kArgument, "pretrain_classifier: epochs, batch_size and lr must be positive");
  }
  data::Dataset all = *datasets[0];
  for (std::size_t i = 1; i < datasets.size(); ++i) all = data::concat(all, *datasets[i]);
  check_canonical(all.images.shape(), "pretrain_classifier");

  Classifier c;
  c.num_classes = all.label_offset + all.num_classes;
  const auto layers = classifier_layers(c.num_classes);
  Rng init_rng = Rng::derive(cfg.seed, kStreamClassifier);
  ad::init_params(layers, c.params, init_rng);

  Rng rng = Rng::derive(cfg.seed, kStreamTraining);
  ad::AdamState opt;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = make_batches(all.size(), cfg.batch_size, &rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      c.params.zero_grad();
      ad::Tape tape;
      ad::Var x = tape.constant(all.gather(batches[b]));
      ad::Var logits = ad::forward_all(layers, c.params, x);
      const std::vector<int> labels = all.gather_labels(batches[b]);
      ad::Var loss = ad::softmax_cross_entropy(logits, labels);
      tape.backward(loss);
      check_finite(loss.value()[0], "pretrain_classifier", epoch, b);
      ad::adam_step(c.params, opt, cfg.lr);
    }
  }
  c.params.zero_grad();
  c.params.set_all_frozen(true);
  return c;
}

std::vector<int> classify(const Classifier& gamma, const ad::Tensor& images) {
  check_canonical(images.shape(), "classify");
  const auto layers = classifier_layers(gamma.num_classes);
  ad::Tape tape;
  ad::Var logits = ad::forward_all(layers, gamma.params, tape.constant(images));
  const ad::Tensor& v = logits.value();
  const int n = v.dim(0), c = v.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const float* row = v.ptr() + static_cast<std::size_t>(i) * c;
    out[static_cast<std::size_t>(i)] = static_cast<int>(std::max_element(row, row + c) - row);
  }
  return out;
}

std::vector<int> encode(const ad::ParamStore& theta, const vq::Codebook& codebook,
                        const ad::Tensor& x) {
  check_canonical(x.shape(), "encode");
  ad::Tape tape;
  ad::Var z = ad::forward_all(encoder(), theta, tape.constant(x));
  return vq::nearest_indices(ad::channels_to_rows(z).value(), codebook);
}

ad::Tensor decode(const ad::ParamStore& phi, const vq::Codebook& codebook,
                  std::span<const int> indices, int n) {
  constexpr int kGrid = data::kCanonicalSide / 4;
  if (n < 1 || indices.size() != static_cast<std::size_t>(n) * kGrid * kGrid) {
    throw Error(ErrorKind::kShape, "decode: " + std::to_string(indices.size()) +
                                       " indices do not form " + std::to_string(n) +
                                       " latent grids of 7x7");
  }
  ad::Tape tape;
  ad::Var table = tape.param(codebook.store(), vq::Codebook::kParamId);
  ad::Var grid = ad::rows_to_channels(ad::gather_rows(table, indices), n, kGrid, kGrid);
  return ad::forward_all(decoder(), phi, grid).value();
}

EndToEndOutput end_to_end(const Transceiver& tx, const Transceiver& rx, const ad::Tensor& x,
                          double epsilon, Rng& rng) {
  if (tx.codebook.num_codewords() != rx.codebook.num_codewords() ||
      tx.codebook.dim() != rx.codebook.dim()) {
    throw Error(ErrorKind::kShape, "end_to_end: transmitter codebook " +
                                       ad::shape_str(tx.codebook.entries().shape()) +
                                       " incompatible with receiver codebook " +
                                       ad::shape_str(rx.codebook.entries().shape()));
  }
  const channel::DmcChannel ch(tx.codebook.num_codewords(), epsilon);
  const std::vector<int> sent = encode(tx.theta, tx.codebook, x);
  const std::vector<int> received = ch.transmit(sent, rng);
  EndToEndOutput out;
  out.x_hat = decode(rx.phi, rx.codebook, received, x.dim(0));
  if (rx.gamma) out.predicted = classify(*rx.gamma, out.x_hat);
  return out;
}

Metrics evaluate(const Transceiver& tx, const Transceiver& rx, const data::Dataset& ds,
                 double epsilon, int n_channel_draws, std::uint64_t seed) {
  if (ds.size() == 0) throw Error(ErrorKind::kArgument, "evaluate: empty dataset");
  if (n_channel_draws < 1) throw Error(ErrorKind::kArgument, "evaluate: n_channel_draws must be >= 1");
  Rng rng(seed);
  const auto batches = make_batches(ds.size(), kEvalBatch, nullptr);
  const std::size_t per = ds.sample_size();

  double sum = 0.0, sum_sq = 0.0;
  std::size_t correct = 0, count = 0;
  for (int draw = 0; draw < n_channel_draws; ++draw) {
    for (const auto& batch : batches) {
      const ad::Tensor x = ds.gather(batch);
      const EndToEndOutput out = end_to_end(tx, rx, x, epsilon, rng);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        double se = 0.0;
        for (std::size_t j = 0; j < per; ++j) {
          const double d = static_cast<double>(x[i * per + j]) - out.x_hat[i * per + j];
          se += d * d;
        }
        const double mse = se / static_cast<double>(per);
        sum += mse;
        sum_sq += mse * mse;
        if (out.predicted && (*out.predicted)[i] == ds.labels[batch[i]]) ++correct;
        ++count;
      }
    }
  }
  Metrics m;
  m.n_samples = count;
  m.mse = sum / static_cast<double>(count);
  if (count > 1) {
    const double var = std::max(0.0, (sum_sq - sum * m.mse) / static_cast<double>(count - 1));
    m.mse_stderr = std::sqrt(var / static_cast<double>(count));
  }
  if (rx.gamma) m.top1_accuracy = static_cast<double>(correct) / static_cast<double>(count);
  return m;
}

double classifier_accuracy(const Classifier& gamma, const data::Dataset& ds) {
  if (ds.size() == 0) throw Error(ErrorKind::kArgument, "classifier_accuracy: empty dataset");
  std::size_t correct = 0;
  for (const auto& batch : make_batches(ds.size(), kEvalBatch, nullptr)) {
    const auto pred = classify(gamma, ds.gather(batch));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (pred[i] == ds.labels[batch[i]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace slf::trx
