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
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "slf/costmodel.hpp"
#include "slf/data.hpp"
#include "slf/protocol.hpp"
#include "slf/transceiver.hpp"

namespace slf::exp {

struct TransceiverSpec {
  std::string id;
  std::string dataset;  // "mnist" or "cifar10"
  double epsilon = 1e-5;
  std::uint64_t seed = 1;
};

struct DataConfig {
  std::filesystem::path mnist_dir = "data/mnist";
  std::filesystem::path cifar_dir = "data/cifar-10-batches-bin";
  std::size_t max_samples = 10000;
  double split_ratio = 0.8;
  std::uint64_t split_seed = 7;
};

struct EvalConfig {
  int n_channel_draws = 1;
  std::uint64_t seed = 12345;
  /// Channel used by eval-cross; unset means each transmitter's training epsilon.
  std::optional<double> epsilon;
  int image_grid = 8;
};

struct SlfSection {
  std::string tx = "TRX_1";
  std::string rx = "TRX_2";
  /// Source of the dissimilar data mixed into the transmitter's dataset.
  std::string mix_with = "TRX_3";
  double epsilon_cross = 1e-5;
  double lambda13 = 0.0;
  protocol::SlfConfig session;
};

struct SweepConfig {
  std::vector<double> epsilon_cross = {1e-5, 1e-3, 1e-2, 1e-1};
  std::vector<double> lambda13 = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<int> ell = {0, 1, 2, 3, 4};
  std::vector<std::uint64_t> seeds;  // empty: the run seed only
};

struct CostSection {
  std::string mode = "reference";  // "reference" or "measured"
  bool include_task_head = false;
  std::optional<std::uint64_t> n_samples;
};

struct ExperimentConfig {
  std::string scenario = "channel_dissimilarity";
  trx::Task task = trx::Task::kReconstruction;
  std::uint64_t seed = 1;
  DataConfig data;
  std::vector<TransceiverSpec> transceivers;
  trx::PretrainConfig pretrain;
  trx::ClassifierConfig classifier;
  SlfSection slf;
  SweepConfig sweep;
  EvalConfig eval;
  cost::LinkParams links;
  cost::ComputeParams compute;
  CostSection cost;
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> checkpoint_dir;

  std::filesystem::path checkpoints() const;
  const TransceiverSpec& transceiver(const std::string& id) const;
};

/// Defaults: TRX_1 (mnist, 1e-5), TRX_2 (mnist, 1e-1), TRX_3 (cifar10, 1e-5).
ExperimentConfig default_config();
/// Overlays a JSON document on the defaults. Unknown keys are rejected by
/// their dotted path.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct Splits {
  data::Dataset train;
  data::Dataset test;
};

/// Canonical, capped at max_samples, split by split_ratio. CIFAR-10 labels
/// are offset by 10 into the joint label space.
Splits load_splits(const DataConfig& cfg, const std::string& dataset_id);

struct MetricsRow {
  std::string scenario;
  std::string tx_id;
  std::string rx_id;
  double epsilon_cross = 0.0;
  double lambda13 = 0.0;
  std::optional<int> ell;
  std::uint64_t seed = 0;
  double mse = 0.0;
  std::optional<double> top1;
  std::optional<std::uint64_t> dl_bytes;
  std::optional<std::uint64_t> ul_bytes;
  std::optional<double> flops;
  std::optional<cost::CostBreakdown> cost;
};

inline constexpr const char* kCsvHeader =
    "scenario,tx_id,rx_id,epsilon_cross,lambda13,ell,seed,mse,top1,dl_bytes,ul_bytes,flops,dl_s,"
    "ft_s,ul_s,recovery_s";

std::string format_row(const MetricsRow& row);
MetricsRow parse_row(const std::string& line);
std::vector<MetricsRow> read_rows(const std::filesystem::path& path);
/// Appends rows, writing the header first if the file is new or empty.
void append_rows(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

struct SessionInputs {
  const trx::Transceiver* tx = nullptr;
  const trx::Transceiver* rx = nullptr;
  const data::Dataset* train = nullptr;  // transmitter-local
  const data::Dataset* test = nullptr;
  protocol::SlfConfig slf;
  int n_channel_draws = 1;
  std::uint64_t eval_seed = 0;
  cost::LinkParams links;
  cost::ComputeParams compute;
  bool include_task_head = false;
};

struct SessionResult {
  trx::Metrics pre;    // tx and rx before alignment
  trx::Metrics local;  // transmitter-side virtual pair after fine-tuning
  trx::Metrics post;   // updated transmitter and receiver after upload
  protocol::FineTuneResult fine_tune;
  protocol::Upload upload;
  trx::Transceiver tx_after;
  trx::Transceiver rx_after;
  double flops = 0.0;
  cost::CostBreakdown cost;
};

/// download -> fine_tune -> upload -> apply_upload, evaluated at the measured
/// epsilon with the same evaluation seed throughout.
SessionResult run_session(const SessionInputs& in);

/// Removes or keeps the classifier according to the configured task.
trx::Transceiver for_task(trx::Transceiver t, trx::Task task);

/// Plain (P2) 8-bit PGM of the first `count` images of `x` (top row) and
/// `x_hat` (bottom row).
void write_pgm_grid(const std::filesystem::path& path, const ad::Tensor& x,
                    const ad::Tensor& x_hat, int count);

void cmd_pretrain(const ExperimentConfig& cfg, std::ostream& log);
void cmd_eval_cross(const ExperimentConfig& cfg, std::ostream& log);
void cmd_slf(const ExperimentConfig& cfg, std::ostream& log);
void cmd_cost(const ExperimentConfig& cfg, std::ostream& log);
/// Returns the number of failed cells; completed cells are kept either way.
int cmd_sweep(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace slf::exp
