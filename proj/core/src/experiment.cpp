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

#include "slf/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "slf/checkpoint.hpp"
#include "slf/error.hpp"
#include "slf/rng.hpp"

namespace slf::exp {
namespace {

using nlohmann::json;

constexpr int kCifarLabelOffset = 10;
constexpr std::uint64_t kStreamClassifier = 100;
constexpr std::uint64_t kStreamMixTest = 1;

// Reads keys of one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorKind::kConfig, "config '" + label() + "' must be an object");
  }
  ~Section() = default;

  template <typename T>
  void get(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::kConfig, "config key '" + dotted(key) + "' has the wrong type");
    }
  }

  template <typename T>
  void get_optional(const char* key, std::optional<T>& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      dst.reset();
      return;
    }
    T v{};
    get(key, v);
    dst = v;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string dotted(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw Error(ErrorKind::kConfig, "unknown config key '" + dotted(key) + "'");
    }
  }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const char* field) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::kFormat, std::string("csv field '") + field + "': bad number '" + s + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s, const char* field) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::kFormat, std::string("csv field '") + field + "': bad integer '" + s + "'");
  }
  return v;
}

void check_positive(double v, const std::string& key) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw Error(ErrorKind::kConfig, "config key '" + key + "' must be positive");
  }
}

void check_probability(double v, const std::string& key) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw Error(ErrorKind::kConfig, "config key '" + key + "' must lie in [0,1]");
  }
}

void validate(const ExperimentConfig& c) {
  if (c.transceivers.empty()) throw Error(ErrorKind::kConfig, "config needs at least one transceiver");
  std::set<std::string> ids;
  for (const auto& t : c.transceivers) {
    if (t.id.empty() || t.id.find(',') != std::string::npos || !ids.insert(t.id).second) {
      throw Error(ErrorKind::kConfig, "transceiver ids must be unique, non-empty and comma-free");
    }
    if (t.dataset != "mnist" && t.dataset != "cifar10") {
      throw Error(ErrorKind::kConfig, "transceiver '" + t.id + "': unknown dataset '" + t.dataset + "'");
    }
    check_probability(t.epsilon, "transceivers.epsilon");
  }
  if (c.scenario.find(',') != std::string::npos) throw Error(ErrorKind::kConfig, "scenario must be comma-free");
  if (c.data.max_samples < 10) throw Error(ErrorKind::kConfig, "config key 'data.max_samples' must be >= 10");
  if (!(c.data.split_ratio > 0.0 && c.data.split_ratio < 1.0)) {
    throw Error(ErrorKind::kConfig, "config key 'data.split_ratio' must lie in (0,1)");
  }
  if (c.pretrain.epochs < 1 || c.pretrain.batch_size < 1) {
    throw Error(ErrorKind::kConfig, "pretrain epochs and batch_size must be positive");
  }
  check_positive(c.pretrain.lr, "pretrain.lr");
  check_probability(c.slf.epsilon_cross, "slf.epsilon_cross");
  check_probability(c.slf.lambda13, "slf.lambda13");
  if (c.slf.session.ell < 0 || c.slf.session.ell > protocol::kMaxEll) {
    throw Error(ErrorKind::kConfig, "config key 'slf.ell' must lie in [0,4]");
  }
  if (c.slf.session.epochs < 1 || c.slf.session.batch_size < 1) {
    throw Error(ErrorKind::kConfig, "slf epochs and batch_size must be positive");
  }
  if (c.slf.session.lr) check_positive(*c.slf.session.lr, "slf.lr");
  if (c.sweep.epsilon_cross.empty() || c.sweep.lambda13.empty() || c.sweep.ell.empty()) {
    throw Error(ErrorKind::kConfig, "sweep grids must be nonempty");
  }
  for (double e : c.sweep.epsilon_cross) check_probability(e, "sweep.epsilon_cross");
  for (double l : c.sweep.lambda13) check_probability(l, "sweep.lambda13");
  for (int l : c.sweep.ell) {
    if (l < 0 || l > protocol::kMaxEll) throw Error(ErrorKind::kConfig, "sweep.ell values must lie in [0,4]");
  }
  if (c.eval.n_channel_draws < 1) throw Error(ErrorKind::kConfig, "eval.n_channel_draws must be >= 1");
  check_positive(c.links.ul_rate_bps, "links.ul_rate_bps");
  check_positive(c.links.dl_rate_bps, "links.dl_rate_bps");
  check_positive(c.compute.flops_per_second, "compute.flops_per_second");
  if (c.cost.mode != "reference" && c.cost.mode != "measured") {
    throw Error(ErrorKind::kConfig, "config key 'cost.mode' must be 'reference' or 'measured'");
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::filesystem::path ckpt_path(const ExperimentConfig& cfg, const std::string& id) {
  return cfg.checkpoints() / (id + ".ckpt");
}

trx::Transceiver load_trx(const ExperimentConfig& cfg, const std::string& id) {
  const auto p = ckpt_path(cfg, id);
  if (!std::filesystem::exists(p)) {
    throw Error(ErrorKind::kIo, "missing checkpoint " + p.string() + " (run 'pretrain' first)");
  }
  return for_task(ckpt::load(p), cfg.task);
}

struct SessionData {
  data::Dataset train;
  data::Dataset test;
};

SessionData session_data(const ExperimentConfig& cfg, double lambda13, std::uint64_t seed,
                         std::map<std::string, Splits>& cache) {
  auto splits = [&](const std::string& id) -> const Splits& {
    const std::string ds = cfg.transceiver(id).dataset;
    auto it = cache.find(ds);
    if (it == cache.end()) it = cache.emplace(ds, load_splits(cfg.data, ds)).first;
    return it->second;
  };
  const Splits& own = splits(cfg.slf.tx);
  if (lambda13 == 0.0) return {own.train, own.test};
  const Splits& other = splits(cfg.slf.mix_with);
  return {protocol::mix_datasets(own.train, other.train, lambda13, own.train.size(), seed),
          protocol::mix_datasets(own.test, other.test, lambda13, own.test.size(),
                                 mix_seed(seed, kStreamMixTest))};
}

MetricsRow session_row(const ExperimentConfig& cfg, const SessionResult& r, double eps,
                       double lambda13, int ell, std::uint64_t seed) {
  MetricsRow row;
  row.scenario = cfg.scenario;
  row.tx_id = cfg.slf.tx;
  row.rx_id = cfg.slf.rx;
  row.epsilon_cross = eps;
  row.lambda13 = lambda13;
  row.ell = ell;
  row.seed = seed;
  row.mse = r.post.mse;
  row.top1 = r.post.top1_accuracy;
  row.dl_bytes = r.upload.report.dl_bytes;
  row.ul_bytes = r.upload.report.ul_bytes;
  row.flops = r.flops;
  row.cost = r.cost;
  return row;
}

SessionResult run_configured_session(const ExperimentConfig& cfg, const trx::Transceiver& tx,
                                     const trx::Transceiver& rx, const SessionData& d, double eps,
                                     int ell, std::uint64_t seed) {
  SessionInputs in;
  in.tx = &tx;
  in.rx = &rx;
  in.train = &d.train;
  in.test = &d.test;
  in.slf = cfg.slf.session;
  in.slf.ell = ell;
  in.slf.measured_epsilon = eps;
  in.slf.seed = seed;
  in.n_channel_draws = cfg.eval.n_channel_draws;
  in.eval_seed = cfg.eval.seed;
  in.links = cfg.links;
  in.compute = cfg.compute;
  in.include_task_head = cfg.cost.include_task_head;
  return run_session(in);
}

}  // namespace

std::filesystem::path ExperimentConfig::checkpoints() const {
  return checkpoint_dir ? *checkpoint_dir : out_dir / "checkpoints";
}

const TransceiverSpec& ExperimentConfig::transceiver(const std::string& id) const {
  for (const auto& t : transceivers) {
    if (t.id == id) return t;
  }
  throw Error(ErrorKind::kConfig, "no transceiver with id '" + id + "'");
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.transceivers = {{"TRX_1", "mnist", 1e-5, 1}, {"TRX_2", "mnist", 1e-1, 2}, {"TRX_3", "cifar10", 1e-5, 3}};
  return c;
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c = default_config();
  Section root(j, "");
  root.get("scenario", c.scenario);
  std::string task(trx::task_name(c.task));
  root.get("task", task);
  c.task = trx::parse_task(task);
  root.get("seed", c.seed);
  std::string out_dir = c.out_dir.string();
  root.get("out_dir", out_dir);
  c.out_dir = out_dir;
  std::optional<std::string> ckdir;
  root.get_optional("checkpoint_dir", ckdir);
  if (ckdir) c.checkpoint_dir = *ckdir;

  if (const json* d = root.child("data")) {
    Section s(*d, "data");
    std::string mnist = c.data.mnist_dir.string(), cifar = c.data.cifar_dir.string();
    s.get("mnist_dir", mnist);
    s.get("cifar_dir", cifar);
    c.data.mnist_dir = mnist;
    c.data.cifar_dir = cifar;
    s.get("max_samples", c.data.max_samples);
    s.get("split_ratio", c.data.split_ratio);
    s.get("split_seed", c.data.split_seed);
    s.finish();
  }
  if (const json* t = root.child("transceivers")) {
    if (!t->is_array()) throw Error(ErrorKind::kConfig, "config key 'transceivers' must be an array");
    c.transceivers.clear();
    for (std::size_t i = 0; i < t->size(); ++i) {
      Section s((*t)[i], "transceivers[" + std::to_string(i) + "]");
      TransceiverSpec spec;
      spec.seed = i + 1;
      s.get("id", spec.id);
      s.get("dataset", spec.dataset);
      s.get("epsilon", spec.epsilon);
      s.get("seed", spec.seed);
      s.finish();
      c.transceivers.push_back(spec);
    }
  }
  if (const json* p = root.child("pretrain")) {
    Section s(*p, "pretrain");
    s.get("epochs", c.pretrain.epochs);
    s.get("batch_size", c.pretrain.batch_size);
    s.get("lr", c.pretrain.lr);
    s.get("lambda_c", c.pretrain.lambda_c);
    s.finish();
  }
  if (const json* p = root.child("classifier")) {
    Section s(*p, "classifier");
    s.get("epochs", c.classifier.epochs);
    s.get("batch_size", c.classifier.batch_size);
    s.get("lr", c.classifier.lr);
    s.finish();
  }
  if (const json* p = root.child("slf")) {
    Section s(*p, "slf");
    s.get("tx", c.slf.tx);
    s.get("rx", c.slf.rx);
    s.get("mix_with", c.slf.mix_with);
    s.get("epsilon_cross", c.slf.epsilon_cross);
    s.get("lambda13", c.slf.lambda13);
    s.get("ell", c.slf.session.ell);
    s.get_optional("lr", c.slf.session.lr);
    s.get("reinit_on_full_retrain", c.slf.session.reinit_on_full_retrain);
    s.get("epochs", c.slf.session.epochs);
    s.get("batch_size", c.slf.session.batch_size);
    s.get("lambda_c", c.slf.session.lambda_c);
    std::string target = "received";
    s.get("codebook_loss_target", target);
    if (target == "received") {
      c.slf.session.loss_target = vq::CodebookLossTarget::kReceived;
    } else if (target == "pre_channel") {
      c.slf.session.loss_target = vq::CodebookLossTarget::kPreChannel;
    } else {
      throw Error(ErrorKind::kConfig, "config key 'slf.codebook_loss_target' must be 'received' or 'pre_channel'");
    }
    c.pretrain.loss_target = c.slf.session.loss_target;
    s.finish();
  }
  if (const json* p = root.child("sweep")) {
    Section s(*p, "sweep");
    s.get("epsilon_cross", c.sweep.epsilon_cross);
    s.get("lambda13", c.sweep.lambda13);
    s.get("ell", c.sweep.ell);
    s.get("seeds", c.sweep.seeds);
    s.finish();
  }
  if (const json* p = root.child("eval")) {
    Section s(*p, "eval");
    s.get("n_channel_draws", c.eval.n_channel_draws);
    s.get("seed", c.eval.seed);
    s.get_optional("epsilon", c.eval.epsilon);
    s.get("image_grid", c.eval.image_grid);
    s.finish();
  }
  if (const json* p = root.child("links")) {
    Section s(*p, "links");
    s.get("ul_rate_bps", c.links.ul_rate_bps);
    s.get("dl_rate_bps", c.links.dl_rate_bps);
    s.finish();
  }
  if (const json* p = root.child("compute")) {
    Section s(*p, "compute");
    s.get("flops_per_second", c.compute.flops_per_second);
    s.finish();
  }
  if (const json* p = root.child("cost")) {
    Section s(*p, "cost");
    s.get("mode", c.cost.mode);
    s.get("include_task_head", c.cost.include_task_head);
    s.get_optional("n_samples", c.cost.n_samples);
    s.finish();
  }
  root.finish();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

Splits load_splits(const DataConfig& cfg, const std::string& dataset_id) {
  data::Dataset ds;
  if (dataset_id == "mnist") {
    const auto img = cfg.mnist_dir / "train-images-idx3-ubyte";
    const auto lab = cfg.mnist_dir / "train-labels-idx1-ubyte";
    if (!std::filesystem::exists(img) || !std::filesystem::exists(lab)) {
      throw Error(ErrorKind::kIo, "MNIST files not found: expected " + img.string() + " and " +
                                      lab.string() + " (see tools/fetch_datasets.py)");
    }
    ds = data::load_idx(img, lab, "mnist", 0);
  } else if (dataset_id == "cifar10") {
    std::vector<std::filesystem::path> files;
    std::size_t have = 0;
    for (int b = 1; b <= 5 && have < cfg.max_samples; ++b) {
      const auto p = cfg.cifar_dir / ("data_batch_" + std::to_string(b) + ".bin");
      if (!std::filesystem::exists(p)) break;
      files.push_back(p);
      have += std::filesystem::file_size(p) / 3073;
    }
    if (files.empty()) {
      throw Error(ErrorKind::kIo, "CIFAR-10 files not found: expected " +
                                      (cfg.cifar_dir / "data_batch_1.bin").string() +
                                      " (see tools/fetch_datasets.py)");
    }
    ds = data::load_cifar_bin(files, kCifarLabelOffset, "cifar10");
  } else {
    throw Error(ErrorKind::kConfig, "unknown dataset '" + dataset_id + "'");
  }
  ds = data::canonicalize(ds.head(cfg.max_samples));
  ds.validate();
  auto [train, test] = data::split_train_test(ds, cfg.split_ratio, cfg.split_seed);
  return {std::move(train), std::move(test)};
}

std::string format_row(const MetricsRow& r) {
  std::string s = r.scenario + "," + r.tx_id + "," + r.rx_id + "," + fmt_double(r.epsilon_cross) + "," +
                  fmt_double(r.lambda13) + "," + (r.ell ? std::to_string(*r.ell) : "") + "," +
                  std::to_string(r.seed) + "," + fmt_double(r.mse) + "," +
                  (r.top1 ? fmt_double(*r.top1) : "") + "," +
                  (r.dl_bytes ? std::to_string(*r.dl_bytes) : "") + "," +
                  (r.ul_bytes ? std::to_string(*r.ul_bytes) : "") + "," +
                  (r.flops ? fmt_double(*r.flops) : "") + ",";
  if (r.cost) {
    s += fmt_double(r.cost->dl_latency_s) + "," + fmt_double(r.cost->ft_latency_s) + "," +
         fmt_double(r.cost->ul_latency_s) + "," + fmt_double(r.cost->recovery_time_s);
  } else {
    s += ",,,";
  }
  return s;
}

MetricsRow parse_row(const std::string& line) {
  const auto f = split_csv(line);
  if (f.size() != 16) {
    throw Error(ErrorKind::kFormat, "csv row has " + std::to_string(f.size()) + " fields, expected 16");
  }
  MetricsRow r;
  r.scenario = f[0];
  r.tx_id = f[1];
  r.rx_id = f[2];
  r.epsilon_cross = parse_double(f[3], "epsilon_cross");
  r.lambda13 = parse_double(f[4], "lambda13");
  if (!f[5].empty()) r.ell = static_cast<int>(parse_u64(f[5], "ell"));
  r.seed = parse_u64(f[6], "seed");
  r.mse = parse_double(f[7], "mse");
  if (!f[8].empty()) r.top1 = parse_double(f[8], "top1");
  if (!f[9].empty()) r.dl_bytes = parse_u64(f[9], "dl_bytes");
  if (!f[10].empty()) r.ul_bytes = parse_u64(f[10], "ul_bytes");
  if (!f[11].empty()) r.flops = parse_double(f[11], "flops");
  if (!f[12].empty()) {
    cost::CostBreakdown c;
    c.dl_latency_s = parse_double(f[12], "dl_s");
    c.ft_latency_s = parse_double(f[13], "ft_s");
    c.ul_latency_s = parse_double(f[14], "ul_s");
    c.recovery_time_s = parse_double(f[15], "recovery_s");
    r.cost = c;
  }
  return r;
}

std::vector<MetricsRow> read_rows(const std::filesystem::path& path) {
  std::vector<MetricsRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw Error(ErrorKind::kFormat, path.string() + ": unexpected csv header");
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(parse_row(line));
  }
  return rows;
}

void append_rows(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  if (fresh) out << kCsvHeader << '\n';
  for (const auto& r : rows) out << format_row(r) << '\n';
  out.flush();
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

trx::Transceiver for_task(trx::Transceiver t, trx::Task task) {
  if (task == trx::Task::kReconstruction) {
    t.gamma.reset();
    t.task = task;
  } else if (!t.gamma) {
    throw Error(ErrorKind::kConfig, "classification requested but the checkpoint has no classifier");
  } else {
    t.task = task;
  }
  return t;
}

SessionResult run_session(const SessionInputs& in) {
  if (!in.tx || !in.rx || !in.train || !in.test) {
    throw Error(ErrorKind::kArgument, "run_session: missing input");
  }
  const double eps = in.slf.measured_epsilon;
  SessionResult r;
  r.pre = trx::evaluate(*in.tx, *in.rx, *in.test, eps, in.n_channel_draws, in.eval_seed);

  const protocol::DownloadedDecoder dl = protocol::download_decoder(*in.rx);
  r.fine_tune = protocol::fine_tune(in.tx->theta, dl, *in.train, in.slf);
  r.tx_after = protocol::updated_transmitter(*in.tx, r.fine_tune);
  r.local = trx::evaluate(r.tx_after, protocol::virtual_receiver(*in.rx, r.fine_tune), *in.test,
                          eps, in.n_channel_draws, in.eval_seed);

  r.upload = protocol::upload_payload(r.fine_tune.phi, r.fine_tune.codebook, r.fine_tune.mask);
  r.rx_after = protocol::apply_upload(*in.rx, r.upload.payload);
  r.post = trx::evaluate(r.tx_after, r.rx_after, *in.test, eps, in.n_channel_draws, in.eval_seed);

  std::optional<int> head;
  if (in.include_task_head && in.rx->gamma) head = in.rx->gamma->num_classes;
  cost::FlopsRule rule;
  rule.include_task_head = head.has_value();
  r.flops = cost::fine_tune_flops(cost::transceiver_arch(head), r.fine_tune.mask, in.train->size(),
                                  in.slf.epochs, rule);
  r.cost = cost::recovery_time(dl.dl_bytes, r.flops, r.upload.report.ul_bytes, in.links, in.compute);
  return r;
}

void write_pgm_grid(const std::filesystem::path& path, const ad::Tensor& x, const ad::Tensor& x_hat,
                    int count) {
  if (x.shape() != x_hat.shape() || x.ndim() != 4 || x.dim(1) != 1) {
    throw Error(ErrorKind::kShape, "write_pgm_grid: expected matching [N,1,H,W] tensors");
  }
  const int n = std::min(count, x.dim(0)), h = x.dim(2), w = x.dim(3);
  if (n < 1) throw Error(ErrorKind::kArgument, "write_pgm_grid: nothing to draw");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "P2\n" << n * w << ' ' << 2 * h << "\n255\n";
  for (int row = 0; row < 2; ++row) {
    const ad::Tensor& src = row == 0 ? x : x_hat;
    for (int y = 0; y < h; ++y) {
      for (int i = 0; i < n; ++i) {
        for (int xx = 0; xx < w; ++xx) {
          const float v = src[(static_cast<std::size_t>(i) * h + y) * w + xx];
          out << std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)
              << (i == n - 1 && xx == w - 1 ? '\n' : ' ');
        }
      }
    }
  }
}

void cmd_pretrain(const ExperimentConfig& cfg, std::ostream& log) {
  std::map<std::string, Splits> splits;
  for (const auto& t : cfg.transceivers) {
    if (!splits.count(t.dataset)) splits.emplace(t.dataset, load_splits(cfg.data, t.dataset));
  }
  std::filesystem::create_directories(cfg.checkpoints());

  trx::ClassifierConfig ccfg = cfg.classifier;
  ccfg.seed = mix_seed(cfg.seed, kStreamClassifier);
  std::map<std::string, trx::Classifier> classifiers;
  auto classifier_for = [&](const std::string& dataset) -> const trx::Classifier& {
    const std::string key = dataset == "mnist" ? "mnist" : "joint";
    if (auto it = classifiers.find(key); it != classifiers.end()) return it->second;
    std::vector<const data::Dataset*> sources;
    if (!splits.count("mnist")) splits.emplace("mnist", load_splits(cfg.data, "mnist"));
    sources.push_back(&splits.at("mnist").train);
    if (key == "joint") {
      if (!splits.count("cifar10")) splits.emplace("cifar10", load_splits(cfg.data, "cifar10"));
      sources.push_back(&splits.at("cifar10").train);
    }
    trx::Classifier c = trx::pretrain_classifier(sources, ccfg);
    log << "classifier " << key << ": " << c.num_classes << " classes, clean top-1 "
        << trx::classifier_accuracy(c, splits.at(dataset).test) << " on " << dataset << " test\n";
    return classifiers.emplace(key, std::move(c)).first->second;
  };

  for (const auto& spec : cfg.transceivers) {
    const Splits& s = splits.at(spec.dataset);
    const std::uint64_t seed = mix_seed(cfg.seed, spec.seed);
    trx::Transceiver t = trx::build_transceiver(trx::Task::kReconstruction,
                                                {1, data::kCanonicalSide, data::kCanonicalSide}, seed);
    trx::PretrainConfig pcfg = cfg.pretrain;
    pcfg.epsilon = spec.epsilon;
    pcfg.seed = seed;
    const auto curve_path = cfg.out_dir / ("pretrain_" + spec.id + ".csv");
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream curve(curve_path);
    if (!curve) throw Error(ErrorKind::kIo, "cannot write " + curve_path.string());
    curve << "epoch,train_loss,test_mse\n";
    const auto result = trx::pretrain(t, s.train, s.test, pcfg, [&](const trx::EpochStats& e) {
      curve << e.epoch << ',' << fmt_double(e.train_loss) << ',' << fmt_double(e.test_mse) << '\n';
      log << spec.id << " epoch " << e.epoch << " loss " << e.train_loss << " test_mse " << e.test_mse << '\n';
    });
    log << spec.id << ": untrained test_mse " << result.untrained_test_mse << ", final "
        << result.curve.back().test_mse << '\n';
    t.trained_dataset_id = spec.dataset;
    t = trx::with_classifier(std::move(t), classifier_for(spec.dataset));
    ckpt::save(t, ckpt_path(cfg, spec.id));
  }
}

void cmd_eval_cross(const ExperimentConfig& cfg, std::ostream& log) {
  std::map<std::string, trx::Transceiver> trxs;
  for (const auto& spec : cfg.transceivers) trxs.emplace(spec.id, load_trx(cfg, spec.id));
  std::map<std::string, Splits> splits;
  std::vector<MetricsRow> rows;
  for (const auto& txs : cfg.transceivers) {
    if (!splits.count(txs.dataset)) splits.emplace(txs.dataset, load_splits(cfg.data, txs.dataset));
    const data::Dataset& test = splits.at(txs.dataset).test;
    const trx::Transceiver& tx = trxs.at(txs.id);
    const double eps = cfg.eval.epsilon.value_or(txs.epsilon);
    for (const auto& rxs : cfg.transceivers) {
      const trx::Transceiver& rx = trxs.at(rxs.id);
      const trx::Metrics m = trx::evaluate(tx, rx, test, eps, cfg.eval.n_channel_draws, cfg.eval.seed);
      MetricsRow row;
      row.scenario = cfg.scenario;
      row.tx_id = txs.id;
      row.rx_id = rxs.id;
      row.epsilon_cross = eps;
      row.seed = cfg.seed;
      row.mse = m.mse;
      row.top1 = m.top1_accuracy;
      rows.push_back(row);
      log << txs.id << " -> " << rxs.id << ": mse " << m.mse;
      if (m.top1_accuracy) log << " top1 " << *m.top1_accuracy;
      log << '\n';

      if (cfg.eval.image_grid > 0) {
        std::vector<std::size_t> idx(std::min<std::size_t>(static_cast<std::size_t>(cfg.eval.image_grid), test.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        const ad::Tensor x = test.gather(idx);
        Rng rng(cfg.eval.seed);
        const auto out = trx::end_to_end(tx, rx, x, eps, rng);
        write_pgm_grid(cfg.out_dir / ("recon_" + txs.id + "_" + rxs.id + ".pgm"), x, out.x_hat,
                       cfg.eval.image_grid);
      }
    }
  }
  const auto path = cfg.out_dir / "eval_cross.csv";
  std::filesystem::remove(path);
  append_rows(path, rows);
}

void cmd_slf(const ExperimentConfig& cfg, std::ostream& log) {
  const trx::Transceiver tx = load_trx(cfg, cfg.slf.tx);
  const trx::Transceiver rx = load_trx(cfg, cfg.slf.rx);
  std::map<std::string, Splits> cache;
  const SessionData d = session_data(cfg, cfg.slf.lambda13, cfg.seed, cache);
  const int ell = cfg.slf.session.ell;
  const SessionResult r = run_configured_session(cfg, tx, rx, d, cfg.slf.epsilon_cross, ell, cfg.seed);
  log << "pre-SLF mse " << r.pre.mse << ", post-SLF mse " << r.post.mse;
  if (r.post.top1_accuracy) log << ", pre top1 " << *r.pre.top1_accuracy << ", post top1 " << *r.post.top1_accuracy;
  log << ", ul_bytes " << r.upload.report.ul_bytes << ", T_R " << r.cost.recovery_time_s << " s\n";

  append_rows(cfg.out_dir / "slf.csv",
              {session_row(cfg, r, cfg.slf.epsilon_cross, cfg.slf.lambda13, ell, cfg.seed)});
  ckpt::save(r.rx_after, cfg.out_dir / (cfg.slf.rx + "_after_slf_ell" + std::to_string(ell) + ".ckpt"));
  ckpt::save(r.tx_after, cfg.out_dir / (cfg.slf.tx + "_after_slf_ell" + std::to_string(ell) + ".ckpt"));

  nlohmann::ordered_json summary;
  auto metrics = [](const trx::Metrics& m) {
    nlohmann::ordered_json j;
    j["mse"] = m.mse;
    j["mse_stderr"] = m.mse_stderr;
    j["top1"] = m.top1_accuracy ? json(*m.top1_accuracy) : json(nullptr);
    j["n_samples"] = m.n_samples;
    return j;
  };
  summary["pre"] = metrics(r.pre);
  summary["local"] = metrics(r.local);
  summary["post"] = metrics(r.post);
  summary["loss_curve"] = r.fine_tune.loss_curve;
  std::ofstream(cfg.out_dir / ("slf_summary_ell" + std::to_string(ell) + ".json")) << summary.dump(2) << '\n';
}

void cmd_cost(const ExperimentConfig& cfg, std::ostream& log) {
  std::vector<MetricsRow> rows;
  const bool classification = cfg.task == trx::Task::kClassification;
  if (cfg.cost.mode == "reference") {
    for (const auto& ref : cost::kReferenceRows) {
      MetricsRow row;
      row.scenario = "reference";
      row.ell = ref.ell;
      row.seed = cfg.seed;
      row.mse = ref.recon_mse;
      if (classification) row.top1 = ref.cls_top1_percent / 100.0;
      row.dl_bytes = static_cast<std::uint64_t>(std::llround(ref.dl_kb * 1000.0));
      row.ul_bytes = static_cast<std::uint64_t>(std::llround(ref.ul_kb * 1000.0));
      row.flops = (classification ? ref.cls_tflops : ref.recon_tflops) * 1e12;
      row.cost = cost::recovery_time(*row.dl_bytes, *row.flops, *row.ul_bytes, cfg.links, cfg.compute);
      rows.push_back(row);
    }
  } else {
    const trx::Transceiver t = trx::build_transceiver(
        trx::Task::kReconstruction, {1, data::kCanonicalSide, data::kCanonicalSide}, cfg.seed);
    const std::uint64_t n_samples = cfg.cost.n_samples.value_or(static_cast<std::uint64_t>(
        std::llround(cfg.data.split_ratio * static_cast<double>(cfg.data.max_samples))));
    std::optional<int> head;
    if (cfg.cost.include_task_head) head = 10;
    cost::FlopsRule rule;
    rule.include_task_head = head.has_value();
    const cost::ArchCost arch = cost::transceiver_arch(head);
    for (int ell = 0; ell <= protocol::kMaxEll; ++ell) {
      const auto mask = protocol::freeze_mask(ell);
      const auto up = protocol::upload_payload(t.phi, t.codebook, mask);
      MetricsRow row;
      row.scenario = "measured";
      row.ell = ell;
      row.seed = cfg.seed;
      row.mse = std::nan("");
      row.dl_bytes = up.report.dl_bytes;
      row.ul_bytes = up.report.ul_bytes;
      row.flops = cost::fine_tune_flops(arch, mask, n_samples, cfg.slf.session.epochs, rule);
      row.cost = cost::recovery_time(*row.dl_bytes, *row.flops, *row.ul_bytes, cfg.links, cfg.compute);
      rows.push_back(row);
    }
  }
  for (const auto& r : rows) {
    log << "ell=" << *r.ell << " dl " << *r.dl_bytes << " B, ul " << *r.ul_bytes << " B, flops "
        << *r.flops << ", T_R " << r.cost->recovery_time_s << " s\n";
  }
  const auto path = cfg.out_dir / "cost.csv";
  std::filesystem::remove(path);
  append_rows(path, rows);
}

int cmd_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  const auto path = cfg.out_dir / "sweep.csv";
  std::set<std::tuple<std::string, std::string, double, double, int, std::uint64_t>> done;
  for (const auto& r : read_rows(path)) {
    if (r.ell) done.insert({r.tx_id, r.rx_id, r.epsilon_cross, r.lambda13, *r.ell, r.seed});
  }
  const std::vector<std::uint64_t> seeds = cfg.sweep.seeds.empty() ? std::vector<std::uint64_t>{cfg.seed}
                                                                    : cfg.sweep.seeds;
  const trx::Transceiver tx = load_trx(cfg, cfg.slf.tx);
  const trx::Transceiver rx = load_trx(cfg, cfg.slf.rx);
  std::map<std::string, Splits> cache;
  int failures = 0;
  std::size_t ran = 0, skipped = 0;
  for (double lambda : cfg.sweep.lambda13) {
    for (std::uint64_t seed : seeds) {
      std::optional<SessionData> d;
      for (double eps : cfg.sweep.epsilon_cross) {
        for (int ell : cfg.sweep.ell) {
          if (done.count({cfg.slf.tx, cfg.slf.rx, eps, lambda, ell, seed})) {
            ++skipped;
            continue;
          }
          try {
            if (!d) d = session_data(cfg, lambda, seed, cache);
            const SessionResult r = run_configured_session(cfg, tx, rx, *d, eps, ell, seed);
            append_rows(path, {session_row(cfg, r, eps, lambda, ell, seed)});
            ++ran;
            log << "cell eps=" << eps << " lambda=" << lambda << " ell=" << ell << " seed=" << seed
                << ": mse " << r.post.mse << '\n';
          } catch (const std::exception& e) {
            ++failures;
            log << "cell eps=" << eps << " lambda=" << lambda << " ell=" << ell << " seed=" << seed
                << " failed: " << e.what() << '\n';
            std::ofstream(cfg.out_dir / "sweep_failures.log", std::ios::app)
                << fmt_double(eps) << ',' << fmt_double(lambda) << ',' << ell << ',' << seed << ','
                << e.what() << '\n';
          }
        }
      }
    }
  }
  log << "sweep: " << ran << " cells run, " << skipped << " skipped, " << failures << " failed\n";
  return failures;
}

}  // namespace slf::exp
