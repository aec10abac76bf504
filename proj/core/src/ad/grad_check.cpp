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

#include "slf/ad/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "slf/rng.hpp"

namespace slf::ad {
namespace {

struct Eval {
  double value;
  std::uint64_t branches;
};

Eval eval_loss(const LossBuilder& loss) {
  Tape tape;
  const double v = tape.scalar(loss(tape));
  return {v, tape.branch_signature()};
}

// NaN when either side takes different branches than `base_branches`.
double central_difference(Tensor& t, std::size_t i, double step, const LossBuilder& loss,
                          std::optional<std::uint64_t> base_branches) {
  const float original = t[i];
  const float hi = static_cast<float>(original + step);
  const float lo = static_cast<float>(original - step);
  t[i] = hi;
  const Eval f_hi = eval_loss(loss);
  t[i] = lo;
  const Eval f_lo = eval_loss(loss);
  t[i] = original;
  if (base_branches && (f_hi.branches != *base_branches || f_lo.branches != *base_branches)) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  // Divide by the representable step actually taken.
  return (f_hi.value - f_lo.value) / (static_cast<double>(hi) - lo);
}

std::vector<std::size_t> pick(std::size_t n, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit == 0 || limit >= n) return idx;
  rng.shuffle(idx);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport grad_check(std::span<ParamStore* const> stores, const LossBuilder& loss,
                           const GradCheckOptions& options) {
  for (ParamStore* s : stores) s->zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }

  std::optional<std::uint64_t> base_branches;
  if (options.exclude_kinks) base_branches = eval_loss(loss).branches;

  GradCheckReport report;
  Rng rng(options.seed);
  auto check_tensor = [&](const std::string& name, Tensor& t) {
    if (!t.has_grad()) return;  // parameter unused by the loss
    const std::vector<float> analytic(std::as_const(t).grad().begin(),
                                      std::as_const(t).grad().end());
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i : pick(t.size(), options.max_entries_per_tensor, rng)) {
      const double numeric = central_difference(t, i, options.step, loss, base_branches);
      if (std::isnan(numeric)) {
        ++report.skipped_kinks;
        continue;
      }
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      ++report.checked;
      if (report.worst_parameter.empty() || rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_parameter = name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
    const double tensor_rel =
        std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), options.abs_floor});
    if (report.worst_tensor.empty() || tensor_rel > report.max_tensor_rel_err) {
      report.max_tensor_rel_err = tensor_rel;
      report.worst_tensor = name;
    }
  };
  for (ParamStore* s : stores) {
    for (auto& [id, entry] : *s) {
      if (entry.frozen) continue;
      check_tensor(id + ".weight", entry.weights);
      if (entry.bias) check_tensor(id + ".bias", *entry.bias);
    }
  }
  for (ParamStore* s : stores) s->zero_grad();
  return report;
}

}  // namespace slf::ad
