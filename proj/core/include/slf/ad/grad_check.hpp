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
#include <span>
#include <string>

#include "slf/ad/params.hpp"
#include "slf/ad/tape.hpp"

namespace slf::ad {

struct GradCheckOptions {
  double step = 1e-3;
  /// Gradients smaller than this are compared in absolute rather than relative terms.
  double abs_floor = 1e-3;
  /// 0 checks every entry; otherwise a seeded random subset per tensor.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Skips entries whose +-step evaluations take different relu or max-pool
  /// branches than the base point: the step crosses a kink there.
  bool exclude_kinks = true;
};

struct GradCheckReport {
  /// Largest per-tensor error ||a - n|| / max(||a||, ||n||, abs_floor) over the
  /// checked entries. This is the pass criterion; entrywise errors on small
  /// gradients are dominated by float rounding of the loss.
  double max_tensor_rel_err = 0.0;
  std::string worst_tensor;
  /// Largest entrywise |a - n| / max(|a|, |n|, abs_floor), for diagnostics.
  double max_rel_err = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;

  bool passed(double tolerance) const { return max_tensor_rel_err <= tolerance; }
};

/// Builds the scalar loss on a fresh tape. Must be a pure function of the
/// parameter values it reads through Tape::param.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares backward() against central differences for every unfrozen entry of
/// `stores`.
GradCheckReport grad_check(std::span<ParamStore* const> stores, const LossBuilder& loss,
                           const GradCheckOptions& options = {});

}  // namespace slf::ad
