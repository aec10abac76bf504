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
#include <map>
#include <string>
#include <vector>

#include "slf/ad/params.hpp"

namespace slf::ad {

struct AdamMoments {
  std::vector<float> m;
  std::vector<float> v;
};

/// Per-parameter Adam moments for one ParamStore.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, AdamMoments> moments;  // "<id>/w" and "<id>/b"
};

/// One bias-corrected Adam update using the gradients stored on `params`.
/// Frozen entries are skipped untouched. Throws Error(kArgument) if an unfrozen
/// entry has no gradient.
void adam_step(ParamStore& params, AdamState& state, double lr);

}  // namespace slf::ad
