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

#include "slf/ad/adam.hpp"

#include <cmath>
#include <utility>

#include "slf/error.hpp"

namespace slf::ad {
namespace {

void update(Tensor& param, AdamMoments& mom, const AdamState& st, double lr) {
  if (mom.m.empty()) {
    mom.m.assign(param.size(), 0.0f);
    mom.v.assign(param.size(), 0.0f);
  }
  const auto g = std::as_const(param).grad();
  const double b1 = st.beta1, b2 = st.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  const double step = lr / c1;
  for (std::size_t i = 0; i < param.size(); ++i) {
    mom.m[i] = static_cast<float>(b1 * mom.m[i] + (1.0 - b1) * g[i]);
    mom.v[i] = static_cast<float>(b2 * mom.v[i] + (1.0 - b2) * static_cast<double>(g[i]) * g[i]);
    const double denom = std::sqrt(mom.v[i] / c2) + st.eps;
    param[i] = static_cast<float>(param[i] - step * mom.m[i] / denom);
  }
}

}  // namespace

void adam_step(ParamStore& params, AdamState& state, double lr) {
  for (const auto& [id, entry] : params) {
    if (entry.frozen) continue;
    if (!entry.weights.has_grad() || (entry.bias && !entry.bias->has_grad())) {
      throw Error(ErrorKind::kArgument, "adam_step: missing gradient for unfrozen parameter '" + id + "'");
    }
  }
  ++state.step;
  for (auto& [id, entry] : params) {
    if (entry.frozen) continue;
    update(entry.weights, state.moments[id + "/w"], state, lr);
    if (entry.bias) update(*entry.bias, state.moments[id + "/b"], state, lr);
  }
}

}  // namespace slf::ad
