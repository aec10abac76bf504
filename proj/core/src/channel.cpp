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

#include "slf/channel.hpp"

#include <string>

#include "slf/error.hpp"

namespace slf::channel {
namespace {

void check_index(int k, int num_symbols) {
  if (k < 0 || k >= num_symbols) {
    throw Error(ErrorKind::kArgument, "channel: symbol " + std::to_string(k) + " outside [0," +
                                          std::to_string(num_symbols) + ")");
  }
}

}  // namespace

DmcChannel::DmcChannel(int num_symbols, double epsilon) : k_(num_symbols), epsilon_(epsilon) {
  if (num_symbols < 2) throw Error(ErrorKind::kArgument, "channel: need at least 2 symbols");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw Error(ErrorKind::kArgument, "channel: crossover probability must lie in [0,1]");
  }
}

double DmcChannel::transition_prob(int k, int k_star) const {
  check_index(k, k_);
  check_index(k_star, k_);
  return k == k_star ? 1.0 - epsilon_ : epsilon_ / (k_ - 1);
}

std::vector<int> DmcChannel::transmit(std::span<const int> indices, Rng& rng) const {
  std::vector<int> out(indices.begin(), indices.end());
  for (int& k : out) {
    check_index(k, k_);
    // One uniform draw decides survival; a second picks among the other K-1.
    if (rng.uniform01() < epsilon_) {
      const int r = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k_ - 1)));
      k = r < k ? r : r + 1;
    }
  }
  return out;
}

}  // namespace slf::channel
