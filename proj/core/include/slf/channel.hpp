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
#include <span>
#include <vector>

#include "slf/rng.hpp"

namespace slf::channel {

/// K-ary symmetric discrete memoryless channel over codeword indices: a symbol
/// survives with probability 1 - epsilon, otherwise it becomes one of the other
/// K - 1 symbols uniformly.
class DmcChannel {
 public:
  DmcChannel(int num_symbols, double epsilon);

  int num_symbols() const { return k_; }
  double epsilon() const { return epsilon_; }

  /// P(received = k | sent = k_star).
  double transition_prob(int k, int k_star) const;

  /// Passes every index through the channel independently.
  std::vector<int> transmit(std::span<const int> indices, Rng& rng) const;

 private:
  int k_;
  double epsilon_;
};

}  // namespace slf::channel
