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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "slf/ad/params.hpp"
#include "slf/ad/tensor.hpp"

namespace slf::ad {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Receives the gradient of the recorded output and accumulates into parents
/// through Tape::grad_buffer.
using BackwardFn = std::function<void(Tape&, std::span<const float> out_grad)>;

/// Reverse-mode recording of one forward pass.
///
/// Nodes are appended in execution order, so reverse insertion order is a valid
/// topological order for backward. Parameters enter the tape through param();
/// frozen entries become constants, which keeps their gradients unmaterialized
/// while still propagating gradients through the layers that use them.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient can be read back with grad() after backward().
  Var leaf(Tensor value);
  /// Leaf bound to a ParamStore slot. Repeated calls return the same node.
  Var param(ParamStore& store, const std::string& id, ParamSlot slot = ParamSlot::kWeights);
  /// Read-only binding: the node never requires a gradient.
  Var param(const ParamStore& store, const std::string& id, ParamSlot slot = ParamSlot::kWeights);
  /// Records a custom op. The result requires a gradient iff any parent does.
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  /// Runs backward from a scalar loss, then deposits parameter gradients into
  /// the bound ParamStore tensors (accumulating into existing gradients).
  void backward(Var loss);

  bool has_grad(Var v) const;
  std::span<const float> grad(Var v) const;

  // Accessors used by op implementations.
  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }
  /// Zero-initialized on first access.
  std::span<float> grad_buffer(int id);
  std::size_t node_count() const { return nodes_.size(); }

  /// Single-element results of reductions and of scalar arithmetic on them
  /// also keep a double value; scalar() returns it, or the float value.
  void set_scalar(Var v, double exact);
  double scalar(Var v) const;

  /// Piecewise ops fold their branch decisions (relu masks, max-pool argmax)
  /// in here, so two evaluations with equal signatures took the same branches.
  void fold_branch(std::uint64_t v) { branch_signature_ = (branch_signature_ ^ v) * 0x100000001B3ull; }
  std::uint64_t branch_signature() const { return branch_signature_; }

 private:
  struct Node {
    Tensor value;
    FloatBuffer grad;
    bool requires_grad = false;
    BackwardFn backward;
    Tensor* param_target = nullptr;
    std::optional<double> exact;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::map<std::tuple<const ParamStore*, std::string, ParamSlot>, int> param_nodes_;
  bool backward_done_ = false;
  std::uint64_t branch_signature_ = 0xCBF29CE484222325ull;
};

// ---------------------------------------------------------------------------
// Differentiable ops. All inputs must come from the same tape.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float s);
/// Scalar sum, accumulated in double.
Var sum(Var a);
/// Scalar sum of squares, accumulated in double.
Var sum_squares(Var a);
Var reshape(Var a, Shape shape);
/// Value passes through, gradient is blocked.
Var stop_gradient(Var a);
/// Forward value of `quantized`, backward routes the gradient to `pre` only.
Var straight_through(Var pre, Var quantized);

Var relu(Var x);
Var maxpool2d(Var x, int window, int stride);
/// x: [N, in] (higher ranks are flattened), w: [out, in], b: [out] or invalid.
Var dense(Var x, Var w, Var b);
/// x: [N, C, H, W], w: [O, C, k, k], b: [O] or invalid.
Var conv2d(Var x, Var w, Var b, int stride, int padding);
/// x: [N, C, H, W], w: [C, O, k, k], b: [O] or invalid. Output side (H-1)*s - 2p + k.
Var conv_transpose2d(Var x, Var w, Var b, int stride, int padding);

/// [N, C, H, W] -> [N*H*W, C]: one row per spatial position.
Var channels_to_rows(Var x);
/// Inverse of channels_to_rows.
Var rows_to_channels(Var rows, int n, int h, int w);
/// Selects rows of a [K, D] table; the gradient scatters back into the table.
Var gather_rows(Var table, std::span<const int> indices);
/// Mean softmax cross-entropy over a [N, C] logit batch.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace slf::ad
