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

#include "slf/ad/tape.hpp"

#include "slf/error.hpp"

namespace slf::ad {

const Tensor& Var::value() const {
  if (!tape_) throw Error(ErrorKind::kInternal, "use of an unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(ParamStore& store, const std::string& id, ParamSlot slot) {
  auto key = std::make_tuple(static_cast<const ParamStore*>(&store), id, slot);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return Var(this, it->second);

  ParamEntry& entry = store.at(id);
  Tensor& target = store.tensor(id, slot);
  Node n;
  n.value = Tensor(target.shape(), target.storage());
  n.requires_grad = !entry.frozen;
  n.param_target = entry.frozen ? nullptr : &target;
  Var v = push(std::move(n));
  param_nodes_.emplace(std::move(key), v.id());
  return v;
}

Var Tape::param(const ParamStore& store, const std::string& id, ParamSlot slot) {
  auto key = std::make_tuple(&store, id, slot);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return Var(this, it->second);

  const ParamEntry& entry = store.at(id);
  const Tensor* src = &entry.weights;
  if (slot == ParamSlot::kBias) {
    if (!entry.bias) throw Error(ErrorKind::kArgument, "parameter '" + id + "' has no bias");
    src = &*entry.bias;
  }
  Node n;
  n.value = Tensor(src->shape(), src->storage());
  Var v = push(std::move(n));
  param_nodes_.emplace(std::move(key), v.id());
  return v;
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (!p.valid()) continue;
    if (p.tape_ != this) throw Error(ErrorKind::kInternal, "op mixes Vars from different tapes");
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(p.id_)].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Tape::set_scalar(Var v, double exact) {
  Node& n = nodes_.at(static_cast<std::size_t>(v.id_));
  if (n.value.size() != 1) throw Error(ErrorKind::kInternal, "set_scalar on a non-scalar node");
  n.exact = exact;
}

double Tape::scalar(Var v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.id_));
  if (n.value.size() != 1) {
    throw Error(ErrorKind::kShape, "scalar() of a node with shape " + shape_str(n.value.shape()));
  }
  return n.exact ? *n.exact : n.value[0];
}

std::span<float> Tape::grad_buffer(int id) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0f);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw Error(ErrorKind::kInternal, "loss belongs to a different tape");
  if (loss.value().size() != 1) {
    throw Error(ErrorKind::kShape,
                "backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (backward_done_) throw Error(ErrorKind::kInternal, "backward called twice on one tape");
  backward_done_ = true;
  if (!nodes_[static_cast<std::size_t>(loss.id_)].requires_grad) return;

  grad_buffer(loss.id_)[0] = 1.0f;
  for (int id = loss.id_; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, nodes_[static_cast<std::size_t>(id)].grad);
  }
  for (Node& n : nodes_) {
    if (!n.param_target || n.grad.empty()) continue;
    std::span<float> dst = n.param_target->grad();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
  }
}

bool Tape::has_grad(Var v) const {
  return !nodes_.at(static_cast<std::size_t>(v.id_)).grad.empty();
}

std::span<const float> Tape::grad(Var v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.id_));
  if (n.grad.empty()) throw Error(ErrorKind::kInternal, "no gradient recorded for node");
  return n.grad;
}

}  // namespace slf::ad
