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
#include <string>
#include <vector>

#include "slf/ad/params.hpp"
#include "slf/ad/tape.hpp"
#include "slf/rng.hpp"

namespace slf::ad {

enum class LayerKind { kDense, kConv2d, kRelu, kMaxPool2d };

/// Static description of one layer. Only dense and conv2d carry parameters;
/// their weights live in a ParamStore under `id`.
///
/// conv2d with `transposed` set is the adjoint (fractionally strided)
/// convolution used by the decoder to upsample; its weights are laid out
/// [in_channels, out_channels, k, k].
struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::kRelu;
  int in_dim = 0;
  int out_dim = 0;
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 0;
  int stride = 1;
  int padding = 0;
  bool transposed = false;
  int window = 0;
  bool has_bias = true;

  static LayerSpec dense(std::string id, int in_dim, int out_dim, bool has_bias = true);
  static LayerSpec conv2d(std::string id, int in_channels, int out_channels, int kernel_size,
                          int stride = 1, int padding = 0, bool has_bias = true);
  static LayerSpec conv_transpose2d(std::string id, int in_channels, int out_channels,
                                    int kernel_size, int stride, int padding,
                                    bool has_bias = true);
  static LayerSpec relu(std::string id);
  static LayerSpec maxpool2d(std::string id, int window, int stride);

  bool has_params() const { return kind == LayerKind::kDense || kind == LayerKind::kConv2d; }
  Shape weight_shape() const;
};

/// Validates `layer` against an input shape and returns the output shape.
/// Throws Error(kShape) naming the layer id and both shapes.
Shape output_shape(const LayerSpec& layer, const Shape& input);

/// Multiply-accumulate count of one forward pass for a whole input batch.
std::uint64_t forward_macs(const LayerSpec& layer, const Shape& input);

/// Fan-in scaled uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases.
void init_params(std::span<const LayerSpec> layers, ParamStore& store, Rng& rng);

/// Applies one layer, recording it on the input's tape.
Var forward(const LayerSpec& layer, ParamStore& params, Var input);
/// Inference-only forward: parameters enter the tape as constants.
Var forward(const LayerSpec& layer, const ParamStore& params, Var input);

/// Applies a chain of layers in order.
Var forward_all(std::span<const LayerSpec> layers, ParamStore& params, Var input);
Var forward_all(std::span<const LayerSpec> layers, const ParamStore& params, Var input);

}  // namespace slf::ad
