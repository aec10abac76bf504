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

#include "slf/ad/layers.hpp"

#include <algorithm>
#include <cmath>

#include "slf/error.hpp"

namespace slf::ad {
namespace {

[[noreturn]] void shape_error(const LayerSpec& layer, const Shape& input, const std::string& why) {
  throw Error(ErrorKind::kShape, "layer '" + layer.id + "': input " + shape_str(input) + " " + why);
}

void require_positive(const LayerSpec& layer, std::initializer_list<int> values) {
  for (int v : values) {
    if (v <= 0) {
      throw Error(ErrorKind::kArgument, "layer '" + layer.id + "': dimension fields must be positive");
    }
  }
}

}  // namespace

LayerSpec LayerSpec::dense(std::string id, int in_dim, int out_dim, bool has_bias) {
  LayerSpec s;
  s.id = std::move(id);
  s.kind = LayerKind::kDense;
  s.in_dim = in_dim;
  s.out_dim = out_dim;
  s.has_bias = has_bias;
  require_positive(s, {in_dim, out_dim});
  return s;
}

LayerSpec LayerSpec::conv2d(std::string id, int in_channels, int out_channels, int kernel_size,
                            int stride, int padding, bool has_bias) {
  LayerSpec s;
  s.id = std::move(id);
  s.kind = LayerKind::kConv2d;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel_size = kernel_size;
  s.stride = stride;
  s.padding = padding;
  s.has_bias = has_bias;
  require_positive(s, {in_channels, out_channels, kernel_size, stride});
  if (padding < 0) throw Error(ErrorKind::kArgument, "layer '" + s.id + "': negative padding");
  return s;
}

LayerSpec LayerSpec::conv_transpose2d(std::string id, int in_channels, int out_channels,
                                      int kernel_size, int stride, int padding, bool has_bias) {
  LayerSpec s = conv2d(std::move(id), in_channels, out_channels, kernel_size, stride, padding,
                       has_bias);
  s.transposed = true;
  return s;
}

LayerSpec LayerSpec::relu(std::string id) {
  LayerSpec s;
  s.id = std::move(id);
  s.kind = LayerKind::kRelu;
  s.has_bias = false;
  return s;
}

LayerSpec LayerSpec::maxpool2d(std::string id, int window, int stride) {
  LayerSpec s;
  s.id = std::move(id);
  s.kind = LayerKind::kMaxPool2d;
  s.window = window;
  s.stride = stride;
  s.has_bias = false;
  require_positive(s, {window, stride});
  return s;
}

Shape LayerSpec::weight_shape() const {
  switch (kind) {
    case LayerKind::kDense: return {out_dim, in_dim};
    case LayerKind::kConv2d:
      return transposed ? Shape{in_channels, out_channels, kernel_size, kernel_size}
                        : Shape{out_channels, in_channels, kernel_size, kernel_size};
    default: return {};
  }
}

Shape output_shape(const LayerSpec& layer, const Shape& input) {
  switch (layer.kind) {
    case LayerKind::kRelu: return input;
    case LayerKind::kDense: {
      if (input.size() < 2) shape_error(layer, input, "has no batch dimension");
      std::size_t features = 1;
      for (std::size_t i = 1; i < input.size(); ++i) features *= static_cast<std::size_t>(input[i]);
      if (features != static_cast<std::size_t>(layer.in_dim)) {
        shape_error(layer, input, "does not flatten to weights " + shape_str(layer.weight_shape()));
      }
      return {input[0], layer.out_dim};
    }
    case LayerKind::kConv2d: {
      if (input.size() != 4 || input[1] != layer.in_channels) {
        shape_error(layer, input, "does not match weights " + shape_str(layer.weight_shape()));
      }
      const int k = layer.kernel_size, s = layer.stride, p = layer.padding;
      int h, w;
      if (layer.transposed) {
        h = (input[2] - 1) * s - 2 * p + k;
        w = (input[3] - 1) * s - 2 * p + k;
      } else {
        h = (input[2] + 2 * p - k) / s + 1;
        w = (input[3] + 2 * p - k) / s + 1;
        if (input[2] + 2 * p < k || input[3] + 2 * p < k) h = w = 0;
      }
      if (h <= 0 || w <= 0) shape_error(layer, input, "is too small for the kernel");
      return {input[0], layer.out_channels, h, w};
    }
    case LayerKind::kMaxPool2d: {
      if (input.size() != 4 || input[2] < layer.window || input[3] < layer.window) {
        shape_error(layer, input, "cannot be pooled with window " + std::to_string(layer.window));
      }
      return {input[0], input[1], (input[2] - layer.window) / layer.stride + 1,
              (input[3] - layer.window) / layer.stride + 1};
    }
  }
  shape_error(layer, input, "has unknown layer kind");
}

std::uint64_t forward_macs(const LayerSpec& layer, const Shape& input) {
  const Shape out = output_shape(layer, input);
  const auto n = static_cast<std::uint64_t>(input[0]);
  switch (layer.kind) {
    case LayerKind::kDense:
      return n * static_cast<std::uint64_t>(layer.in_dim) * static_cast<std::uint64_t>(layer.out_dim);
    case LayerKind::kConv2d: {
      const auto kk = static_cast<std::uint64_t>(layer.kernel_size) * layer.kernel_size;
      const auto io = static_cast<std::uint64_t>(layer.in_channels) * layer.out_channels;
      // A transposed conv does one k*k tap per input position, a regular one
      // per output position.
      const auto positions = layer.transposed
                                 ? static_cast<std::uint64_t>(input[2]) * input[3]
                                 : static_cast<std::uint64_t>(out[2]) * out[3];
      return n * positions * io * kk;
    }
    default: return 0;
  }
}

void init_params(std::span<const LayerSpec> layers, ParamStore& store, Rng& rng) {
  for (const LayerSpec& layer : layers) {
    if (!layer.has_params()) continue;
    const Shape ws = layer.weight_shape();
    int fan_in = layer.kind == LayerKind::kDense
                     ? layer.in_dim
                     : layer.in_channels * layer.kernel_size * layer.kernel_size;
    if (layer.transposed) {
      // Each output pixel of a stride-s transposed conv sees ~ in*k*k/s^2 taps.
      fan_in = std::max(1, layer.in_channels * layer.kernel_size * layer.kernel_size /
                               (layer.stride * layer.stride));
    }
    const double bound = std::sqrt(6.0 / fan_in);
    Tensor w(ws);
    for (float& v : w.data()) v = static_cast<float>(rng.uniform(-bound, bound));
    std::optional<Tensor> b;
    if (layer.has_bias) {
      b = Tensor({layer.kind == LayerKind::kDense ? layer.out_dim : layer.out_channels});
    }
    if (store.contains(layer.id)) {
      ParamEntry& e = store.at(layer.id);
      e.weights = std::move(w);
      e.bias = std::move(b);
    } else {
      store.add(layer.id, std::move(w), std::move(b));
    }
  }
}

namespace {

template <typename Store>
Var forward_impl(const LayerSpec& layer, Store& params, Var input) {
  output_shape(layer, input.shape());
  switch (layer.kind) {
    case LayerKind::kRelu: return relu(input);
    case LayerKind::kMaxPool2d: return maxpool2d(input, layer.window, layer.stride);
    default: break;
  }
  if (!params.contains(layer.id)) {
    throw Error(ErrorKind::kArgument, "layer '" + layer.id + "': no parameters in store");
  }
  const ParamEntry& entry = params.at(layer.id);
  if (entry.weights.shape() != layer.weight_shape()) {
    throw Error(ErrorKind::kShape, "layer '" + layer.id + "': stored weights " +
                                       shape_str(entry.weights.shape()) + " but spec expects " +
                                       shape_str(layer.weight_shape()));
  }
  Tape& tape = input.tape();
  Var w = tape.param(params, layer.id, ParamSlot::kWeights);
  Var b = (layer.has_bias && entry.bias) ? tape.param(params, layer.id, ParamSlot::kBias) : Var{};
  if (layer.kind == LayerKind::kDense) return dense(input, w, b);
  if (layer.transposed) return conv_transpose2d(input, w, b, layer.stride, layer.padding);
  return conv2d(input, w, b, layer.stride, layer.padding);
}

template <typename Store>
Var forward_all_impl(std::span<const LayerSpec> layers, Store& params, Var input) {
  Var x = input;
  for (const LayerSpec& layer : layers) x = forward_impl(layer, params, x);
  return x;
}

}  // namespace

Var forward(const LayerSpec& layer, ParamStore& params, Var input) {
  return forward_impl(layer, params, input);
}

Var forward(const LayerSpec& layer, const ParamStore& params, Var input) {
  return forward_impl(layer, params, input);
}

Var forward_all(std::span<const LayerSpec> layers, ParamStore& params, Var input) {
  return forward_all_impl(layers, params, input);
}

Var forward_all(std::span<const LayerSpec> layers, const ParamStore& params, Var input) {
  return forward_all_impl(layers, params, input);
}

}  // namespace slf::ad
