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

#include "slf/vq.hpp"

#include <cmath>
#include <limits>

#include "slf/error.hpp"

namespace slf::vq {

Codebook::Codebook(ad::Tensor entries) {
  if (entries.ndim() != 2 || entries.dim(0) < 2 || entries.dim(1) < 1) {
    throw Error(ErrorKind::kArgument,
                "codebook needs K>=2 rows of D>=1 entries, got " + ad::shape_str(entries.shape()));
  }
  for (float v : entries.data()) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kArgument, "codebook entries must be finite");
  }
  store_.add(kParamId, std::move(entries));
}

Codebook Codebook::random(int num_codewords, int dim, Rng& rng) {
  if (num_codewords < 2 || dim < 1) {
    throw Error(ErrorKind::kArgument, "codebook needs K>=2 and D>=1");
  }
  ad::Tensor t({num_codewords, dim});
  const double bound = 1.0 / num_codewords;
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return Codebook(std::move(t));
}

std::span<const float> Codebook::codeword(int k) const {
  const auto d = static_cast<std::size_t>(dim());
  return entries().data().subspan(static_cast<std::size_t>(k) * d, d);
}

int nearest_codeword(std::span<const float> z, const Codebook& cb) {
  const int k_count = cb.num_codewords();
  const std::size_t d = static_cast<std::size_t>(cb.dim());
  if (z.size() != d) {
    throw Error(ErrorKind::kShape, "nearest_codeword: vector of length " +
                                       std::to_string(z.size()) + " for codebook dim " +
                                       std::to_string(d));
  }
  const float* e = cb.entries().ptr();
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int k = 0; k < k_count; ++k) {
    double dist = 0.0;
    const float* c = e + static_cast<std::size_t>(k) * d;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = static_cast<double>(z[j]) - c[j];
      dist += diff * diff;
    }
    if (dist < best_dist) {
      best_dist = dist;
      best = k;
    }
  }
  return best;
}

std::vector<int> nearest_indices(const ad::Tensor& rows, const Codebook& cb) {
  const std::size_t d = static_cast<std::size_t>(cb.dim());
  if (rows.ndim() < 1 || static_cast<std::size_t>(rows.shape().back()) != d) {
    throw Error(ErrorKind::kShape, "quantize: latents " + ad::shape_str(rows.shape()) +
                                       " do not end in codebook dim " + std::to_string(d));
  }
  const std::size_t p = rows.size() / d;
  std::vector<int> idx(p);
  for (std::size_t i = 0; i < p; ++i) idx[i] = nearest_codeword(rows.data().subspan(i * d, d), cb);
  return idx;
}

QuantizeResult quantize(const ad::Tensor& latents, const Codebook& cb) {
  QuantizeResult r;
  r.indices = nearest_indices(latents, cb);
  r.pre_quant = latents;
  r.pre_quant.clear_grad();
  r.quantized = ad::Tensor(latents.shape());
  const std::size_t d = static_cast<std::size_t>(cb.dim());
  for (std::size_t i = 0; i < r.indices.size(); ++i) {
    auto c = cb.codeword(r.indices[i]);
    std::copy(c.begin(), c.end(), r.quantized.ptr() + i * d);
  }
  return r;
}

ad::Var vqvae_loss(ad::Var x, ad::Var x_hat, ad::Var z_codewords, ad::Var z_pre, double lambda_c) {
  if (x.shape() != x_hat.shape()) {
    throw Error(ErrorKind::kShape, "vqvae_loss: x " + ad::shape_str(x.shape()) + " vs x_hat " +
                                       ad::shape_str(x_hat.shape()));
  }
  if (z_codewords.shape() != z_pre.shape()) {
    throw Error(ErrorKind::kShape, "vqvae_loss: codewords " + ad::shape_str(z_codewords.shape()) +
                                       " vs latents " + ad::shape_str(z_pre.shape()));
  }
  if (!(lambda_c >= 0.0)) throw Error(ErrorKind::kArgument, "vqvae_loss: lambda_c must be >= 0");

  const float inv_n = 1.0f / static_cast<float>(x.value().dim(0));
  ad::Var reconstruction = ad::sum_squares(ad::sub(x, x_hat));
  ad::Var codebook = ad::sum_squares(ad::sub(z_codewords, ad::stop_gradient(z_pre)));
  ad::Var commitment = ad::sum_squares(ad::sub(ad::stop_gradient(z_codewords), z_pre));
  ad::Var total = ad::add(ad::add(reconstruction, codebook),
                          ad::scale(commitment, static_cast<float>(lambda_c)));
  return ad::scale(total, inv_n);
}

}  // namespace slf::vq
