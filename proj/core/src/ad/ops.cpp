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

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "slf/ad/tape.hpp"
#include "slf/error.hpp"

namespace slf::ad {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::kShape, std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                       " vs " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, Var a, int rank) {
  if (a.value().ndim() != rank) {
    throw Error(ErrorKind::kShape, std::string(op) + ": expected rank " + std::to_string(rank) +
                                       " input, got " + shape_str(a.shape()));
  }
}

void accumulate(Tape& t, int id, std::span<const float> g, float s = 1.0f) {
  if (!t.requires_grad(id)) return;
  std::span<float> dst = t.grad_buffer(id);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * g[i];
}

// Unfolds an [N, C, H, W] image into a [C*k*k, N*Ho*Wo] column matrix for a
// convolution with stride s and padding p. Out-of-image taps read as zero.
void im2col(const float* img, int n, int c, int h, int w, int k, int s, int p, int ho, int wo,
            float* col) {
  const std::size_t cols = static_cast<std::size_t>(n) * ho * wo;
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        float* row = col + (static_cast<std::size_t>((ci * k + ki) * k + kj)) * cols;
        for (int ni = 0; ni < n; ++ni) {
          const float* plane = img + (static_cast<std::size_t>(ni) * c + ci) * h * w;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * s - p + ki;
            float* dst = row + (static_cast<std::size_t>(ni) * ho + oy) * wo;
            if (iy < 0 || iy >= h) {
              std::fill(dst, dst + wo, 0.0f);
              continue;
            }
            const float* src = plane + static_cast<std::size_t>(iy) * w;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * s - p + kj;
              dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds a column matrix back into an image.
void col2im(const float* col, int n, int c, int h, int w, int k, int s, int p, int ho, int wo,
            float* img) {
  const std::size_t cols = static_cast<std::size_t>(n) * ho * wo;
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const float* row = col + (static_cast<std::size_t>((ci * k + ki) * k + kj)) * cols;
        for (int ni = 0; ni < n; ++ni) {
          float* plane = img + (static_cast<std::size_t>(ni) * c + ci) * h * w;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * s - p + ki;
            if (iy < 0 || iy >= h) continue;
            const float* src = row + (static_cast<std::size_t>(ni) * ho + oy) * wo;
            float* dst = plane + static_cast<std::size_t>(iy) * w;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * s - p + kj;
              if (ix >= 0 && ix < w) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

// [N, C, HW] <-> [C, N*HW]
void nchw_to_cm(const float* src, int n, int c, int hw, float* dst) {
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci)
      std::copy_n(src + (static_cast<std::size_t>(ni) * c + ci) * hw, hw,
                  dst + (static_cast<std::size_t>(ci) * n + ni) * hw);
}

void cm_to_nchw(const float* src, int n, int c, int hw, float* dst) {
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci)
      std::copy_n(src + (static_cast<std::size_t>(ci) * n + ni) * hw, hw,
                  dst + (static_cast<std::size_t>(ni) * c + ci) * hw);
}

Var elementwise_binary(const char* name, Var a, Var b, float sign_b) {
  require_same_shape(name, a, b);
  Tensor out(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + sign_b * bv[i];
  const int ia = a.id(), ib = b.id();
  Var parents[] = {a, b};
  Var r = a.tape().record(std::move(out), parents,
                          [ia, ib, sign_b](Tape& t, std::span<const float> g) {
                            accumulate(t, ia, g);
                            accumulate(t, ib, g, sign_b);
                          });
  if (r.value().size() == 1) r.tape().set_scalar(r, r.tape().scalar(a) + sign_b * r.tape().scalar(b));
  return r;
}

}  // namespace

Var add(Var a, Var b) { return elementwise_binary("add", a, b, 1.0f); }
Var sub(Var a, Var b) { return elementwise_binary("sub", a, b, -1.0f); }

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const int ia = a.id(), ib = b.id();
  Var parents[] = {a, b};
  return a.tape().record(std::move(out), parents, [ia, ib](Tape& t, std::span<const float> g) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      auto d = t.grad_buffer(ia);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      auto d = t.grad_buffer(ib);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, float s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a.value()[i];
  const int ia = a.id();
  Var parents[] = {a};
  Var r = a.tape().record(std::move(out), parents,
                          [ia, s](Tape& t, std::span<const float> g) { accumulate(t, ia, g, s); });
  if (r.value().size() == 1) r.tape().set_scalar(r, static_cast<double>(s) * r.tape().scalar(a));
  return r;
}

Var sum(Var a) {
  double acc = 0.0;
  for (float v : a.value().data()) acc += v;
  const int ia = a.id();
  Var parents[] = {a};
  Var r = a.tape().record(Tensor({1}, {static_cast<float>(acc)}), parents,
                          [ia](Tape& t, std::span<const float> g) {
                            if (!t.requires_grad(ia)) return;
                            for (float& d : t.grad_buffer(ia)) d += g[0];
                          });
  r.tape().set_scalar(r, acc);
  return r;
}

Var sum_squares(Var a) {
  double acc = 0.0;
  for (float v : a.value().data()) acc += static_cast<double>(v) * v;
  const int ia = a.id();
  Var parents[] = {a};
  Var r = a.tape().record(Tensor({1}, {static_cast<float>(acc)}), parents,
                          [ia](Tape& t, std::span<const float> g) {
                            if (!t.requires_grad(ia)) return;
                            const Tensor& av = t.value(ia);
                            auto d = t.grad_buffer(ia);
                            for (std::size_t i = 0; i < d.size(); ++i) d[i] += 2.0f * g[0] * av[i];
                          });
  r.tape().set_scalar(r, acc);
  return r;
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const int ia = a.id();
  Var parents[] = {a};
  return a.tape().record(std::move(out), parents,
                         [ia](Tape& t, std::span<const float> g) { accumulate(t, ia, g); });
}

Var stop_gradient(Var a) { return a.tape().constant(Tensor(a.shape(), a.value().storage())); }

Var straight_through(Var pre, Var quantized) {
  require_same_shape("straight_through", pre, quantized);
  Tensor out(quantized.shape(), quantized.value().storage());
  const int ip = pre.id();
  Var parents[] = {pre};
  return pre.tape().record(std::move(out), parents,
                           [ip](Tape& t, std::span<const float> g) { accumulate(t, ip, g); });
}

Var relu(Var x) {
  Tensor out(x.shape());
  const auto& xv = x.value();
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool on = xv[i] > 0.0f;
    out[i] = on ? xv[i] : 0.0f;
    word = (word << 1) | static_cast<std::uint64_t>(on);
    if (i % 64 == 63) x.tape().fold_branch(word);
  }
  x.tape().fold_branch(word);
  const int ix = x.id();
  Var parents[] = {x};
  return x.tape().record(std::move(out), parents, [ix](Tape& t, std::span<const float> g) {
    if (!t.requires_grad(ix)) return;
    const Tensor& xv = t.value(ix);
    auto d = t.grad_buffer(ix);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (xv[i] > 0.0f) d[i] += g[i];
  });
}

Var maxpool2d(Var x, int window, int stride) {
  require_rank("maxpool2d", x, 4);
  const int n = x.value().dim(0), c = x.value().dim(1), h = x.value().dim(2), w = x.value().dim(3);
  if (window <= 0 || stride <= 0 || window > h || window > w) {
    throw Error(ErrorKind::kShape, "maxpool2d: window " + std::to_string(window) +
                                       " does not fit input " + shape_str(x.shape()));
  }
  const int ho = (h - window) / stride + 1, wo = (w - window) / stride + 1;
  Tensor out({n, c, ho, wo});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  const float* xv = x.value().ptr();
  std::size_t o = 0;
  for (int plane = 0; plane < n * c; ++plane) {
    const std::size_t base = static_cast<std::size_t>(plane) * h * w;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = base + static_cast<std::size_t>(oy * stride) * w + ox * stride;
        for (int ky = 0; ky < window; ++ky) {
          for (int kx = 0; kx < window; ++kx) {
            const std::size_t idx = base + static_cast<std::size_t>(oy * stride + ky) * w +
                                    (ox * stride + kx);
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        out[o] = xv[best];
        (*argmax)[o] = static_cast<std::uint32_t>(best);
        x.tape().fold_branch(best);
      }
    }
  }
  const int ix = x.id();
  Var parents[] = {x};
  return x.tape().record(std::move(out), parents,
                         [ix, argmax](Tape& t, std::span<const float> g) {
                           if (!t.requires_grad(ix)) return;
                           auto d = t.grad_buffer(ix);
                           for (std::size_t i = 0; i < g.size(); ++i) d[(*argmax)[i]] += g[i];
                         });
}

Var dense(Var x, Var w, Var b) {
  require_rank("dense weights", w, 2);
  const int out_dim = w.value().dim(0), in_dim = w.value().dim(1);
  if (x.value().ndim() < 2) {
    throw Error(ErrorKind::kShape, "dense: input needs a batch dimension, got " +
                                       shape_str(x.shape()));
  }
  const int n = x.value().dim(0);
  if (x.value().size() != static_cast<std::size_t>(n) * in_dim) {
    throw Error(ErrorKind::kShape, "dense: input " + shape_str(x.shape()) +
                                       " incompatible with weights " + shape_str(w.shape()));
  }
  if (b.valid() && b.value().size() != static_cast<std::size_t>(out_dim)) {
    throw Error(ErrorKind::kShape, "dense: bias " + shape_str(b.shape()) +
                                       " incompatible with weights " + shape_str(w.shape()));
  }
  Tensor out({n, out_dim});
  ConstMapMat xm(x.value().ptr(), n, in_dim);
  ConstMapMat wm(w.value().ptr(), out_dim, in_dim);
  MapMat om(out.ptr(), n, out_dim);
  om.noalias() = xm * wm.transpose();
  if (b.valid()) {
    Eigen::Map<const Eigen::RowVectorXf> bv(b.value().ptr(), out_dim);
    om.rowwise() += bv;
  }
  const int ix = x.id(), iw = w.id(), ib = b.valid() ? b.id() : -1;
  std::vector<Var> parents{x, w};
  if (b.valid()) parents.push_back(b);
  return x.tape().record(
      std::move(out), parents, [=](Tape& t, std::span<const float> g) {
        ConstMapMat gm(g.data(), n, out_dim);
        if (t.requires_grad(ix)) {
          MapMat dx(t.grad_buffer(ix).data(), n, in_dim);
          dx.noalias() += gm * ConstMapMat(t.value(iw).ptr(), out_dim, in_dim);
        }
        if (t.requires_grad(iw)) {
          MapMat dw(t.grad_buffer(iw).data(), out_dim, in_dim);
          dw.noalias() += gm.transpose() * ConstMapMat(t.value(ix).ptr(), n, in_dim);
        }
        if (ib >= 0 && t.requires_grad(ib)) {
          Eigen::Map<Eigen::RowVectorXf> db(t.grad_buffer(ib).data(), out_dim);
          db += gm.colwise().sum();
        }
      });
}

Var conv2d(Var x, Var w, Var b, int stride, int padding) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d weights", w, 4);
  const int n = x.value().dim(0), c = x.value().dim(1), h = x.value().dim(2), wd = x.value().dim(3);
  const int o = w.value().dim(0), k = w.value().dim(2);
  if (w.value().dim(1) != c || w.value().dim(3) != k) {
    throw Error(ErrorKind::kShape, "conv2d: input " + shape_str(x.shape()) +
                                       " incompatible with weights " + shape_str(w.shape()));
  }
  const int ho = (h + 2 * padding - k) / stride + 1;
  const int wo = (wd + 2 * padding - k) / stride + 1;
  if (ho <= 0 || wo <= 0) {
    throw Error(ErrorKind::kShape, "conv2d: kernel larger than padded input " + shape_str(x.shape()));
  }
  const int ckk = c * k * k, hw = ho * wo, cols = n * hw;
  auto col = std::make_shared<FloatBuffer>(static_cast<std::size_t>(ckk) * cols);
  im2col(x.value().ptr(), n, c, h, wd, k, stride, padding, ho, wo, col->data());

  FloatBuffer out_cm(static_cast<std::size_t>(o) * cols);
  MapMat om(out_cm.data(), o, cols);
  om.noalias() = ConstMapMat(w.value().ptr(), o, ckk) * ConstMapMat(col->data(), ckk, cols);
  if (b.valid()) {
    Eigen::Map<const Eigen::VectorXf> bv(b.value().ptr(), o);
    om.colwise() += bv;
  }
  Tensor out({n, o, ho, wo});
  cm_to_nchw(out_cm.data(), n, o, hw, out.ptr());

  const int ix = x.id(), iw = w.id(), ib = b.valid() ? b.id() : -1;
  std::vector<Var> parents{x, w};
  if (b.valid()) parents.push_back(b);
  return x.tape().record(std::move(out), parents, [=](Tape& t, std::span<const float> g) {
    FloatBuffer g_cm(static_cast<std::size_t>(o) * cols);
    nchw_to_cm(g.data(), n, o, hw, g_cm.data());
    ConstMapMat gm(g_cm.data(), o, cols);
    if (t.requires_grad(iw)) {
      MapMat dw(t.grad_buffer(iw).data(), o, ckk);
      dw.noalias() += gm * ConstMapMat(col->data(), ckk, cols).transpose();
    }
    if (ib >= 0 && t.requires_grad(ib)) {
      Eigen::Map<Eigen::VectorXf> db(t.grad_buffer(ib).data(), o);
      db += gm.rowwise().sum();
    }
    if (t.requires_grad(ix)) {
      FloatBuffer dcol(static_cast<std::size_t>(ckk) * cols);
      MapMat dcm(dcol.data(), ckk, cols);
      dcm.noalias() = ConstMapMat(t.value(iw).ptr(), o, ckk).transpose() * gm;
      col2im(dcol.data(), n, c, h, wd, k, stride, padding, ho, wo, t.grad_buffer(ix).data());
    }
  });
}

Var conv_transpose2d(Var x, Var w, Var b, int stride, int padding) {
  require_rank("conv_transpose2d", x, 4);
  require_rank("conv_transpose2d weights", w, 4);
  const int n = x.value().dim(0), c = x.value().dim(1), h = x.value().dim(2), wd = x.value().dim(3);
  const int o = w.value().dim(1), k = w.value().dim(2);
  if (w.value().dim(0) != c || w.value().dim(3) != k) {
    throw Error(ErrorKind::kShape, "conv_transpose2d: input " + shape_str(x.shape()) +
                                       " incompatible with weights " + shape_str(w.shape()));
  }
  const int ho = (h - 1) * stride - 2 * padding + k;
  const int wo = (wd - 1) * stride - 2 * padding + k;
  if (ho <= 0 || wo <= 0) {
    throw Error(ErrorKind::kShape, "conv_transpose2d: empty output for input " + shape_str(x.shape()));
  }
  const int okk = o * k * k, hw = h * wd, cols = n * hw;
  auto x_cm = std::make_shared<FloatBuffer>(static_cast<std::size_t>(c) * cols);
  nchw_to_cm(x.value().ptr(), n, c, hw, x_cm->data());

  FloatBuffer col(static_cast<std::size_t>(okk) * cols);
  MapMat colm(col.data(), okk, cols);
  colm.noalias() =
      ConstMapMat(w.value().ptr(), c, okk).transpose() * ConstMapMat(x_cm->data(), c, cols);
  Tensor out({n, o, ho, wo});
  col2im(col.data(), n, o, ho, wo, k, stride, padding, h, wd, out.ptr());
  if (b.valid()) {
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    for (int ni = 0; ni < n; ++ni)
      for (int oi = 0; oi < o; ++oi) {
        float* p = out.ptr() + (static_cast<std::size_t>(ni) * o + oi) * plane;
        const float bias = b.value()[static_cast<std::size_t>(oi)];
        for (std::size_t i = 0; i < plane; ++i) p[i] += bias;
      }
  }

  const int ix = x.id(), iw = w.id(), ib = b.valid() ? b.id() : -1;
  std::vector<Var> parents{x, w};
  if (b.valid()) parents.push_back(b);
  return x.tape().record(std::move(out), parents, [=](Tape& t, std::span<const float> g) {
    FloatBuffer dcol(static_cast<std::size_t>(okk) * cols);
    im2col(g.data(), n, o, ho, wo, k, stride, padding, h, wd, dcol.data());
    ConstMapMat dcm(dcol.data(), okk, cols);
    if (t.requires_grad(iw)) {
      MapMat dw(t.grad_buffer(iw).data(), c, okk);
      dw.noalias() += ConstMapMat(x_cm->data(), c, cols) * dcm.transpose();
    }
    if (ib >= 0 && t.requires_grad(ib)) {
      auto db = t.grad_buffer(ib);
      const std::size_t plane = static_cast<std::size_t>(ho) * wo;
      for (int ni = 0; ni < n; ++ni)
        for (int oi = 0; oi < o; ++oi) {
          const float* p = g.data() + (static_cast<std::size_t>(ni) * o + oi) * plane;
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += p[i];
          db[static_cast<std::size_t>(oi)] += static_cast<float>(acc);
        }
    }
    if (t.requires_grad(ix)) {
      FloatBuffer dx_cm(static_cast<std::size_t>(c) * cols);
      MapMat dxm(dx_cm.data(), c, cols);
      dxm.noalias() = ConstMapMat(t.value(iw).ptr(), c, okk) * dcm;
      FloatBuffer dx(static_cast<std::size_t>(n) * c * hw);
      cm_to_nchw(dx_cm.data(), n, c, hw, dx.data());
      accumulate(t, ix, dx);
    }
  });
}

Var channels_to_rows(Var x) {
  require_rank("channels_to_rows", x, 4);
  const int n = x.value().dim(0), c = x.value().dim(1), h = x.value().dim(2), w = x.value().dim(3);
  const int hw = h * w;
  Tensor out({n * hw, c});
  const float* src = x.value().ptr();
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci)
      for (int p = 0; p < hw; ++p)
        out[(static_cast<std::size_t>(ni) * hw + p) * c + ci] =
            src[(static_cast<std::size_t>(ni) * c + ci) * hw + p];
  const int ix = x.id();
  Var parents[] = {x};
  return x.tape().record(std::move(out), parents, [=](Tape& t, std::span<const float> g) {
    if (!t.requires_grad(ix)) return;
    auto d = t.grad_buffer(ix);
    for (int ni = 0; ni < n; ++ni)
      for (int ci = 0; ci < c; ++ci)
        for (int p = 0; p < hw; ++p)
          d[(static_cast<std::size_t>(ni) * c + ci) * hw + p] +=
              g[(static_cast<std::size_t>(ni) * hw + p) * c + ci];
  });
}

Var rows_to_channels(Var rows, int n, int h, int w) {
  require_rank("rows_to_channels", rows, 2);
  const int hw = h * w, c = rows.value().dim(1);
  if (rows.value().dim(0) != n * hw) {
    throw Error(ErrorKind::kShape, "rows_to_channels: " + shape_str(rows.shape()) +
                                       " does not hold " + std::to_string(n) + "x" +
                                       std::to_string(h) + "x" + std::to_string(w) + " positions");
  }
  Tensor out({n, c, h, w});
  const float* src = rows.value().ptr();
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci)
      for (int p = 0; p < hw; ++p)
        out[(static_cast<std::size_t>(ni) * c + ci) * hw + p] =
            src[(static_cast<std::size_t>(ni) * hw + p) * c + ci];
  const int ir = rows.id();
  Var parents[] = {rows};
  return rows.tape().record(std::move(out), parents, [=](Tape& t, std::span<const float> g) {
    if (!t.requires_grad(ir)) return;
    auto d = t.grad_buffer(ir);
    for (int ni = 0; ni < n; ++ni)
      for (int ci = 0; ci < c; ++ci)
        for (int p = 0; p < hw; ++p)
          d[(static_cast<std::size_t>(ni) * hw + p) * c + ci] +=
              g[(static_cast<std::size_t>(ni) * c + ci) * hw + p];
  });
}

Var gather_rows(Var table, std::span<const int> indices) {
  require_rank("gather_rows", table, 2);
  const int k = table.value().dim(0), d = table.value().dim(1);
  const int p = static_cast<int>(indices.size());
  if (p == 0) throw Error(ErrorKind::kShape, "gather_rows: empty index list");
  Tensor out({p, d});
  auto idx = std::make_shared<std::vector<int>>(indices.begin(), indices.end());
  for (int i = 0; i < p; ++i) {
    const int r = (*idx)[static_cast<std::size_t>(i)];
    if (r < 0 || r >= k) {
      throw Error(ErrorKind::kArgument, "gather_rows: index " + std::to_string(r) +
                                            " outside [0," + std::to_string(k) + ")");
    }
    std::copy_n(table.value().ptr() + static_cast<std::size_t>(r) * d, d,
                out.ptr() + static_cast<std::size_t>(i) * d);
  }
  const int it = table.id();
  Var parents[] = {table};
  return table.tape().record(std::move(out), parents, [=](Tape& t, std::span<const float> g) {
    if (!t.requires_grad(it)) return;
    auto dt = t.grad_buffer(it);
    for (int i = 0; i < p; ++i) {
      const std::size_t r = static_cast<std::size_t>((*idx)[static_cast<std::size_t>(i)]);
      for (int j = 0; j < d; ++j) dt[r * d + j] += g[static_cast<std::size_t>(i) * d + j];
    }
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  require_rank("softmax_cross_entropy", logits, 2);
  const int n = logits.value().dim(0), c = logits.value().dim(1);
  if (static_cast<int>(labels.size()) != n) {
    throw Error(ErrorKind::kShape, "softmax_cross_entropy: " + std::to_string(labels.size()) +
                                       " labels for logits " + shape_str(logits.shape()));
  }
  auto probs = std::make_shared<FloatBuffer>(static_cast<std::size_t>(n) * c);
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* row = logits.value().ptr() + static_cast<std::size_t>(i) * c;
    const int y = (*lab)[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) {
      throw Error(ErrorKind::kArgument, "softmax_cross_entropy: label " + std::to_string(y) +
                                            " outside [0," + std::to_string(c) + ")");
    }
    const float mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    for (int j = 0; j < c; ++j)
      (*probs)[static_cast<std::size_t>(i) * c + j] =
          static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / z);
    loss += std::log(z) - (row[y] - mx);
  }
  const int il = logits.id();
  Var parents[] = {logits};
  Var r = logits.tape().record(
      Tensor({1}, {static_cast<float>(loss / n)}), parents,
      [=](Tape& t, std::span<const float> g) {
        if (!t.requires_grad(il)) return;
        auto d = t.grad_buffer(il);
        const float s = g[0] / static_cast<float>(n);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < c; ++j) {
            const std::size_t q = static_cast<std::size_t>(i) * c + j;
            d[q] += s * ((*probs)[q] - (j == (*lab)[static_cast<std::size_t>(i)] ? 1.0f : 0.0f));
          }
      });
  r.tape().set_scalar(r, loss / n);
  return r;
}

}  // namespace slf::ad
