// Copyright 2026 The SmoothNet Authors.
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

// Differentiable primitives. Every op computes its forward result, checks it
// for NaN/Inf, and records a backward closure on the tape when any input is
// differentiable. Pass tape == nullptr for pure inference.
//
// Layout conventions: activations are NCHW, matrices are row-major,
// convolution is cross-correlation (no kernel flip), pooling windows that
// touch padding reduce over the valid cells only.

#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <vector>

#include "smoothnet/common.hpp"
#include "smoothnet/gemm.hpp"
#include "smoothnet/tensor.hpp"

namespace smoothnet {

namespace detail {

inline int conv_out_extent(int in, int k, int stride, int pad) {
  const int span = in + 2 * pad - k;
  if (span < 0) {
    throw ShapeError("window " + std::to_string(k) +
                     " larger than padded input extent " +
                     std::to_string(in + 2 * pad));
  }
  return span / stride + 1;
}

// col is [C*kh*kw, OH*OW]; row (c*kh+r)*kw+s holds the input value seen by
// kernel tap (r,s) of channel c at each output position, zero in padding.
template <typename T>
void im2col(const T* x, int c_in, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow, T* col) {
  std::size_t idx = 0;
  for (int c = 0; c < c_in; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * h * w;
    for (int r = 0; r < kh; ++r) {
      for (int s = 0; s < kw; ++s) {
        for (int i = 0; i < oh; ++i) {
          const int ih = i * stride - pad + r;
          if (ih < 0 || ih >= h) {
            for (int j = 0; j < ow; ++j) col[idx++] = T(0);
            continue;
          }
          const T* row = plane + static_cast<std::size_t>(ih) * w;
          for (int j = 0; j < ow; ++j) {
            const int iw = j * stride - pad + s;
            col[idx++] = (iw >= 0 && iw < w) ? row[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int c_in, int h, int w, int kh, int kw,
                int stride, int pad, int oh, int ow, T* x) {
  std::size_t idx = 0;
  for (int c = 0; c < c_in; ++c) {
    T* plane = x + static_cast<std::size_t>(c) * h * w;
    for (int r = 0; r < kh; ++r) {
      for (int s = 0; s < kw; ++s) {
        for (int i = 0; i < oh; ++i) {
          const int ih = i * stride - pad + r;
          if (ih < 0 || ih >= h) {
            idx += static_cast<std::size_t>(ow);
            continue;
          }
          T* row = plane + static_cast<std::size_t>(ih) * w;
          for (int j = 0; j < ow; ++j) {
            const int iw = j * stride - pad + s;
            if (iw >= 0 && iw < w) row[iw] += col[idx];
            ++idx;
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  check_finite(out, "add");
  if (Tape<T>::wants_grad(tape, {&a, &b})) {
    tape->record("add", {&a, &b}, out,
                 [](const std::vector<T>& go, const auto& gi) {
                   for (std::vector<T>* g : gi) {
                     if (!g) continue;
                     for (std::size_t i = 0; i < go.size(); ++i) {
                       (*g)[i] += go[i];
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor<T> out(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
  check_finite(out, "mul");
  if (Tape<T>::wants_grad(tape, {&a, &b})) {
    tape->record("mul", {&a, &b}, out,
                 [a, b](const std::vector<T>& go, const auto& gi) {
                   for (std::size_t i = 0; i < go.size(); ++i) {
                     if (gi[0]) (*gi[0])[i] += go[i] * b[i];
                     if (gi[1]) (*gi[1])[i] += go[i] * a[i];
                   }
                 });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
  check_finite(out, "scale");
  if (Tape<T>::wants_grad(tape, {&a})) {
    tape->record("scale", {&a}, out,
                 [s](const std::vector<T>& go, const auto& gi) {
                   if (!gi[0]) return;
                   for (std::size_t i = 0; i < go.size(); ++i) {
                     (*gi[0])[i] += go[i] * s;
                   }
                 });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& a) {
  T acc = T(0);
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  check_finite(out, "sum");
  if (Tape<T>::wants_grad(tape, {&a})) {
    tape->record("sum", {&a}, out,
                 [n](const std::vector<T>& go, const auto& gi) {
                   if (!gi[0]) return;
                   for (std::size_t i = 0; i < n; ++i) (*gi[0])[i] += go[0];
                 });
  }
  return out;
}

template <typename T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out({m, n});
  gemm(false, false, m, n, k, T(1), a.data(), b.data(), T(0), out.data());
  check_finite(out, "matmul");
  if (Tape<T>::wants_grad(tape, {&a, &b})) {
    tape->record("matmul", {&a, &b}, out,
                 [a, b, m, k, n](const std::vector<T>& go, const auto& gi) {
                   if (gi[0]) {
                     gemm(false, true, m, k, n, T(1), go.data(), b.data(),
                          T(1), gi[0]->data());
                   }
                   if (gi[1]) {
                     gemm(true, false, k, n, m, T(1), a.data(), go.data(),
                          T(1), gi[1]->data());
                   }
                 });
  }
  return out;
}

// x: [N, F], bias: [F]; adds the bias vector to every row. The only
// broadcasting rule in the engine, shared by linear and conv bias.
template <typename T>
Tensor<T> add_row_bias(Tape<T>* tape, const Tensor<T>& x,
                       const Tensor<T>& bias) {
  if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw ShapeError("add_row_bias: " + shape_str(x.shape()) + " + " +
                     shape_str(bias.shape()));
  }
  const int n = x.dim(0), f = x.dim(1);
  Tensor<T> out({n, f});
  for (int i = 0; i < n; ++i) {
    const T* px = x.data() + static_cast<std::size_t>(i) * f;
    T* po = out.data() + static_cast<std::size_t>(i) * f;
    for (int j = 0; j < f; ++j) po[j] = px[j] + bias[static_cast<std::size_t>(j)];
  }
  check_finite(out, "add_row_bias");
  if (Tape<T>::wants_grad(tape, {&x, &bias})) {
    tape->record("add_row_bias", {&x, &bias}, out,
                 [n, f](const std::vector<T>& go, const auto& gi) {
                   if (gi[0]) {
                     for (std::size_t i = 0; i < go.size(); ++i) {
                       (*gi[0])[i] += go[i];
                     }
                   }
                   if (gi[1]) {
                     for (int i = 0; i < n; ++i) {
                       for (int j = 0; j < f; ++j) {
                         (*gi[1])[static_cast<std::size_t>(j)] +=
                             go[static_cast<std::size_t>(i) * f + j];
                       }
                     }
                   }
                 });
  }
  return out;
}

// x: [N, F], w: [F, G], b: [G]  ->  [N, G]
template <typename T>
Tensor<T> linear_forward(Tape<T>* tape, const Tensor<T>& x,
                         const Tensor<T>& w, const Tensor<T>& b) {
  return add_row_bias(tape, matmul(tape, x, w), b);
}

// Collapses all trailing dims: [N, ...] -> [N, prod(...)].
template <typename T>
Tensor<T> flatten(Tape<T>* tape, const Tensor<T>& x) {
  if (x.rank() < 1) throw ShapeError("flatten: rank-0 input");
  const int n = x.dim(0);
  const int rest = static_cast<int>(x.numel() / static_cast<std::size_t>(n));
  Tensor<T> out = x.reshaped({n, rest});
  if (Tape<T>::wants_grad(tape, {&x})) {
    tape->record("flatten", {&x}, out,
                 [](const std::vector<T>& go, const auto& gi) {
                   if (!gi[0]) return;
                   for (std::size_t i = 0; i < go.size(); ++i) {
                     (*gi[0])[i] += go[i];
                   }
                 });
  }
  return out;
}

// a: [N, Ca, H, W], b: [N, Cb, H, W] -> [N, Ca+Cb, H, W]
template <typename T>
Tensor<T> concat_channels(Tape<T>* tape, const Tensor<T>& a,
                          const Tensor<T>& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t hw = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
  Tensor<T> out({n, ca + cb, a.dim(2), a.dim(3)});
  const std::size_t sa = static_cast<std::size_t>(ca) * hw;
  const std::size_t sb = static_cast<std::size_t>(cb) * hw;
  for (int i = 0; i < n; ++i) {
    T* dst = out.data() + static_cast<std::size_t>(i) * (sa + sb);
    std::memcpy(dst, a.data() + static_cast<std::size_t>(i) * sa,
                sa * sizeof(T));
    std::memcpy(dst + sa, b.data() + static_cast<std::size_t>(i) * sb,
                sb * sizeof(T));
  }
  if (Tape<T>::wants_grad(tape, {&a, &b})) {
    tape->record("concat_channels", {&a, &b}, out,
                 [n, sa, sb](const std::vector<T>& go, const auto& gi) {
                   for (int i = 0; i < n; ++i) {
                     const T* src = go.data() +
                                    static_cast<std::size_t>(i) * (sa + sb);
                     if (gi[0]) {
                       T* g = gi[0]->data() + static_cast<std::size_t>(i) * sa;
                       for (std::size_t j = 0; j < sa; ++j) g[j] += src[j];
                     }
                     if (gi[1]) {
                       T* g = gi[1]->data() + static_cast<std::size_t>(i) * sb;
                       for (std::size_t j = 0; j < sb; ++j) g[j] += src[sa + j];
                     }
                   }
                 });
  }
  return out;
}

// Copies channels [c0, c1) of a NCHW tensor.
template <typename T>
Tensor<T> slice_channels(Tape<T>* tape, const Tensor<T>& x, int c0, int c1) {
  if (x.rank() != 4 || c0 < 0 || c1 <= c0 || c1 > x.dim(1)) {
    throw ShapeError("slice_channels: range [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") of " + shape_str(x.shape()));
  }
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor<T> out({n, c1 - c0, x.dim(2), x.dim(3)});
  const std::size_t stride_in = static_cast<std::size_t>(c) * hw;
  const std::size_t stride_out = static_cast<std::size_t>(c1 - c0) * hw;
  for (int i = 0; i < n; ++i) {
    std::memcpy(out.data() + static_cast<std::size_t>(i) * stride_out,
                x.data() + static_cast<std::size_t>(i) * stride_in +
                    static_cast<std::size_t>(c0) * hw,
                stride_out * sizeof(T));
  }
  if (Tape<T>::wants_grad(tape, {&x})) {
    tape->record("slice_channels", {&x}, out,
                 [n, c0, hw, stride_in, stride_out](const std::vector<T>& go,
                                                    const auto& gi) {
                   if (!gi[0]) return;
                   for (int i = 0; i < n; ++i) {
                     T* g = gi[0]->data() +
                            static_cast<std::size_t>(i) * stride_in +
                            static_cast<std::size_t>(c0) * hw;
                     const T* src =
                         go.data() + static_cast<std::size_t>(i) * stride_out;
                     for (std::size_t j = 0; j < stride_out; ++j) {
                       g[j] += src[j];
                     }
                   }
                 });
  }
  return out;
}

// Cross-correlation: out[n,co,i,j] = b[co] +
//   sum_{ci,r,s} x[n,ci,i*stride-pad+r,j*stride-pad+s] * w[co,ci,r,s].
// x: [N,Cin,H,W], w: [Cout,Cin,kh,kw] with kh,kw odd, b: [Cout].
// Implemented as im2col + GEMM; the backward pass rebuilds the column
// matrix instead of keeping it alive across the step.
template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w,
                 const Tensor<T>& b, int stride, int padding) {
  if (x.rank() != 4 || w.rank() != 4 || b.rank() != 1) {
    throw ShapeError("conv2d: expected x[N,C,H,W], w[Co,Ci,kh,kw], b[Co]");
  }
  if (w.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) +
                     " vs kernel " + std::to_string(w.dim(1)));
  }
  if (b.dim(0) != w.dim(0)) throw ShapeError("conv2d: bias/kernel mismatch");
  const int kh = w.dim(2), kw = w.dim(3);
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ShapeError("conv2d: kernel extents must be odd");
  }
  if (stride < 1 || padding < 0) {
    throw ShapeError("conv2d: stride must be >=1 and padding >=0");
  }
  const int n = x.dim(0), c_in = x.dim(1), h = x.dim(2), iw = x.dim(3);
  const int c_out = w.dim(0);
  const int oh = detail::conv_out_extent(h, kh, stride, padding);
  const int ow = detail::conv_out_extent(iw, kw, stride, padding);
  const std::size_t k = static_cast<std::size_t>(c_in) * kh * kw;
  const std::size_t p = static_cast<std::size_t>(oh) * ow;

  Tensor<T> out({n, c_out, oh, ow});
  {
    std::vector<T> col(k * p);
    for (int i = 0; i < n; ++i) {
      detail::im2col(x.data() + static_cast<std::size_t>(i) * c_in * h * iw,
                     c_in, h, iw, kh, kw, stride, padding, oh, ow, col.data());
      T* dst = out.data() + static_cast<std::size_t>(i) * c_out * p;
      gemm(false, false, c_out, static_cast<int>(p), static_cast<int>(k),
           T(1), w.data(), col.data(), T(0), dst);
      for (int co = 0; co < c_out; ++co) {
        const T bias = b[static_cast<std::size_t>(co)];
        T* row = dst + static_cast<std::size_t>(co) * p;
        for (std::size_t j = 0; j < p; ++j) row[j] += bias;
      }
    }
  }
  check_finite(out, "conv2d");

  if (Tape<T>::wants_grad(tape, {&x, &w, &b})) {
    tape->record(
        "conv2d", {&x, &w, &b}, out,
        [x, w, n, c_in, h, iw, kh, kw, stride, padding, oh, ow, k, p,
         c_out](const std::vector<T>& go, const auto& gi) {
          std::vector<T> col;
          if (gi[1]) col.resize(k * p);
          std::vector<T> dcol;
          if (gi[0]) dcol.resize(k * p);
          for (int i = 0; i < n; ++i) {
            const T* go_i = go.data() + static_cast<std::size_t>(i) * c_out * p;
            if (gi[1]) {  // d w += go_i * col^T
              detail::im2col(
                  x.data() + static_cast<std::size_t>(i) * c_in * h * iw, c_in,
                  h, iw, kh, kw, stride, padding, oh, ow, col.data());
              gemm(false, true, c_out, static_cast<int>(k),
                   static_cast<int>(p), T(1), go_i, col.data(), T(1),
                   gi[1]->data());
            }
            if (gi[0]) {  // d x += col2im(w^T * go_i)
              gemm(true, false, static_cast<int>(k), static_cast<int>(p),
                   c_out, T(1), w.data(), go_i, T(0), dcol.data());
              detail::col2im_add(
                  dcol.data(), c_in, h, iw, kh, kw, stride, padding, oh, ow,
                  gi[0]->data() + static_cast<std::size_t>(i) * c_in * h * iw);
            }
            if (gi[2]) {
              for (int co = 0; co < c_out; ++co) {
                T acc = T(0);
                const T* row = go_i + static_cast<std::size_t>(co) * p;
                for (std::size_t j = 0; j < p; ++j) acc += row[j];
                (*gi[2])[static_cast<std::size_t>(co)] += acc;
              }
            }
          }
        });
  }
  return out;
}

// Max over each window; windows may extend into padding but reduce over the
// valid cells only, and ties keep the first cell in row-major scan order.
template <typename T>
Tensor<T> maxpool2d(Tape<T>* tape, const Tensor<T>& x, int window, int stride,
                    int padding) {
  if (x.rank() != 4) throw ShapeError("maxpool2d: expected NCHW input");
  if (window < 1 || stride < 1 || padding < 0) {
    throw ShapeError("maxpool2d: bad window/stride/padding");
  }
  if (padding >= window) {
    throw ShapeError("maxpool2d: padding must be smaller than the window");
  }
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = detail::conv_out_extent(h, window, stride, padding);
  const int ow = detail::conv_out_extent(w, window, stride, padding);
  Tensor<T> out({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  std::size_t o = 0;
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const T* plane =
          x.data() + (static_cast<std::size_t>(i) * c + ch) * h * w;
      const std::size_t plane_off =
          (static_cast<std::size_t>(i) * c + ch) * h * w;
      for (int ph = 0; ph < oh; ++ph) {
        for (int pw = 0; pw < ow; ++pw) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = 0;
          for (int r = 0; r < window; ++r) {
            const int ih = ph * stride - padding + r;
            if (ih < 0 || ih >= h) continue;
            for (int s = 0; s < window; ++s) {
              const int iw = pw * stride - padding + s;
              if (iw < 0 || iw >= w) continue;
              const T v = plane[static_cast<std::size_t>(ih) * w + iw];
              if (v > best) {
                best = v;
                best_idx = plane_off + static_cast<std::size_t>(ih) * w + iw;
              }
            }
          }
          out[o] = best;
          (*argmax)[o] = best_idx;
          ++o;
        }
      }
    }
  }
  check_finite(out, "maxpool2d");
  if (Tape<T>::wants_grad(tape, {&x})) {
    tape->record("maxpool2d", {&x}, out,
                 [argmax](const std::vector<T>& go, const auto& gi) {
                   if (!gi[0]) return;
                   for (std::size_t i = 0; i < go.size(); ++i) {
                     (*gi[0])[(*argmax)[i]] += go[i];
                   }
                 });
  }
  return out;
}

// Mean over each window, no padding.
template <typename T>
Tensor<T> avgpool2d(Tape<T>* tape, const Tensor<T>& x, int window,
                    int stride) {
  if (x.rank() != 4) throw ShapeError("avgpool2d: expected NCHW input");
  if (window < 1 || stride < 1) throw ShapeError("avgpool2d: bad window/stride");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = detail::conv_out_extent(h, window, stride, 0);
  const int ow = detail::conv_out_extent(w, window, stride, 0);
  const T inv = T(1) / static_cast<T>(window * window);
  Tensor<T> out({n, c, oh, ow});
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < static_cast<std::size_t>(n) * c;
       ++plane) {
    const T* px = x.data() + plane * h * w;
    for (int ph = 0; ph < oh; ++ph) {
      for (int pw = 0; pw < ow; ++pw) {
        T acc = T(0);
        for (int r = 0; r < window; ++r) {
          const T* row = px + static_cast<std::size_t>(ph * stride + r) * w;
          for (int s = 0; s < window; ++s) acc += row[pw * stride + s];
        }
        out[o++] = acc * inv;
      }
    }
  }
  check_finite(out, "avgpool2d");
  if (Tape<T>::wants_grad(tape, {&x})) {
    tape->record(
        "avgpool2d", {&x}, out,
        [n, c, h, w, oh, ow, window, stride, inv](const std::vector<T>& go,
                                                  const auto& gi) {
          if (!gi[0]) return;
          std::size_t o = 0;
          for (std::size_t plane = 0; plane < static_cast<std::size_t>(n) * c;
               ++plane) {
            T* gx = gi[0]->data() + plane * h * w;
            for (int ph = 0; ph < oh; ++ph) {
              for (int pw = 0; pw < ow; ++pw) {
                const T g = go[o++] * inv;
                for (int r = 0; r < window; ++r) {
                  T* row = gx + static_cast<std::size_t>(ph * stride + r) * w;
                  for (int s = 0; s < window; ++s) row[pw * stride + s] += g;
                }
              }
            }
          }
        });
  }
  return out;
}

// Averages near-equal bins so the output is exactly out_h x out_w. Bin i
// covers rows [floor(i*H/out_h), floor((i+1)*H/out_h)). out == in is the
// identity; (1,1) is the global mean.
template <typename T>
Tensor<T> adaptive_avgpool(Tape<T>* tape, const Tensor<T>& x, int out_h,
                           int out_w) {
  if (x.rank() != 4) throw ShapeError("adaptive_avgpool: expected NCHW input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (out_h < 1 || out_w < 1 || out_h > h || out_w > w) {
    throw ShapeError("adaptive_avgpool: bins " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " for input " +
                     shape_str(x.shape()));
  }
  Tensor<T> out({n, c, out_h, out_w});
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < static_cast<std::size_t>(n) * c;
       ++plane) {
    const T* px = x.data() + plane * h * w;
    for (int i = 0; i < out_h; ++i) {
      const int r0 = i * h / out_h, r1 = (i + 1) * h / out_h;
      for (int j = 0; j < out_w; ++j) {
        const int c0 = j * w / out_w, c1 = (j + 1) * w / out_w;
        T acc = T(0);
        for (int r = r0; r < r1; ++r) {
          for (int s = c0; s < c1; ++s) {
            acc += px[static_cast<std::size_t>(r) * w + s];
          }
        }
        out[o++] = acc / static_cast<T>((r1 - r0) * (c1 - c0));
      }
    }
  }
  check_finite(out, "adaptive_avgpool");
  if (Tape<T>::wants_grad(tape, {&x})) {
    tape->record(
        "adaptive_avgpool", {&x}, out,
        [n, c, h, w, out_h, out_w](const std::vector<T>& go, const auto& gi) {
          if (!gi[0]) return;
          std::size_t o = 0;
          for (std::size_t plane = 0; plane < static_cast<std::size_t>(n) * c;
               ++plane) {
            T* gx = gi[0]->data() + plane * h * w;
            for (int i = 0; i < out_h; ++i) {
              const int r0 = i * h / out_h, r1 = (i + 1) * h / out_h;
              for (int j = 0; j < out_w; ++j) {
                const int c0 = j * w / out_w, c1 = (j + 1) * w / out_w;
                const T g = go[o++] / static_cast<T>((r1 - r0) * (c1 - c0));
                for (int r = r0; r < r1; ++r) {
                  for (int s = c0; s < c1; ++s) {
                    gx[static_cast<std::size_t>(r) * w + s] += g;
                  }
                }
              }
            }
          }
        });
  }
  return out;
}

// Fixed self-normalizing constants.
template <typename T>
struct SeluConstants {
  static constexpr T lambda = T(1.0507009873554804934193349852946L);
  static constexpr T alpha = T(1.6732632423543772848170429916717L);
};

template <typename T>
Tensor<T> selu(Tape<T>* tape, const Tensor<T>& x) {
  constexpr T lam = SeluConstants<T>::lambda;
  constexpr T al = SeluConstants<T>::alpha;
  Tensor<T> out(x.shape());
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x[i];
    out[i] = v > T(0) ? lam * v : lam * al * (std::exp(v) - T(1));
  }
  check_finite(out, "selu");
  if (Tape<T>::wants_grad(tape, {&x})) {
    // y > 0 iff x > 0, and for x <= 0 dy/dx = lam*al*exp(x) = y + lam*al,
    // so the saved output is enough for the backward pass.
    tape->record("selu", {&x}, out,
                 [out](const std::vector<T>& go, const auto& gi) {
                   if (!gi[0]) return;
                   for (std::size_t i = 0; i < go.size(); ++i) {
                     const T y = out[i];
                     (*gi[0])[i] += go[i] * (y > T(0) ? lam : y + lam * al);
                   }
                 });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  check_finite(out, "relu");
  if (Tape<T>::wants_grad(tape, {&x})) {
    tape->record("relu", {&x}, out,
                 [out](const std::vector<T>& go, const auto& gi) {
                   if (!gi[0]) return;
                   for (std::size_t i = 0; i < go.size(); ++i) {
                     if (out[i] > T(0)) (*gi[0])[i] += go[i];
                   }
                 });
  }
  return out;
}

// Per-sample, per-group standardization with per-channel affine. Statistics
// never mix samples, so train and eval behave identically at any batch
// size. x: [N,C,H,W], gamma/beta: [C], C % groups == 0.
template <typename T>
Tensor<T> group_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, int groups, T eps) {
  if (x.rank() != 4) throw ShapeError("group_norm: expected NCHW input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (groups < 1 || c % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(c) +
                     " channels not divisible by " + std::to_string(groups) +
                     " groups");
  }
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 ||
      beta.dim(0) != c) {
    throw ShapeError("group_norm: affine params must have shape [C]");
  }
  const int cg = c / groups;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t m = static_cast<std::size_t>(cg) * hw;  // group size

  Tensor<T> out(x.shape());
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto invstd = std::make_shared<std::vector<T>>(
      static_cast<std::size_t>(n) * groups);
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < groups; ++g) {
      const std::size_t base =
          (static_cast<std::size_t>(i) * c + static_cast<std::size_t>(g) * cg) *
          hw;
      const T* px = x.data() + base;
      T mean = T(0);
      for (std::size_t j = 0; j < m; ++j) mean += px[j];
      mean /= static_cast<T>(m);
      T var = T(0);
      for (std::size_t j = 0; j < m; ++j) {
        const T d = px[j] - mean;
        var += d * d;
      }
      var /= static_cast<T>(m);
      const T is = T(1) / std::sqrt(var + eps);
      (*invstd)[static_cast<std::size_t>(i) * groups + g] = is;
      T* ph = xhat->data() + base;
      T* po = out.data() + base;
      for (int ch = 0; ch < cg; ++ch) {
        const std::size_t cidx = static_cast<std::size_t>(g * cg + ch);
        const T ga = gamma[cidx], be = beta[cidx];
        for (std::size_t j = 0; j < hw; ++j) {
          const std::size_t off = static_cast<std::size_t>(ch) * hw + j;
          const T xh = (px[off] - mean) * is;
          ph[off] = xh;
          po[off] = ga * xh + be;
        }
      }
    }
  }
  check_finite(out, "group_norm");

  if (Tape<T>::wants_grad(tape, {&x, &gamma, &beta})) {
    Tensor<T> gamma_saved = gamma;
    tape->record(
        "group_norm", {&x, &gamma, &beta}, out,
        [xhat, invstd, gamma_saved, n, c, groups, cg, hw,
         m](const std::vector<T>& go, const auto& gi) {
          for (int i = 0; i < n; ++i) {
            for (int g = 0; g < groups; ++g) {
              const std::size_t base = (static_cast<std::size_t>(i) * c +
                                        static_cast<std::size_t>(g) * cg) *
                                       hw;
              const T* ph = xhat->data() + base;
              const T* pg = go.data() + base;
              if (gi[1] || gi[2]) {
                for (int ch = 0; ch < cg; ++ch) {
                  const std::size_t cidx = static_cast<std::size_t>(g * cg + ch);
                  T dg = T(0), db = T(0);
                  for (std::size_t j = 0; j < hw; ++j) {
                    const std::size_t off = static_cast<std::size_t>(ch) * hw + j;
                    dg += pg[off] * ph[off];
                    db += pg[off];
                  }
                  if (gi[1]) (*gi[1])[cidx] += dg;
                  if (gi[2]) (*gi[2])[cidx] += db;
                }
              }
              if (gi[0]) {
                const T is =
                    (*invstd)[static_cast<std::size_t>(i) * groups + g];
                // dxhat = go * gamma;   dx = is*(dxhat - mean(dxhat)
                //                               - xhat*mean(dxhat*xhat))
                T s1 = T(0), s2 = T(0);
                for (int ch = 0; ch < cg; ++ch) {
                  const T ga = gamma_saved[static_cast<std::size_t>(g * cg + ch)];
                  for (std::size_t j = 0; j < hw; ++j) {
                    const std::size_t off = static_cast<std::size_t>(ch) * hw + j;
                    const T dxh = pg[off] * ga;
                    s1 += dxh;
                    s2 += dxh * ph[off];
                  }
                }
                s1 /= static_cast<T>(m);
                s2 /= static_cast<T>(m);
                T* gx = gi[0]->data() + base;
                for (int ch = 0; ch < cg; ++ch) {
                  const T ga = gamma_saved[static_cast<std::size_t>(g * cg + ch)];
                  for (std::size_t j = 0; j < hw; ++j) {
                    const std::size_t off = static_cast<std::size_t>(ch) * hw + j;
                    const T dxh = pg[off] * ga;
                    gx[off] += is * (dxh - s1 - ph[off] * s2);
                  }
                }
              }
            }
          }
        });
  }
  return out;
}

// Mean softmax cross-entropy over the batch. logits: [N,K]; labels in
// [0,K). Computed with the max-subtracted log-sum-exp, backward is
// (softmax - onehot) / N.
template <typename T>
Tensor<T> cross_entropy(Tape<T>* tape, const Tensor<T>& logits,
                        const std::vector<int>& labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: expected [N,K]");
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " rows");
  }
  auto softmax = std::make_shared<std::vector<T>>(logits.numel());
  T loss = T(0);
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) {
      throw ShapeError("cross_entropy: label " + std::to_string(y) +
                       " outside [0," + std::to_string(k) + ")");
    }
    const T* row = logits.data() + static_cast<std::size_t>(i) * k;
    T mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T denom = T(0);
    for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    T* prow = softmax->data() + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < k; ++j) prow[j] = std::exp(row[j] - mx) / denom;
    loss += std::log(denom) + mx - row[y];
  }
  Tensor<T> out = Tensor<T>::scalar(loss / static_cast<T>(n));
  check_finite(out, "cross_entropy");
  if (Tape<T>::wants_grad(tape, {&logits})) {
    auto labels_saved = std::make_shared<std::vector<int>>(labels);
    tape->record("cross_entropy", {&logits}, out,
                 [softmax, labels_saved, n, k](const std::vector<T>& go,
                                               const auto& gi) {
                   if (!gi[0]) return;
                   const T g = go[0] / static_cast<T>(n);
                   for (int i = 0; i < n; ++i) {
                     const T* prow =
                         softmax->data() + static_cast<std::size_t>(i) * k;
                     T* grow = gi[0]->data() + static_cast<std::size_t>(i) * k;
                     for (int j = 0; j < k; ++j) grow[j] += g * prow[j];
                     grow[(*labels_saved)[static_cast<std::size_t>(i)]] -= g;
                   }
                 });
  }
  return out;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows: expected [N,K]");
  const int n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const T* row = logits.data() + static_cast<std::size_t>(i) * k;
    int best = 0;
    for (int j = 1; j < k; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

// Analytic gradients vs central differences over every coordinate of the
// given leaves. f must rebuild the forward pass from the current leaf
// values on each call (tape may be null). Returns the max of
// |analytic - central| / (|central| + 1e-12). Run with T = double.
template <typename T>
double finite_diff_check(const std::function<Tensor<T>(Tape<T>*)>& f,
                         const std::vector<Tensor<T>*>& leaves, T h) {
  Tape<T> tape;
  for (Tensor<T>* t : leaves) {
    t->set_requires_grad(true);
    tape.watch(*t);
  }
  Tensor<T> loss = f(&tape);
  if (loss.numel() != 1) {
    throw ShapeError("finite_diff_check: objective must be scalar");
  }
  tape.backward(loss);
  std::vector<Tensor<T>> analytic;
  analytic.reserve(leaves.size());
  for (Tensor<T>* t : leaves) analytic.push_back(tape.grad(*t));

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor<T>& leaf = *leaves[li];
    for (std::size_t i = 0; i < leaf.numel(); ++i) {
      const T saved = leaf[i];
      leaf[i] = saved + h;
      const double fp = static_cast<double>(f(nullptr).value());
      leaf[i] = saved - h;
      const double fm = static_cast<double>(f(nullptr).value());
      leaf[i] = saved;
      const double central = (fp - fm) / (2.0 * static_cast<double>(h));
      const double rel =
          std::abs(static_cast<double>(analytic[li][i]) - central) /
          (std::abs(central) + 1e-12);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace smoothnet
