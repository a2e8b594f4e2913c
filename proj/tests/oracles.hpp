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

// Deliberately naive reference implementations used to verify the fast
// paths. Everything here is nested loops and double accumulation; nothing
// shares code with the library kernels it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <vector>

#include "smoothnet/pareto.hpp"
#include "smoothnet/tensor.hpp"

namespace oracles {

template <typename T>
smoothnet::Tensor<T> random_tensor(smoothnet::Shape shape, std::mt19937_64& rng,
                                   double lo = -1.0, double hi = 1.0) {
  smoothnet::Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    t[i] = static_cast<T>(dist(rng));
  }
  return t;
}

template <typename T>
smoothnet::Tensor<T> naive_matmul(const smoothnet::Tensor<T>& a,
                                  const smoothnet::Tensor<T>& b) {
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  smoothnet::Tensor<T> out({m, n});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        acc += static_cast<double>(a.at({i, p})) *
               static_cast<double>(b.at({p, j}));
      }
      out[static_cast<std::size_t>(i) * n + j] = static_cast<T>(acc);
    }
  }
  return out;
}

template <typename T>
smoothnet::Tensor<T> naive_conv2d(const smoothnet::Tensor<T>& x,
                                  const smoothnet::Tensor<T>& w,
                                  const smoothnet::Tensor<T>& b, int stride,
                                  int pad) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), width = x.dim(3);
  const int f = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (width + 2 * pad - kw) / stride + 1;
  smoothnet::Tensor<T> out({n, f, oh, ow});
  std::size_t o = 0;
  for (int ni = 0; ni < n; ++ni) {
    for (int fi = 0; fi < f; ++fi) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = static_cast<double>(b[static_cast<std::size_t>(fi)]);
          for (int ci = 0; ci < c; ++ci) {
            for (int ky = 0; ky < kh; ++ky) {
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride + ky - pad;
                const int ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= width) continue;
                acc += static_cast<double>(x.at({ni, ci, iy, ix})) *
                       static_cast<double>(w.at({fi, ci, ky, kx}));
              }
            }
          }
          out[o++] = static_cast<T>(acc);
        }
      }
    }
  }
  return out;
}

template <typename T>
smoothnet::Tensor<T> naive_maxpool(const smoothnet::Tensor<T>& x, int window,
                                   int stride, int pad) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = (h + 2 * pad - window) / stride + 1;
  const int ow = (w + 2 * pad - window) / stride + 1;
  smoothnet::Tensor<T> out({n, c, oh, ow});
  std::size_t o = 0;
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          for (int ky = 0; ky < window; ++ky) {
            for (int kx = 0; kx < window; ++kx) {
              const int iy = oy * stride + ky - pad;
              const int ix = ox * stride + kx - pad;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              best = std::max(best,
                              static_cast<double>(x.at({ni, ci, iy, ix})));
            }
          }
          out[o++] = static_cast<T>(best);
        }
      }
    }
  }
  return out;
}

template <typename T>
smoothnet::Tensor<T> naive_avgpool(const smoothnet::Tensor<T>& x, int window,
                                   int stride) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = (h - window) / stride + 1;
  const int ow = (w - window) / stride + 1;
  smoothnet::Tensor<T> out({n, c, oh, ow});
  std::size_t o = 0;
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int ky = 0; ky < window; ++ky) {
            for (int kx = 0; kx < window; ++kx) {
              acc += static_cast<double>(
                  x.at({ni, ci, oy * stride + ky, ox * stride + kx}));
            }
          }
          out[o++] = static_cast<T>(acc / (window * window));
        }
      }
    }
  }
  return out;
}

template <typename T>
smoothnet::Tensor<T> naive_adaptive_avgpool(const smoothnet::Tensor<T>& x,
                                            int out_h, int out_w) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  smoothnet::Tensor<T> out({n, c, out_h, out_w});
  std::size_t o = 0;
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
          const int y0 = oy * h / out_h, y1 = (oy + 1) * h / out_h;
          const int x0 = ox * w / out_w, x1 = (ox + 1) * w / out_w;
          double acc = 0.0;
          for (int iy = y0; iy < y1; ++iy) {
            for (int ix = x0; ix < x1; ++ix) {
              acc += static_cast<double>(x.at({ni, ci, iy, ix}));
            }
          }
          out[o++] = static_cast<T>(acc / ((y1 - y0) * (x1 - x0)));
        }
      }
    }
  }
  return out;
}

template <typename T>
smoothnet::Tensor<T> naive_group_norm(const smoothnet::Tensor<T>& x,
                                      const smoothnet::Tensor<T>& gamma,
                                      const smoothnet::Tensor<T>& beta,
                                      int groups, double eps) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int per = c / groups;
  smoothnet::Tensor<T> out(x.shape());
  for (int ni = 0; ni < n; ++ni) {
    for (int g = 0; g < groups; ++g) {
      double mean = 0.0;
      for (int ci = g * per; ci < (g + 1) * per; ++ci) {
        for (int iy = 0; iy < h; ++iy) {
          for (int ix = 0; ix < w; ++ix) {
            mean += static_cast<double>(x.at({ni, ci, iy, ix}));
          }
        }
      }
      const double count = static_cast<double>(per) * h * w;
      mean /= count;
      double var = 0.0;
      for (int ci = g * per; ci < (g + 1) * per; ++ci) {
        for (int iy = 0; iy < h; ++iy) {
          for (int ix = 0; ix < w; ++ix) {
            const double d = static_cast<double>(x.at({ni, ci, iy, ix})) - mean;
            var += d * d;
          }
        }
      }
      var /= count;
      const double inv = 1.0 / std::sqrt(var + eps);
      for (int ci = g * per; ci < (g + 1) * per; ++ci) {
        for (int iy = 0; iy < h; ++iy) {
          for (int ix = 0; ix < w; ++ix) {
            const std::size_t off =
                ((static_cast<std::size_t>(ni) * c + ci) * h + iy) * w + ix;
            const double xhat =
                (static_cast<double>(x.at({ni, ci, iy, ix})) - mean) * inv;
            out[off] = static_cast<T>(
                xhat * static_cast<double>(gamma[static_cast<std::size_t>(
                           ci)]) +
                static_cast<double>(beta[static_cast<std::size_t>(ci)]));
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
double naive_cross_entropy(const smoothnet::Tensor<T>& logits,
                           const std::vector<int>& labels) {
  const int n = logits.dim(0), k = logits.dim(1);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      mx = std::max(mx, static_cast<double>(logits.at({i, j})));
    }
    double z = 0.0;
    for (int j = 0; j < k; ++j) {
      z += std::exp(static_cast<double>(logits.at({i, j})) - mx);
    }
    total += std::log(z) + mx - static_cast<double>(logits.at({i, labels[i]}));
  }
  return total / n;
}

// Quadratic dominance scan; keeps a point exactly when nothing else is at
// least as good on both axes and strictly better on one.
inline std::vector<smoothnet::ParetoPoint> naive_pareto(
    const std::vector<smoothnet::ParetoPoint>& pts) {
  std::vector<smoothnet::ParetoPoint> front;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < pts.size() && !dominated; ++j) {
      if (j == i) continue;
      const bool no_worse = pts[j].epsilon <= pts[i].epsilon &&
                            pts[j].accuracy >= pts[i].accuracy;
      const bool better = pts[j].epsilon < pts[i].epsilon ||
                          pts[j].accuracy > pts[i].accuracy;
      if (no_worse && better) dominated = true;
    }
    if (!dominated) front.push_back(pts[i]);
  }
  std::sort(front.begin(), front.end(),
            [](const smoothnet::ParetoPoint& a,
               const smoothnet::ParetoPoint& b) { return a.epsilon < b.epsilon; });
  return front;
}

// Elementwise heavy-ball momentum with decoupled weight decay, in double.
struct ScalarSgd {
  double momentum;
  double weight_decay;
  std::vector<double> v;

  void step(std::vector<double>& w, const std::vector<double>& g, double lr) {
    if (v.empty()) v.assign(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      w[i] -= lr * v[i];
      w[i] -= lr * weight_decay * w[i];
    }
  }
};

}  // namespace oracles
