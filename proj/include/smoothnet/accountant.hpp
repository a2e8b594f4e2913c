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

// Renyi differential privacy accounting for the subsampled Gaussian
// mechanism: per-step RDP at a grid of orders, linear composition over
// steps, and conversion to an (epsilon, delta) guarantee.

#pragma once

#include <functional>
#include <vector>

#include "smoothnet/common.hpp"

namespace smoothnet {

struct PrivacyParams {
  // Probability that any given sample joins a lot (lot size / dataset size).
  double sampling_rate = 0.0;
  // Noise standard deviation as a multiple of the clip norm.
  double sigma = 0.0;
  long long steps = 0;
  double delta = 1e-5;
};

// All integer orders 2..256. Integer orders keep the subsampled-Gaussian
// bound in closed binomial form, and past 256 the delta term's 1/(alpha-1)
// is below 2e-5 nats of slack, so a finer or wider grid does not move the
// reported epsilon at the tolerances this project certifies.
std::vector<int> default_order_grid();

// RDP of order alpha for one subsampled Gaussian step:
//   (1/(alpha-1)) * ln( sum_{k=0}^{alpha} C(alpha,k) (1-q)^(alpha-k) q^k
//                       * exp((k^2 - k) / (2 sigma^2)) )
// Evaluated in log space. q = 0 gives 0; q = 1 gives alpha/(2 sigma^2).
// Requires alpha >= 2, q in [0,1]; sigma > 0 unless q == 0.
double rdp_subsampled_gaussian(double q, double sigma, int alpha);

// RDP composes additively over steps.
double compose_rdp(double per_step_rdp, long long steps);

struct EpsilonResult {
  double epsilon = 0.0;
  // Order attaining the minimum (first such order in the grid).
  int alpha = 0;
};

// Converts an RDP curve to (epsilon, delta):
//   epsilon = min_alpha [ rdp(alpha) + ln(1/delta) / (alpha - 1) ].
EpsilonResult rdp_to_dp(const std::function<double(int)>& rdp_at, double delta,
                        const std::vector<int>& orders);

// End-to-end: per-step RDP, composed over p.steps, optimized over the
// grid. No sampling or no steps means nothing is ever released, so
// epsilon is exactly 0.
EpsilonResult compute_epsilon(const PrivacyParams& p,
                              const std::vector<int>& orders);
EpsilonResult compute_epsilon(const PrivacyParams& p);

// Smallest noise multiplier in [0.3, 100] whose epsilon meets
// target_epsilon, by bisection to width 1e-3, returning the conservative
// (upper) end. Throws ConfigError when even sigma = 100 cannot reach the
// target.
double calibrate_sigma(double target_epsilon, double sampling_rate,
                       long long steps, double delta);

}  // namespace smoothnet
