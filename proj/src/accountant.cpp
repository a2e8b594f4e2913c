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

#include "smoothnet/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace smoothnet {

namespace {

constexpr int kMaxOrder = 256;

void check_common(double q, double sigma, double delta) {
  if (!(q >= 0.0) || !(q <= 1.0)) {
    throw ConfigError("sampling rate must lie in [0, 1], got " +
                      std::to_string(q));
  }
  if (q > 0.0 && !(sigma > 0.0)) {
    throw NumericError("noise multiplier must be positive when sampling");
  }
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw ConfigError("delta must lie in (0, 1), got " + std::to_string(delta));
  }
}

double log_sum_exp(const std::vector<double>& xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
         std::lgamma(n - k + 1.0);
}

}  // namespace

std::vector<int> default_order_grid() {
  std::vector<int> orders;
  orders.reserve(kMaxOrder - 1);
  for (int a = 2; a <= kMaxOrder; ++a) orders.push_back(a);
  return orders;
}

double rdp_subsampled_gaussian(double q, double sigma, int alpha) {
  if (alpha < 2) {
    throw ConfigError("RDP order must be an integer >= 2, got " +
                      std::to_string(alpha));
  }
  if (!(q >= 0.0) || !(q <= 1.0)) {
    throw ConfigError("sampling rate must lie in [0, 1], got " +
                      std::to_string(q));
  }
  if (q == 0.0) return 0.0;
  if (!(sigma > 0.0)) {
    throw NumericError("noise multiplier must be positive when sampling");
  }
  const double s2 = 2.0 * sigma * sigma;
  if (q == 1.0) return static_cast<double>(alpha) / s2;

  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(alpha) + 1);
  for (int k = 0; k <= alpha; ++k) {
    const double kd = static_cast<double>(k);
    terms.push_back(log_binomial(alpha, k) + (alpha - k) * log_1mq +
                    kd * log_q + (kd * kd - kd) / s2);
  }
  return log_sum_exp(terms) / (alpha - 1);
}

double compose_rdp(double per_step_rdp, long long steps) {
  if (steps < 0) throw ConfigError("step count must be nonnegative");
  if (!(per_step_rdp >= 0.0)) {
    throw NumericError("per-step RDP must be nonnegative");
  }
  return per_step_rdp * static_cast<double>(steps);
}

EpsilonResult rdp_to_dp(const std::function<double(int)>& rdp_at, double delta,
                        const std::vector<int>& orders) {
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw ConfigError("delta must lie in (0, 1), got " + std::to_string(delta));
  }
  if (orders.empty()) throw ConfigError("order grid is empty");
  const double log_inv_delta = std::log(1.0 / delta);
  EpsilonResult best;
  best.epsilon = std::numeric_limits<double>::infinity();
  for (int alpha : orders) {
    if (alpha < 2) throw ConfigError("RDP order must be >= 2");
    const double eps = rdp_at(alpha) + log_inv_delta / (alpha - 1);
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.alpha = alpha;
    }
  }
  return best;
}

EpsilonResult compute_epsilon(const PrivacyParams& p,
                              const std::vector<int>& orders) {
  check_common(p.sampling_rate, p.sigma, p.delta);
  if (p.steps < 0) throw ConfigError("step count must be nonnegative");
  if (orders.empty()) throw ConfigError("order grid is empty");
  if (p.sampling_rate == 0.0 || p.steps == 0) {
    // Nothing is released; no privacy is spent at any order.
    return {0.0, orders.back()};
  }
  return rdp_to_dp(
      [&p](int alpha) {
        return compose_rdp(
            rdp_subsampled_gaussian(p.sampling_rate, p.sigma, alpha), p.steps);
      },
      p.delta, orders);
}

EpsilonResult compute_epsilon(const PrivacyParams& p) {
  return compute_epsilon(p, default_order_grid());
}

double calibrate_sigma(double target_epsilon, double sampling_rate,
                       long long steps, double delta) {
  if (!(target_epsilon > 0.0)) {
    throw ConfigError("target epsilon must be positive");
  }
  const std::vector<int> orders = default_order_grid();
  const auto eps_at = [&](double sigma) {
    PrivacyParams p;
    p.sampling_rate = sampling_rate;
    p.sigma = sigma;
    p.steps = steps;
    p.delta = delta;
    return compute_epsilon(p, orders).epsilon;
  };
  double lo = 0.3, hi = 100.0;
  if (eps_at(hi) > target_epsilon) {
    throw ConfigError("target epsilon " + std::to_string(target_epsilon) +
                      " unreachable even at noise multiplier 100");
  }
  if (eps_at(lo) <= target_epsilon) return lo;
  while (hi - lo > 1e-3) {
    const double mid = 0.5 * (lo + hi);
    if (eps_at(mid) <= target_epsilon) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace smoothnet
