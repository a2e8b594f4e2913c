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

// Differentially private SGD: per-sample gradients, L2 clipping, Gaussian
// noising of the lot sum, and the momentum + decoupled weight decay update.
// The privacy analysis for these mechanics lives in accountant.hpp.

#pragma once

#include <cmath>
#include <cstring>
#include <random>
#include <utility>
#include <vector>

#include "smoothnet/layers.hpp"
#include "smoothnet/ops.hpp"

namespace smoothnet {

template <typename T>
std::size_t flat_param_dim(const std::vector<Parameter<T>*>& params) {
  std::size_t dim = 0;
  for (const Parameter<T>* p : params) dim += p->tensor.numel();
  return dim;
}

// Concatenates the tape's gradients in parameter order into `out`
// (resized). Parameters the loss never touched contribute zeros.
template <typename T>
void flatten_grads(Tape<T>& tape, const std::vector<Parameter<T>*>& params,
                   std::vector<T>& out) {
  out.resize(flat_param_dim(params));
  std::size_t off = 0;
  for (Parameter<T>* p : params) {
    const Tensor<T> g = tape.grad(p->tensor);
    std::memcpy(out.data() + off, g.data(), g.numel() * sizeof(T));
    off += g.numel();
  }
}

// Copies sample i of a batched tensor, keeping a leading extent of 1.
template <typename T>
Tensor<T> take_sample(const Tensor<T>& batch, int i) {
  if (batch.rank() < 1 || i < 0 || i >= batch.dim(0)) {
    throw ShapeError("take_sample: index " + std::to_string(i) + " of " +
                     shape_str(batch.shape()));
  }
  Shape s = batch.shape();
  s[0] = 1;
  Tensor<T> out(s);
  const std::size_t stride = out.numel();
  std::memcpy(out.data(), batch.data() + static_cast<std::size_t>(i) * stride,
              stride * sizeof(T));
  return out;
}

template <typename T>
struct PerSampleGrads {
  // rows[i] is the flattened gradient of sample i's own loss (not divided
  // by the lot size); rows.size() == losses.size() == lot size.
  std::vector<std::vector<T>> rows;
  std::vector<T> losses;
};

// Reference per-sample path: one forward/backward per sample on a reused
// tape. Exact by construction; the cost is lot_size model passes.
template <typename T>
PerSampleGrads<T> per_sample_gradients(Model<T>& model, const Tensor<T>& inputs,
                                       const std::vector<int>& labels) {
  if (inputs.rank() < 2 ||
      static_cast<std::size_t>(inputs.dim(0)) != labels.size()) {
    throw ShapeError("per_sample_gradients: batch/label mismatch");
  }
  const int n = inputs.dim(0);
  const std::vector<Parameter<T>*> params = model.parameters();
  PerSampleGrads<T> out;
  out.rows.resize(static_cast<std::size_t>(n));
  out.losses.resize(static_cast<std::size_t>(n));
  Tape<T> tape;
  for (int i = 0; i < n; ++i) {
    tape.reset();
    for (Parameter<T>* p : params) {
      p->tensor.set_requires_grad(true);
      tape.watch(p->tensor);
    }
    const Tensor<T> x = take_sample(inputs, i);
    const Tensor<T> logits = model.forward(&tape, x);
    const Tensor<T> loss =
        cross_entropy(&tape, logits, {labels[static_cast<std::size_t>(i)]});
    tape.backward(loss);
    out.losses[static_cast<std::size_t>(i)] = loss.value();
    flatten_grads(tape, params, out.rows[static_cast<std::size_t>(i)]);
  }
  return out;
}

// Non-private path: gradient of the mean loss over the whole batch in one
// pass. Returns the flat gradient and the loss.
template <typename T>
std::pair<std::vector<T>, T> batch_gradient(Model<T>& model,
                                            const Tensor<T>& inputs,
                                            const std::vector<int>& labels) {
  const std::vector<Parameter<T>*> params = model.parameters();
  Tape<T> tape;
  for (Parameter<T>* p : params) {
    p->tensor.set_requires_grad(true);
    tape.watch(p->tensor);
  }
  const Tensor<T> logits = model.forward(&tape, inputs);
  const Tensor<T> loss = cross_entropy(&tape, logits, labels);
  tape.backward(loss);
  std::vector<T> grad;
  flatten_grads(tape, params, grad);
  return {std::move(grad), loss.value()};
}

// Accumulates in double so long rows lose no precision.
template <typename T>
double l2_norm(const std::vector<T>& v) {
  double acc = 0.0;
  for (const T x : v) {
    const double d = static_cast<double>(x);
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Scales each row to norm at most `clip`: g * min(1, clip / |g|).
// Rows already inside the ball are left bit-for-bit untouched.
template <typename T>
void clip_per_sample(PerSampleGrads<T>& grads, T clip) {
  if (!(clip > T(0))) throw ConfigError("clip norm must be positive");
  for (std::vector<T>& row : grads.rows) {
    const double norm = l2_norm(row);
    if (norm <= static_cast<double>(clip)) continue;
    const double f = static_cast<double>(clip) / norm;
    for (T& x : row) x = static_cast<T>(static_cast<double>(x) * f);
  }
}

// Sums the clipped rows in index order, adds N(0, (sigma*clip)^2) to every
// coordinate, and divides by the expected lot size. The noise scale is
// what the accountant analyzes; lot_size must be the sampler's expected
// lot, not the realized one. sigma == 0 draws nothing from the generator.
template <typename T>
std::vector<T> noisy_aggregate(const PerSampleGrads<T>& grads,
                               std::size_t dim, T clip, T sigma, T lot_size,
                               std::mt19937_64& rng) {
  if (!(lot_size > T(0))) throw ConfigError("lot size must be positive");
  std::vector<double> acc(dim, 0.0);
  for (const std::vector<T>& row : grads.rows) {
    if (row.size() != dim) {
      throw ShapeError("noisy_aggregate: row dim mismatch");
    }
    for (std::size_t i = 0; i < dim; ++i) {
      acc[i] += static_cast<double>(row[i]);
    }
  }
  if (sigma > T(0)) {
    std::normal_distribution<double> noise(
        0.0, static_cast<double>(sigma) * static_cast<double>(clip));
    for (std::size_t i = 0; i < dim; ++i) acc[i] += noise(rng);
  } else if (sigma < T(0)) {
    throw ConfigError("noise multiplier must be nonnegative");
  }
  std::vector<T> out(dim);
  const double inv = 1.0 / static_cast<double>(lot_size);
  for (std::size_t i = 0; i < dim; ++i) {
    out[i] = static_cast<T>(acc[i] * inv);
  }
  return out;
}

template <typename T>
struct OptimizerState {
  T momentum = T(0.9);
  T weight_decay = T(0.0002);
  std::vector<T> velocity;
};

// Heavy-ball momentum with decoupled weight decay:
//   v <- momentum * v + g
//   w <- w - lr * v
//   w <- w - lr * weight_decay * w
// Decay multiplies the weights after the gradient step, so it never enters
// the velocity or the clipped gradient.
template <typename T>
void dp_sgd_step(const std::vector<Parameter<T>*>& params,
                 const std::vector<T>& grad, OptimizerState<T>& opt, T lr) {
  const std::size_t dim = flat_param_dim(params);
  if (grad.size() != dim) {
    throw ShapeError("dp_sgd_step: gradient dim " +
                     std::to_string(grad.size()) + " for " +
                     std::to_string(dim) + " parameters");
  }
  if (opt.velocity.empty()) opt.velocity.assign(dim, T(0));
  if (opt.velocity.size() != dim) {
    throw ShapeError("dp_sgd_step: velocity dim mismatch");
  }
  const T decay_mult = T(1) - lr * opt.weight_decay;
  std::size_t off = 0;
  for (Parameter<T>* p : params) {
    Tensor<T>& w = p->tensor;
    const std::size_t n = w.numel();
    for (std::size_t i = 0; i < n; ++i) {
      T& v = opt.velocity[off + i];
      v = opt.momentum * v + grad[off + i];
      w[i] = (w[i] - lr * v) * decay_mult;
      if (!std::isfinite(static_cast<double>(w[i]))) {
        throw NumericError("dp_sgd_step produced a non-finite weight in " +
                           p->name);
      }
    }
    off += n;
  }
}

enum class LrScheduleKind { kPerEpochExponential, kStepEveryK };

struct LrSchedule {
  LrScheduleKind kind = LrScheduleKind::kPerEpochExponential;
  double initial = 0.1;
  double gamma = 1.0;
  // Epochs per decay step for kStepEveryK; ignored otherwise.
  int step_every = 1;
};

inline double lr_at(const LrSchedule& s, int epoch) {
  if (epoch < 0) throw ConfigError("lr_at: negative epoch");
  if (!(s.initial > 0.0)) throw ConfigError("lr schedule: initial lr <= 0");
  if (!(s.gamma > 0.0)) throw ConfigError("lr schedule: gamma <= 0");
  int decays = 0;
  switch (s.kind) {
    case LrScheduleKind::kPerEpochExponential:
      decays = epoch;
      break;
    case LrScheduleKind::kStepEveryK:
      if (s.step_every < 1) throw ConfigError("lr schedule: step_every < 1");
      decays = epoch / s.step_every;
      break;
  }
  // Repeated multiplication, not pow(): every run derives the same epoch's
  // rate this way, so schedules stay bitwise reproducible across resumes.
  double lr = s.initial;
  for (int i = 0; i < decays; ++i) lr *= s.gamma;
  return lr;
}

}  // namespace smoothnet
