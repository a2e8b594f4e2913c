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

// Layer objects: named parameters plus a forward rule. A Model is a flat
// sequence of layers; parameter traversal order is layer order, and within
// a layer the order each layer documents. That order is part of the
// checkpoint and DP-flattening contract, so it must stay stable.

#pragma once

#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "smoothnet/ops.hpp"
#include "smoothnet/tensor.hpp"

namespace smoothnet {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  // Fan counts drive initialization; conv fans include the kernel area.
  int fan_in = 0;
  int fan_out = 0;
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)). Draws are made in
// double then cast, so float and double models see the same stream. Zero
// fans (biases, norm affines) leave the tensor untouched.
template <typename T>
void xavier_glorot_init(Parameter<T>& p, std::mt19937_64& rng) {
  if (p.fan_in + p.fan_out <= 0) return;
  const double a = std::sqrt(6.0 / static_cast<double>(p.fan_in + p.fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (std::size_t i = 0; i < p.tensor.numel(); ++i) {
    p.tensor[i] = static_cast<T>(dist(rng));
  }
}

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) = 0;
  // Appends pointers to this layer's parameters in declaration order.
  virtual void collect(std::vector<Parameter<T>*>& /*out*/) {}
};

template <typename T>
class Conv2dLayer : public Layer<T> {
 public:
  Conv2dLayer(std::string name, int in_channels, int out_channels, int kernel,
              int stride = 1, int padding = 0)
      : stride_(stride), padding_(padding) {
    if (kernel < 1 || kernel % 2 == 0) {
      throw ShapeError("conv layer: kernel extent must be odd");
    }
    weight_.name = name + ".weight";
    weight_.tensor = Tensor<T>({out_channels, in_channels, kernel, kernel});
    weight_.fan_in = in_channels * kernel * kernel;
    weight_.fan_out = out_channels * kernel * kernel;
    bias_.name = name + ".bias";
    bias_.tensor = Tensor<T>({out_channels});
  }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) override {
    return conv2d(tape, x, weight_.tensor, bias_.tensor, stride_, padding_);
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Parameter<T> weight_, bias_;
  int stride_, padding_;
};

template <typename T>
class GroupNormLayer : public Layer<T> {
 public:
  GroupNormLayer(std::string name, int channels, int groups, T eps = T(1e-5))
      : groups_(groups), eps_(eps) {
    if (groups < 1 || channels % groups != 0) {
      throw ShapeError("group norm layer: " + std::to_string(channels) +
                       " channels not divisible by " + std::to_string(groups));
    }
    gamma_.name = name + ".gamma";
    gamma_.tensor = Tensor<T>::full({channels}, T(1));
    beta_.name = name + ".beta";
    beta_.tensor = Tensor<T>({channels});
  }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) override {
    return group_norm(tape, x, gamma_.tensor, beta_.tensor, groups_, eps_);
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

 private:
  Parameter<T> gamma_, beta_;
  int groups_;
  T eps_;
};

template <typename T>
class SeluLayer : public Layer<T> {
 public:
  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) override {
    return selu(tape, x);
  }
};

template <typename T>
class ReluLayer : public Layer<T> {
 public:
  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) override {
    return relu(tape, x);
  }
};

template <typename T>
class MaxPool2dLayer : public Layer<T> {
 public:
  MaxPool2dLayer(int window, int stride, int padding = 0)
      : window_(window), stride_(stride), padding_(padding) {}
  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) override {
    return maxpool2d(tape, x, window_, stride_, padding_);
  }

 private:
  int window_, stride_, padding_;
};

template <typename T>
class AvgPool2dLayer : public Layer<T> {
 public:
  AvgPool2dLayer(int window, int stride) : window_(window), stride_(stride) {}
  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) override {
    return avgpool2d(tape, x, window_, stride_);
  }

 private:
  int window_, stride_;
};

template <typename T>
class AdaptiveAvgPoolLayer : public Layer<T> {
 public:
  AdaptiveAvgPoolLayer(int out_h, int out_w) : out_h_(out_h), out_w_(out_w) {}
  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) override {
    return adaptive_avgpool(tape, x, out_h_, out_w_);
  }

 private:
  int out_h_, out_w_;
};

template <typename T>
class FlattenLayer : public Layer<T> {
 public:
  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) override {
    return flatten(tape, x);
  }
};

template <typename T>
class LinearLayer : public Layer<T> {
 public:
  LinearLayer(std::string name, int in_features, int out_features) {
    weight_.name = name + ".weight";
    weight_.tensor = Tensor<T>({in_features, out_features});
    weight_.fan_in = in_features;
    weight_.fan_out = out_features;
    bias_.name = name + ".bias";
    bias_.tensor = Tensor<T>({out_features});
  }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) override {
    return linear_forward(tape, x, weight_.tensor, bias_.tensor);
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Parameter<T> weight_, bias_;
};

// Dense growth block: the input passes through untouched and the block's
// fresh channels are appended, so every later block sees every earlier
// feature map. New channels: conv3x3(pad 1) -> group norm -> SELU, then an
// optional stride-1 3x3 max pool (pad 1) that smooths without shrinking.
template <typename T>
class SmoothBlock : public Layer<T> {
 public:
  SmoothBlock(std::string name, int in_channels, int growth, int norm_groups,
              bool max_pool)
      : conv_(name + ".conv", in_channels, growth, 3, 1, 1),
        norm_(name + ".norm", growth, norm_groups),
        max_pool_(max_pool) {}

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) override {
    Tensor<T> fresh = selu(tape, norm_.forward(tape, conv_.forward(tape, x)));
    if (max_pool_) fresh = maxpool2d(tape, fresh, 3, 1, 1);
    return concat_channels(tape, x, fresh);
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    conv_.collect(out);
    norm_.collect(out);
  }

 private:
  Conv2dLayer<T> conv_;
  GroupNormLayer<T> norm_;
  bool max_pool_;
};

// A straight-line stack of layers.
template <typename T>
class Model {
 public:
  void add(std::unique_ptr<Layer<T>> layer) {
    layers_.push_back(std::move(layer));
  }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) {
    Tensor<T> cur = x;
    for (auto& layer : layers_) cur = layer->forward(tape, cur);
    return cur;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& layer : layers_) layer->collect(out);
    return out;
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (Parameter<T>* p : parameters()) xavier_glorot_init(*p, rng);
  }

  std::size_t num_layers() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

template <typename T>
std::size_t count_params(Model<T>& model) {
  std::size_t total = 0;
  for (Parameter<T>* p : model.parameters()) total += p->tensor.numel();
  return total;
}

}  // namespace smoothnet
