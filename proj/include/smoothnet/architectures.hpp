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

// Model builders. Two families:
//   - SmoothNet: a dense-growth trunk of SmoothBlocks with a pooled feature
//     head and a small MLP classifier. The default config is the reference
//     network; the trainer's smoke preset shrinks the same shape.
//   - Study CNN: a plain convolutional net whose skip/norm/activation/pool
//     choices are swappable, for ablation sweeps.

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "smoothnet/common.hpp"
#include "smoothnet/layers.hpp"

namespace smoothnet {

struct SmoothNetStage {
  int num_blocks = 1;
  int growth = 32;
};

struct SmoothNetConfig {
  int in_channels = 3;
  int input_h = 32;
  int input_w = 32;
  int stem_channels = 704;
  std::vector<SmoothNetStage> stages = {{5, 32}, {5, 32}};
  int norm_groups = 8;
  // Stride-1 3x3 max pool on each block's fresh channels.
  bool block_max_pool = true;
  int head_features = 2048;
  std::vector<int> classifier_widths = {512, 128};
  int num_classes = 10;
};

inline SmoothNetConfig reference_smoothnet_config() { return {}; }

enum class SkipKind { kNone, kResidual, kDense };
enum class NormKind { kGroup8, kInstance, kLayer, kNone };
enum class ActKind { kSelu, kRelu };
enum class PoolKind { kMax, kAvg };

inline std::string to_string(SkipKind k) {
  switch (k) {
    case SkipKind::kNone: return "none";
    case SkipKind::kResidual: return "residual";
    case SkipKind::kDense: return "dense";
  }
  return "?";
}

inline std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::kGroup8: return "group8";
    case NormKind::kInstance: return "instance";
    case NormKind::kLayer: return "layer";
    case NormKind::kNone: return "none";
  }
  return "?";
}

inline std::string to_string(ActKind k) {
  return k == ActKind::kSelu ? "selu" : "relu";
}

inline std::string to_string(PoolKind k) {
  return k == PoolKind::kMax ? "max" : "avg";
}

inline SkipKind skip_from_string(const std::string& s) {
  if (s == "none") return SkipKind::kNone;
  if (s == "residual") return SkipKind::kResidual;
  if (s == "dense") return SkipKind::kDense;
  throw ConfigError("unknown skip kind '" + s +
                    "' (expected none|residual|dense)");
}

inline NormKind norm_from_string(const std::string& s) {
  if (s == "group8") return NormKind::kGroup8;
  if (s == "instance") return NormKind::kInstance;
  if (s == "layer") return NormKind::kLayer;
  if (s == "none") return NormKind::kNone;
  throw ConfigError("unknown norm kind '" + s +
                    "' (expected group8|instance|layer|none)");
}

inline ActKind act_from_string(const std::string& s) {
  if (s == "selu") return ActKind::kSelu;
  if (s == "relu") return ActKind::kRelu;
  throw ConfigError("unknown activation '" + s + "' (expected selu|relu)");
}

inline PoolKind pool_from_string(const std::string& s) {
  if (s == "max") return PoolKind::kMax;
  if (s == "avg") return PoolKind::kAvg;
  throw ConfigError("unknown pool kind '" + s + "' (expected max|avg)");
}

struct StudyCNNConfig {
  int in_channels = 3;
  int input_h = 32;
  int input_w = 32;
  int depth = 3;
  double width_multiplier = 1.0;
  SkipKind skip = SkipKind::kNone;
  NormKind norm = NormKind::kGroup8;
  ActKind act = ActKind::kSelu;
  PoolKind pool = PoolKind::kMax;
  int num_classes = 10;
};

// Rounds to the nearest multiple of 8, never below 8, so group-of-8 norm
// always divides the width.
inline int round8(double x) {
  const long r = std::lround(x / 8.0);
  return static_cast<int>(r < 1 ? 8 : 8 * r);
}

// Picks pooled output bins (h, w) with h*w*channels == features, h <= w,
// fitting inside the max_h x max_w feature map, preferring the pair nearest
// square. Empty when features is not reachable by pooling alone.
inline std::optional<std::pair<int, int>> head_pool_shape(int channels,
                                                          int features,
                                                          int max_h,
                                                          int max_w) {
  if (channels < 1 || features < 1 || features % channels != 0) {
    return std::nullopt;
  }
  const int q = features / channels;
  for (int h = static_cast<int>(std::sqrt(static_cast<double>(q))); h >= 1;
       --h) {
    if (q % h != 0) continue;
    const int w = q / h;
    if (h <= max_h && w <= max_w) return std::make_pair(h, w);
  }
  return std::nullopt;
}

template <typename T>
struct BuiltModel {
  Model<T> model;
  int peak_channels = 0;
  int total_blocks = 0;
  int head_features = 0;
  int classifier_linears = 0;
  // Head reached the feature budget with a 1x1 compression conv instead of
  // pooled bins.
  bool used_compress_head = false;
  // Hash of the structure and every parameter's name and shape; checkpoint
  // files carry it so weights are never restored into a different model.
  std::uint64_t fingerprint = 0;
};

namespace detail {

template <typename T>
std::uint64_t fingerprint_model(const std::string& tag, Model<T>& model) {
  std::uint64_t h = fnv1a64(tag);
  for (const Parameter<T>* p : model.parameters()) {
    h = fnv1a64(p->name, h);
    for (int d : p->tensor.shape()) {
      h = fnv1a64(&d, sizeof(d), h);
    }
  }
  return h;
}

template <typename T>
std::unique_ptr<Layer<T>> make_act(ActKind kind) {
  if (kind == ActKind::kSelu) return std::make_unique<SeluLayer<T>>();
  return std::make_unique<ReluLayer<T>>();
}

template <typename T>
std::unique_ptr<Layer<T>> make_norm(const std::string& name, NormKind kind,
                                    int channels) {
  switch (kind) {
    case NormKind::kGroup8:
      if (channels % 8 != 0) {
        throw ShapeError("group8 norm needs width divisible by 8, got " +
                         std::to_string(channels));
      }
      return std::make_unique<GroupNormLayer<T>>(name, channels, 8);
    case NormKind::kInstance:
      return std::make_unique<GroupNormLayer<T>>(name, channels, channels);
    case NormKind::kLayer:
      return std::make_unique<GroupNormLayer<T>>(name, channels, 1);
    case NormKind::kNone:
      return nullptr;
  }
  return nullptr;
}

}  // namespace detail

// One ablation-study stage: conv3x3 -> norm -> activation, combined with
// the input per the skip kind. Residual adds (through a 1x1 projection when
// widths differ, activation after the add); dense concatenates.
template <typename T>
class StudyBlock : public Layer<T> {
 public:
  StudyBlock(const std::string& name, int in_channels, int out_channels,
             SkipKind skip, NormKind norm, ActKind act)
      : conv_(name + ".conv", in_channels, out_channels, 3, 1, 1),
        norm_(detail::make_norm<T>(name + ".norm", norm, out_channels)),
        skip_(skip),
        act_(act) {
    if (skip == SkipKind::kResidual && in_channels != out_channels) {
      proj_ = std::make_unique<Conv2dLayer<T>>(name + ".proj", in_channels,
                                               out_channels, 1);
    }
  }

  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& x) override {
    Tensor<T> y = conv_.forward(tape, x);
    if (norm_) y = norm_->forward(tape, y);
    switch (skip_) {
      case SkipKind::kNone:
        return activate(tape, y);
      case SkipKind::kResidual: {
        Tensor<T> shortcut = proj_ ? proj_->forward(tape, x) : x;
        return activate(tape, add(tape, y, shortcut));
      }
      case SkipKind::kDense:
        return concat_channels(tape, x, activate(tape, y));
    }
    throw TapeError("unreachable skip kind");
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    conv_.collect(out);
    if (norm_) norm_->collect(out);
    if (proj_) proj_->collect(out);
  }

 private:
  Tensor<T> activate(Tape<T>* tape, const Tensor<T>& x) {
    return act_ == ActKind::kSelu ? selu(tape, x) : relu(tape, x);
  }

  Conv2dLayer<T> conv_;
  std::unique_ptr<Layer<T>> norm_;
  std::unique_ptr<Conv2dLayer<T>> proj_;
  SkipKind skip_;
  ActKind act_;
};

// Builds the dense-growth network. Spatial extent halves between stages
// (2x2 mean pool); the head pools the final feature map into exactly
// head_features values, falling back to a 1x1 compression conv when no bin
// shape fits, then a SELU MLP classifier.
template <typename T>
BuiltModel<T> build_smoothnet(const SmoothNetConfig& cfg) {
  if (cfg.in_channels < 1) throw ConfigError("smoothnet: in_channels < 1");
  if (cfg.input_h < 8 || cfg.input_w < 8) {
    throw ConfigError("smoothnet: input extent must be at least 8");
  }
  if (cfg.norm_groups < 1) throw ConfigError("smoothnet: norm_groups < 1");
  if (cfg.stem_channels < 1 || cfg.stem_channels % cfg.norm_groups != 0) {
    throw ConfigError("smoothnet: stem width must be a positive multiple of " +
                      std::to_string(cfg.norm_groups));
  }
  if (cfg.stages.empty()) throw ConfigError("smoothnet: no stages");
  for (const SmoothNetStage& st : cfg.stages) {
    if (st.num_blocks < 1) throw ConfigError("smoothnet: stage with no blocks");
    if (st.growth < 1 || st.growth % cfg.norm_groups != 0) {
      throw ConfigError("smoothnet: growth must be a positive multiple of " +
                        std::to_string(cfg.norm_groups));
    }
  }
  if (cfg.head_features < 1) throw ConfigError("smoothnet: head_features < 1");
  if (cfg.num_classes < 2) throw ConfigError("smoothnet: num_classes < 2");
  for (int w : cfg.classifier_widths) {
    if (w < 1) throw ConfigError("smoothnet: classifier width < 1");
  }

  BuiltModel<T> built;
  Model<T>& m = built.model;
  m.add(std::make_unique<Conv2dLayer<T>>("stem.conv", cfg.in_channels,
                                         cfg.stem_channels, 3, 1, 1));
  m.add(std::make_unique<GroupNormLayer<T>>("stem.norm", cfg.stem_channels,
                                            cfg.norm_groups));
  m.add(std::make_unique<SeluLayer<T>>());

  int ch = cfg.stem_channels;
  int h = cfg.input_h, w = cfg.input_w;
  for (std::size_t si = 0; si < cfg.stages.size(); ++si) {
    const SmoothNetStage& st = cfg.stages[si];
    for (int bi = 0; bi < st.num_blocks; ++bi) {
      const std::string name =
          "stage" + std::to_string(si) + ".block" + std::to_string(bi);
      m.add(std::make_unique<SmoothBlock<T>>(name, ch, st.growth,
                                             cfg.norm_groups,
                                             cfg.block_max_pool));
      ch += st.growth;
      ++built.total_blocks;
    }
    if (si + 1 < cfg.stages.size()) {
      if (h < 2 || w < 2) {
        throw ConfigError("smoothnet: feature map too small to pool between "
                          "stages");
      }
      m.add(std::make_unique<AvgPool2dLayer<T>>(2, 2));
      h /= 2;
      w /= 2;
    }
  }
  built.peak_channels = ch;

  const std::optional<std::pair<int, int>> bins =
      head_pool_shape(ch, cfg.head_features, h, w);
  if (bins) {
    m.add(std::make_unique<AdaptiveAvgPoolLayer<T>>(bins->first,
                                                    bins->second));
  } else {
    built.used_compress_head = true;
    m.add(std::make_unique<Conv2dLayer<T>>("head.compress", ch,
                                           cfg.head_features, 1));
    m.add(std::make_unique<SeluLayer<T>>());
    m.add(std::make_unique<AdaptiveAvgPoolLayer<T>>(1, 1));
  }
  built.head_features = cfg.head_features;
  m.add(std::make_unique<FlattenLayer<T>>());

  int features = cfg.head_features;
  for (std::size_t i = 0; i < cfg.classifier_widths.size(); ++i) {
    m.add(std::make_unique<LinearLayer<T>>("classifier.fc" + std::to_string(i),
                                           features, cfg.classifier_widths[i]));
    m.add(std::make_unique<SeluLayer<T>>());
    features = cfg.classifier_widths[i];
  }
  m.add(std::make_unique<LinearLayer<T>>("classifier.out", features,
                                         cfg.num_classes));
  built.classifier_linears =
      static_cast<int>(cfg.classifier_widths.size()) + 1;

  std::string tag = "smoothnet";
  tag += "|in=" + std::to_string(cfg.in_channels) + "x" +
         std::to_string(cfg.input_h) + "x" + std::to_string(cfg.input_w);
  tag += "|blockpool=" + std::to_string(cfg.block_max_pool ? 1 : 0);
  if (bins) {
    tag += "|bins=" + std::to_string(bins->first) + "x" +
           std::to_string(bins->second);
  } else {
    tag += "|compress";
  }
  built.fingerprint = detail::fingerprint_model(tag, m);
  return built;
}

// Builds the ablation-study CNN: a stem conv at width round8(32 * mult),
// then `depth` StudyBlocks at that width, each followed by a 2x2
// downsampling pool while the feature map is at least 8x8, then fixed
// 2x2-bin pooled features into a [256, 128] classifier.
template <typename T>
BuiltModel<T> build_study_cnn(const StudyCNNConfig& cfg) {
  if (cfg.in_channels < 1) throw ConfigError("study cnn: in_channels < 1");
  if (cfg.input_h < 8 || cfg.input_w < 8) {
    throw ConfigError("study cnn: input extent must be at least 8");
  }
  if (cfg.depth < 1) throw ConfigError("study cnn: depth < 1");
  if (cfg.width_multiplier <= 0.0) {
    throw ConfigError("study cnn: width_multiplier must be positive");
  }
  if (cfg.num_classes < 2) throw ConfigError("study cnn: num_classes < 2");

  const int w0 = round8(32.0 * cfg.width_multiplier);
  BuiltModel<T> built;
  Model<T>& m = built.model;

  m.add(std::make_unique<Conv2dLayer<T>>("stem.conv", cfg.in_channels, w0, 3,
                                         1, 1));
  if (auto norm = detail::make_norm<T>("stem.norm", cfg.norm, w0)) {
    m.add(std::move(norm));
  }
  m.add(detail::make_act<T>(cfg.act));

  int ch = w0;
  int h = cfg.input_h, w = cfg.input_w;
  for (int d = 0; d < cfg.depth; ++d) {
    const std::string name = "block" + std::to_string(d);
    m.add(std::make_unique<StudyBlock<T>>(name, ch, w0, cfg.skip, cfg.norm,
                                          cfg.act));
    ch = cfg.skip == SkipKind::kDense ? ch + w0 : w0;
    ++built.total_blocks;
    if (h >= 8 && w >= 8) {
      if (cfg.pool == PoolKind::kMax) {
        m.add(std::make_unique<MaxPool2dLayer<T>>(2, 2));
      } else {
        m.add(std::make_unique<AvgPool2dLayer<T>>(2, 2));
      }
      h /= 2;
      w /= 2;
    }
  }
  built.peak_channels = ch;

  if (h < 2 || w < 2) {
    throw ConfigError("study cnn: feature map shrank below the 2x2 head");
  }
  m.add(std::make_unique<AdaptiveAvgPoolLayer<T>>(2, 2));
  m.add(std::make_unique<FlattenLayer<T>>());
  built.head_features = 4 * ch;

  const std::vector<int> widths = {256, 128};
  int features = built.head_features;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    m.add(std::make_unique<LinearLayer<T>>("classifier.fc" + std::to_string(i),
                                           features, widths[i]));
    m.add(detail::make_act<T>(cfg.act));
    features = widths[i];
  }
  m.add(std::make_unique<LinearLayer<T>>("classifier.out", features,
                                         cfg.num_classes));
  built.classifier_linears = static_cast<int>(widths.size()) + 1;

  std::string tag = "study";
  tag += "|in=" + std::to_string(cfg.in_channels) + "x" +
         std::to_string(cfg.input_h) + "x" + std::to_string(cfg.input_w);
  tag += "|skip=" + to_string(cfg.skip) + "|norm=" + to_string(cfg.norm) +
         "|act=" + to_string(cfg.act) + "|pool=" + to_string(cfg.pool);
  built.fingerprint = detail::fingerprint_model(tag, m);
  return built;
}

}  // namespace smoothnet
