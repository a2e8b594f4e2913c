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

#include "smoothnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace smoothnet {

namespace {

std::vector<unsigned char> read_all_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
  if (size > 0 &&
      !in.read(reinterpret_cast<char*>(bytes.data()), size)) {
    throw IoError("short read on " + path);
  }
  return bytes;
}

void append_records(Dataset& ds, const std::vector<unsigned char>& bytes,
                    const std::string& path) {
  const std::size_t pixels = ds.example_numel();
  const std::size_t record = 1 + pixels;
  if (bytes.empty() || bytes.size() % record != 0) {
    throw IoError(path + ": size " + std::to_string(bytes.size()) +
                  " is not a positive multiple of the " +
                  std::to_string(record) + "-byte record");
  }
  const std::size_t count = bytes.size() / record;
  ds.images.reserve(ds.images.size() + count * pixels);
  ds.labels.reserve(ds.labels.size() + count);
  for (std::size_t r = 0; r < count; ++r) {
    const unsigned char* rec = bytes.data() + r * record;
    ds.labels.push_back(static_cast<int>(rec[0]));
    for (std::size_t i = 0; i < pixels; ++i) {
      ds.images.push_back(static_cast<float>(rec[1 + i]) / 255.0f);
    }
  }
}

void assign_ids_and_classes(Dataset& ds, int id_base) {
  ds.source_ids.resize(ds.labels.size());
  std::iota(ds.source_ids.begin(), ds.source_ids.end(), id_base);
  int mx = -1;
  for (int l : ds.labels) mx = std::max(mx, l);
  ds.num_classes = mx + 1;
}

Dataset empty_like(const Dataset& ds) {
  Dataset out;
  out.channels = ds.channels;
  out.height = ds.height;
  out.width = ds.width;
  out.num_classes = ds.num_classes;
  return out;
}

void append_example(Dataset& dst, const Dataset& src, int i) {
  const std::size_t pixels = src.example_numel();
  const float* px = src.images.data() + static_cast<std::size_t>(i) * pixels;
  dst.images.insert(dst.images.end(), px, px + pixels);
  dst.labels.push_back(src.labels[static_cast<std::size_t>(i)]);
  dst.source_ids.push_back(src.source_ids[static_cast<std::size_t>(i)]);
}

}  // namespace

Dataset read_image_records(const std::string& path, int channels, int height,
                           int width) {
  if (channels < 1 || height < 1 || width < 1) {
    throw ConfigError("record geometry must be positive");
  }
  Dataset ds;
  ds.channels = channels;
  ds.height = height;
  ds.width = width;
  append_records(ds, read_all_bytes(path), path);
  assign_ids_and_classes(ds, 0);
  return ds;
}

void write_image_records(const std::string& path, const Dataset& ds) {
  const std::size_t pixels = ds.example_numel();
  if (pixels == 0 || ds.images.size() != pixels * ds.labels.size()) {
    throw IoError("dataset geometry/buffer mismatch");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  std::vector<unsigned char> record(1 + pixels);
  for (std::size_t r = 0; r < ds.labels.size(); ++r) {
    const int label = ds.labels[r];
    if (label < 0 || label > 255) {
      throw IoError("label " + std::to_string(label) +
                    " does not fit a byte record");
    }
    record[0] = static_cast<unsigned char>(label);
    const float* px = ds.images.data() + r * pixels;
    for (std::size_t i = 0; i < pixels; ++i) {
      const float v = px[i];
      if (!(v >= 0.0f) || !(v <= 1.0f)) {
        throw IoError("pixel value " + std::to_string(v) +
                      " outside [0, 1]; normalized data cannot be written "
                      "to byte records");
      }
      record[1 + i] =
          static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(record.data()),
              static_cast<std::streamsize>(record.size()));
  }
  if (!out) throw IoError("short write on " + path);
}

TrainTest load_cifar10(const std::string& dir) {
  TrainTest tt;
  for (Dataset* ds : {&tt.train, &tt.test}) {
    ds->channels = 3;
    ds->height = 32;
    ds->width = 32;
  }
  for (int b = 1; b <= 5; ++b) {
    const std::string path = dir + "/data_batch_" + std::to_string(b) + ".bin";
    append_records(tt.train, read_all_bytes(path), path);
  }
  {
    const std::string path = dir + "/test_batch.bin";
    append_records(tt.test, read_all_bytes(path), path);
  }
  assign_ids_and_classes(tt.train, 0);
  assign_ids_and_classes(tt.test, tt.train.size());
  tt.train.num_classes = tt.test.num_classes =
      std::max(tt.train.num_classes, tt.test.num_classes);
  return tt;
}

Dataset make_synthetic(int num_classes, int per_class, int channels,
                       int height, int width, std::uint64_t seed) {
  if (num_classes < 2 || per_class < 1 || channels < 1 || height < 4 ||
      width < 4) {
    throw ConfigError("synthetic dataset parameters out of range");
  }
  Dataset ds;
  ds.channels = channels;
  ds.height = height;
  ds.width = width;
  ds.num_classes = num_classes;
  const std::size_t pixels = ds.example_numel();
  const int n = num_classes * per_class;
  ds.images.resize(static_cast<std::size_t>(n) * pixels);
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.source_ids.resize(static_cast<std::size_t>(n));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double ridge_width = 0.085 * std::min(height, width);
  const double jitter = std::min(height, width) / 6.0;

  int idx = 0;
  for (int k = 0; k < num_classes; ++k) {
    const double angle = 3.14159265358979323846 * k / num_classes;
    const double nx = -std::sin(angle);  // ridge normal
    const double ny = std::cos(angle);
    for (int e = 0; e < per_class; ++e, ++idx) {
      const double cx = (width - 1) / 2.0 + (unit(rng) * 2.0 - 1.0) * jitter;
      const double cy = (height - 1) / 2.0 + (unit(rng) * 2.0 - 1.0) * jitter;
      const double amp = 0.6 + 0.4 * unit(rng);
      float* img = ds.images.data() + static_cast<std::size_t>(idx) * pixels;
      for (int c = 0; c < channels; ++c) {
        const double cscale =
            channels == 1 ? 1.0 : 0.6 + 0.4 * c / (channels - 1);
        for (int y = 0; y < height; ++y) {
          for (int x = 0; x < width; ++x) {
            const double d = (x - cx) * nx + (y - cy) * ny;
            const double ridge =
                std::exp(-d * d / (2.0 * ridge_width * ridge_width));
            const double noise = 0.15 * unit(rng);
            const double v = noise + amp * cscale * ridge;
            img[(static_cast<std::size_t>(c) * height + y) * width + x] =
                static_cast<float>(std::min(1.0, std::max(0.0, v)));
          }
        }
      }
      ds.labels[static_cast<std::size_t>(idx)] = k;
      ds.source_ids[static_cast<std::size_t>(idx)] = idx;
    }
  }
  return ds;
}

ChannelStats channel_stats(const Dataset& ds) {
  if (ds.size() == 0) throw ConfigError("channel_stats: empty dataset");
  const int c = ds.channels;
  const std::size_t hw = static_cast<std::size_t>(ds.height) * ds.width;
  ChannelStats st;
  st.mean.assign(static_cast<std::size_t>(c), 0.0);
  st.stddev.assign(static_cast<std::size_t>(c), 0.0);
  const std::size_t n = ds.labels.size();
  for (std::size_t e = 0; e < n; ++e) {
    const float* img = ds.images.data() + e * ds.example_numel();
    for (int ch = 0; ch < c; ++ch) {
      const float* plane = img + static_cast<std::size_t>(ch) * hw;
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
      st.mean[static_cast<std::size_t>(ch)] += acc;
    }
  }
  const double denom = static_cast<double>(n) * static_cast<double>(hw);
  for (int ch = 0; ch < c; ++ch) st.mean[static_cast<std::size_t>(ch)] /= denom;
  for (std::size_t e = 0; e < n; ++e) {
    const float* img = ds.images.data() + e * ds.example_numel();
    for (int ch = 0; ch < c; ++ch) {
      const float* plane = img + static_cast<std::size_t>(ch) * hw;
      const double m = st.mean[static_cast<std::size_t>(ch)];
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = plane[i] - m;
        acc += d * d;
      }
      st.stddev[static_cast<std::size_t>(ch)] += acc;
    }
  }
  for (int ch = 0; ch < c; ++ch) {
    st.stddev[static_cast<std::size_t>(ch)] =
        std::sqrt(st.stddev[static_cast<std::size_t>(ch)] / denom);
  }
  return st;
}

void normalize_inplace(Dataset& ds, const ChannelStats& stats) {
  if (static_cast<int>(stats.mean.size()) != ds.channels ||
      static_cast<int>(stats.stddev.size()) != ds.channels) {
    throw ConfigError("normalize_inplace: stats channel count mismatch");
  }
  const std::size_t hw = static_cast<std::size_t>(ds.height) * ds.width;
  const std::size_t n = ds.labels.size();
  for (std::size_t e = 0; e < n; ++e) {
    float* img = ds.images.data() + e * ds.example_numel();
    for (int ch = 0; ch < ds.channels; ++ch) {
      const float m = static_cast<float>(stats.mean[static_cast<std::size_t>(ch)]);
      const double sd = stats.stddev[static_cast<std::size_t>(ch)];
      const float inv = static_cast<float>(1.0 / (sd < 1e-8 ? 1.0 : sd));
      float* plane = img + static_cast<std::size_t>(ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) plane[i] = (plane[i] - m) * inv;
    }
  }
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& ds,
                                            double val_fraction,
                                            std::uint64_t seed) {
  if (!(val_fraction >= 0.0) || !(val_fraction < 1.0)) {
    throw ConfigError("val fraction must lie in [0, 1)");
  }
  const int n = ds.size();
  if (n == 0) throw ConfigError("split_train_val: empty dataset");
  const int target =
      static_cast<int>(std::lround(val_fraction * static_cast<double>(n)));

  std::vector<std::vector<int>> per_class(
      static_cast<std::size_t>(std::max(ds.num_classes, 1)));
  for (int i = 0; i < n; ++i) {
    const int l = ds.labels[static_cast<std::size_t>(i)];
    if (l < 0 || l >= static_cast<int>(per_class.size())) {
      throw ConfigError("split_train_val: label outside [0, num_classes)");
    }
    per_class[static_cast<std::size_t>(l)].push_back(i);
  }
  std::mt19937_64 rng(seed);
  for (auto& cls : per_class) std::shuffle(cls.begin(), cls.end(), rng);

  // floor(f * n_c) per class, then largest remainders round up to hit the
  // exact total.
  std::vector<int> take(per_class.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  int allotted = 0;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const double ideal =
        val_fraction * static_cast<double>(per_class[c].size());
    take[c] = static_cast<int>(ideal);
    take[c] = std::min(take[c], static_cast<int>(per_class[c].size()));
    allotted += take[c];
    remainders.push_back({ideal - take[c], c});
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  for (const auto& [rem, c] : remainders) {
    if (allotted >= target) break;
    if (take[c] < static_cast<int>(per_class[c].size())) {
      ++take[c];
      ++allotted;
    }
  }
  if (allotted != target) {
    throw ConfigError("split_train_val: cannot reach the requested size");
  }

  std::vector<char> in_val(static_cast<std::size_t>(n), 0);
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    for (int j = 0; j < take[c]; ++j) {
      in_val[static_cast<std::size_t>(per_class[c][static_cast<std::size_t>(
          j)])] = 1;
    }
  }
  Dataset train = empty_like(ds), val = empty_like(ds);
  for (int i = 0; i < n; ++i) {
    append_example(in_val[static_cast<std::size_t>(i)] ? val : train, ds, i);
  }
  return {std::move(train), std::move(val)};
}

SamplingMode sampling_mode_from_string(const std::string& s) {
  if (s == "poisson") return SamplingMode::kPoisson;
  if (s == "shuffle") return SamplingMode::kShuffleFixed;
  throw ConfigError("unknown sampling mode '" + s +
                    "' (expected poisson|shuffle)");
}

std::string to_string(SamplingMode m) {
  return m == SamplingMode::kPoisson ? "poisson" : "shuffle";
}

LotSampler::LotSampler(SamplingMode mode, int dataset_size, int lot_size,
                       std::uint64_t seed)
    : mode_(mode), dataset_size_(dataset_size), lot_size_(lot_size),
      seed_(seed) {
  if (dataset_size < 1) throw ConfigError("sampler: empty dataset");
  if (lot_size < 1 || lot_size > dataset_size) {
    throw ConfigError("sampler: lot size must lie in [1, dataset size]");
  }
  steps_per_epoch_ = (dataset_size + lot_size - 1) / lot_size;
  sampling_rate_ =
      static_cast<double>(lot_size) / static_cast<double>(dataset_size);
}

void LotSampler::start_epoch(int epoch) {
  if (epoch < 0) throw ConfigError("sampler: negative epoch");
  engine_.seed(mix_seed(seed_, 0x4c4f54u /* lot stream */,
                        static_cast<std::uint64_t>(epoch)));
  lots_emitted_ = 0;
  epoch_started_ = true;
  if (mode_ == SamplingMode::kShuffleFixed) {
    permutation_.resize(static_cast<std::size_t>(dataset_size_));
    std::iota(permutation_.begin(), permutation_.end(), 0);
    std::shuffle(permutation_.begin(), permutation_.end(), engine_);
  }
}

bool LotSampler::next_lot(std::vector<int>& indices) {
  if (!epoch_started_) throw ConfigError("sampler: start_epoch not called");
  if (lots_emitted_ >= steps_per_epoch_) return false;
  indices.clear();
  if (mode_ == SamplingMode::kPoisson) {
    const double q = sampling_rate_;
    if (q >= 1.0) {
      indices.resize(static_cast<std::size_t>(dataset_size_));
      std::iota(indices.begin(), indices.end(), 0);
    } else {
      // Jump between included indices with geometric gaps: from position
      // j, the next inclusion is j + 1 + floor(log(U) / log(1 - q)).
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const double log1mq = std::log1p(-q);
      long long j = -1;
      while (true) {
        double u;
        do {
          u = unit(engine_);
        } while (u <= 0.0);
        j += 1 + static_cast<long long>(std::log(u) / log1mq);
        if (j >= dataset_size_) break;
        indices.push_back(static_cast<int>(j));
      }
    }
  } else {
    const int begin = lots_emitted_ * lot_size_;
    const int end = std::min(begin + lot_size_, dataset_size_);
    indices.assign(permutation_.begin() + begin, permutation_.begin() + end);
  }
  ++lots_emitted_;
  return true;
}

}  // namespace smoothnet
