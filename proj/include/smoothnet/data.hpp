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

// Datasets, byte-record image IO, the synthetic generator, normalization,
// stratified splitting, and lot sampling.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "smoothnet/common.hpp"

namespace smoothnet {

struct Dataset {
  int channels = 0;
  int height = 0;
  int width = 0;
  int num_classes = 0;
  // [n, channels, height, width] row-major, one value per pixel. Fresh
  // from disk or the generator these lie in [0, 1]; normalization moves
  // them out of that range.
  std::vector<float> images;
  std::vector<int> labels;
  // Stable per-example ids assigned at load/generation time; splits carry
  // them along so disjointness can be audited.
  std::vector<int> source_ids;

  int size() const { return static_cast<int>(labels.size()); }
  std::size_t example_numel() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
};

// Byte-record image files: each record is one label byte followed by
// channels*height*width pixel bytes, channel-major. Pixels map to floats
// as byte / 255; writing rounds x * 255 to the nearest byte, so a
// read-write cycle reproduces the file exactly.
Dataset read_image_records(const std::string& path, int channels, int height,
                           int width);
// Throws IoError if any pixel lies outside [0, 1] (normalized data does
// not fit the byte format) or any label is outside [0, 255].
void write_image_records(const std::string& path, const Dataset& ds);

struct TrainTest {
  Dataset train;
  Dataset test;
};

// Standard CIFAR-10 binary layout: data_batch_1..5.bin plus test_batch.bin
// in `dir`, 10000 records of 3073 bytes each.
TrainTest load_cifar10(const std::string& dir);

// Class-conditioned synthetic images: class k draws an oriented soft ridge
// at angle pi*k/num_classes through a jittered center over low background
// noise. Learnable by a small CNN yet not linearly trivial. Ids are
// 0..n-1 in generation order.
Dataset make_synthetic(int num_classes, int per_class, int channels,
                       int height, int width, std::uint64_t seed);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

ChannelStats channel_stats(const Dataset& ds);
// x <- (x - mean[c]) / stddev[c]; near-constant channels divide by 1.
void normalize_inplace(Dataset& ds, const ChannelStats& stats);

// Stratified split: per class, floor(f * n_c) examples go to the second
// part, then classes with the largest fractional remainders round up until
// the second part holds exactly lround(f * N). Selection within a class is
// a seeded shuffle.
std::pair<Dataset, Dataset> split_train_val(const Dataset& ds,
                                            double val_fraction,
                                            std::uint64_t seed);

enum class SamplingMode { kPoisson, kShuffleFixed };

SamplingMode sampling_mode_from_string(const std::string& s);
std::string to_string(SamplingMode m);

// Per-epoch lot index stream. Poisson mode includes each example
// independently with probability lot_size / dataset_size (lots vary in
// size and may be empty); shuffle mode deals consecutive slices of a fresh
// permutation. Each epoch reseeds from (seed, epoch), so lot contents
// depend only on (seed, epoch, position), not on history.
class LotSampler {
 public:
  LotSampler(SamplingMode mode, int dataset_size, int lot_size,
             std::uint64_t seed);

  void start_epoch(int epoch);
  // Fills `indices` (ascending for Poisson, permutation order for shuffle)
  // and returns true, or returns false when the epoch's lots are done.
  bool next_lot(std::vector<int>& indices);

  int steps_per_epoch() const { return steps_per_epoch_; }
  double sampling_rate() const { return sampling_rate_; }

 private:
  SamplingMode mode_;
  int dataset_size_;
  int lot_size_;
  std::uint64_t seed_;
  int steps_per_epoch_;
  double sampling_rate_;
  std::mt19937_64 engine_;
  int lots_emitted_ = 0;
  std::vector<int> permutation_;
  bool epoch_started_ = false;
};

}  // namespace smoothnet
