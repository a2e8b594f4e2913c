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

// Flat binary checkpoints. Layout, all integers little-endian:
//
//   8 bytes   magic "SNETCKPT"
//   u32       format version (1)
//   u64       architecture fingerprint
//   u32       record count
//   per record:
//     u32, bytes     name length, name
//     u32, u32 each  rank, extents
//     f32 each       payload, row-major
//
// Records hold the model parameters by name plus training-state extras
// ("velocity/<param>" and "run.state"); loading restores floats bitwise.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smoothnet/common.hpp"
#include "smoothnet/layers.hpp"
#include "smoothnet/tensor.hpp"

namespace smoothnet {

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::uint64_t fingerprint = 0;
  std::vector<CheckpointRecord> records;

  const CheckpointRecord* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
// Throws IoError on bad magic, unknown version, or truncation.
Checkpoint load_checkpoint(const std::string& path);

// Copies every model parameter into `ck.records` (appending), names as-is.
void append_param_records(Checkpoint& ck,
                          const std::vector<Parameter<float>*>& params);

// Restores parameters from a loaded checkpoint. Throws IoError when the
// fingerprint differs, a parameter's record is missing, or a shape
// disagrees.
void restore_params(const Checkpoint& ck, std::uint64_t expected_fingerprint,
                    const std::vector<Parameter<float>*>& params);

}  // namespace smoothnet
