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

#include "smoothnet/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace smoothnet {

namespace {

constexpr char kMagic[8] = {'S', 'N', 'E', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

// The build targets little-endian hosts; serialize by memcpy of the
// in-memory representation.
template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T take(std::ifstream& in, const std::string& path) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw IoError(path + ": truncated checkpoint");
  }
  return v;
}

}  // namespace

const CheckpointRecord* Checkpoint::find(const std::string& name) const {
  for (const CheckpointRecord& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  put(out, ck.fingerprint);
  put(out, static_cast<std::uint32_t>(ck.records.size()));
  for (const CheckpointRecord& r : ck.records) {
    put(out, static_cast<std::uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put(out, static_cast<std::uint32_t>(r.shape.size()));
    std::size_t numel = 1;
    for (int d : r.shape) {
      if (d < 1) throw IoError("checkpoint record with nonpositive extent");
      put(out, static_cast<std::uint32_t>(d));
      numel *= static_cast<std::size_t>(d);
    }
    if (numel != r.values.size()) {
      throw IoError("checkpoint record '" + r.name + "' shape/payload mismatch");
    }
    out.write(reinterpret_cast<const char*>(r.values.data()),
              static_cast<std::streamsize>(r.values.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError(path + ": not a checkpoint (bad magic)");
  }
  const std::uint32_t version = take<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw IoError(path + ": unsupported checkpoint version " +
                  std::to_string(version));
  }
  Checkpoint ck;
  ck.fingerprint = take<std::uint64_t>(in, path);
  const std::uint32_t count = take<std::uint32_t>(in, path);
  ck.records.resize(count);
  for (CheckpointRecord& r : ck.records) {
    const std::uint32_t name_len = take<std::uint32_t>(in, path);
    r.name.resize(name_len);
    if (name_len > 0 && !in.read(r.name.data(), name_len)) {
      throw IoError(path + ": truncated checkpoint");
    }
    const std::uint32_t rank = take<std::uint32_t>(in, path);
    r.shape.resize(rank);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t extent = take<std::uint32_t>(in, path);
      if (extent == 0) throw IoError(path + ": zero extent in checkpoint");
      r.shape[d] = static_cast<int>(extent);
      numel *= extent;
    }
    r.values.resize(numel);
    if (numel > 0 &&
        !in.read(reinterpret_cast<char*>(r.values.data()),
                 static_cast<std::streamsize>(numel * sizeof(float)))) {
      throw IoError(path + ": truncated checkpoint");
    }
  }
  return ck;
}

void append_param_records(Checkpoint& ck,
                          const std::vector<Parameter<float>*>& params) {
  for (const Parameter<float>* p : params) {
    CheckpointRecord r;
    r.name = p->name;
    r.shape = p->tensor.shape();
    r.values.assign(p->tensor.data(), p->tensor.data() + p->tensor.numel());
    ck.records.push_back(std::move(r));
  }
}

void restore_params(const Checkpoint& ck, std::uint64_t expected_fingerprint,
                    const std::vector<Parameter<float>*>& params) {
  if (ck.fingerprint != expected_fingerprint) {
    throw IoError("checkpoint fingerprint mismatch: file was written by a "
                  "different architecture");
  }
  for (Parameter<float>* p : params) {
    const CheckpointRecord* r = ck.find(p->name);
    if (!r) throw IoError("checkpoint is missing parameter '" + p->name + "'");
    if (r->shape != p->tensor.shape()) {
      throw IoError("checkpoint parameter '" + p->name + "' has shape " +
                    shape_str(r->shape) + ", model expects " +
                    shape_str(p->tensor.shape()));
    }
    std::memcpy(p->tensor.data(), r->values.data(),
                r->values.size() * sizeof(float));
  }
}

}  // namespace smoothnet
