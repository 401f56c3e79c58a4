// Copyright 2026 The LILAC Authors
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

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lilac/nn/tensor.hpp"

namespace lilac::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary checkpoint container, all integers and doubles little-endian:
//
//   "LILACCKP"            8-byte magic
//   u32 version           kCheckpointVersion
//   u64 n, n bytes        JSON header (config, policy type, conventions)
//   u32 count             number of tensors
//   per tensor:
//     u32 n, n bytes      name
//     u8                  trainable flag
//     u64 rows, u64 cols
//     rows*cols f64       column-major values
//
// Serializing a loaded checkpoint reproduces the input bytes exactly.
inline constexpr char kCheckpointMagic[8] = {'L', 'I', 'L', 'A', 'C', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  bool trainable = true;
  Matrix value;
};

struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<TensorRecord> tensors;

  const TensorRecord* find(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  const std::string header = ckpt.header.dump();
  detail::put<std::uint64_t>(out, header.size());
  out += header;
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    detail::put<std::uint8_t>(out, t.trainable ? 1 : 0);
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.rows()));
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.cols()));
    for (Eigen::Index i = 0; i < t.value.size(); ++i) detail::put<double>(out, t.value.data()[i]);
  }
  return out;
}

inline Checkpoint deserialize(const std::string& bytes) {
  detail::Reader in(bytes);
  if (in.take(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto header_len = in.get<std::uint64_t>();
  try {
    ckpt.header = nlohmann::json::parse(in.take(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord t;
    t.name = in.take(in.get<std::uint32_t>());
    t.trainable = in.get<std::uint8_t>() != 0;
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    t.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index k = 0; k < t.value.size(); ++k) t.value.data()[k] = in.get<double>();
    check_finite(t.value, t.name.c_str());
    ckpt.tensors.push_back(std::move(t));
  }
  if (!in.done()) throw CheckpointError("trailing bytes after checkpoint");
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  const std::string bytes = serialize(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

inline std::vector<TensorRecord> capture(const ConstParamList& params) {
  std::vector<TensorRecord> out;
  out.reserve(params.size());
  for (const Param* p : params) out.push_back({p->name, p->trainable, p->value});
  return out;
}

// Copies tensors into `params` by name; every param must be present with a
// matching shape.
inline void restore(const Checkpoint& ckpt, const ParamList& params) {
  for (Param* p : params) {
    const TensorRecord* t = ckpt.find(p->name);
    if (t == nullptr) throw CheckpointError("checkpoint missing tensor " + p->name);
    if (t->value.rows() != p->value.rows() || t->value.cols() != p->value.cols()) {
      throw CheckpointError("shape mismatch for " + p->name + ": checkpoint " +
                            shape_str(t->value.rows(), t->value.cols()) + " vs model " +
                            shape_str(p->value.rows(), p->value.cols()));
    }
    p->value = t->value;
    p->grad.setZero(p->value.rows(), p->value.cols());
  }
}

}  // namespace lilac::nn
