// Copyright 2026 The clothpb Authors
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

#include "clothpb/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "clothpb/error.h"

namespace clothpb {
namespace {

constexpr char kMagic[8] = {'C', 'L', 'O', 'T', 'H', 'P', 'B', '\0'};

template <typename T>
void PutLe(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T Get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    Need(sizeof(U));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

  std::string_view Take(std::size_t n) {
    Need(n);
    std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void Need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw Error(ErrorKind::kSchema, "checkpoint truncated at byte " + std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor& ParameterSet::Set(const std::string& name, Tensor value) {
  return blocks_.insert_or_assign(name, std::move(value)).first->second;
}

Tensor& ParameterSet::Get(std::string_view name) {
  auto it = blocks_.find(name);
  if (it == blocks_.end()) {
    throw Error(ErrorKind::kSchema, "missing parameter block '" + std::string(name) + "'");
  }
  return it->second;
}

const Tensor& ParameterSet::Get(std::string_view name) const {
  auto it = blocks_.find(name);
  if (it == blocks_.end()) {
    throw Error(ErrorKind::kSchema, "missing parameter block '" + std::string(name) + "'");
  }
  return it->second;
}

bool ParameterSet::Contains(std::string_view name) const {
  return blocks_.find(name) != blocks_.end();
}

void ParameterSet::Merge(const ParameterSet& other, const std::string& prefix) {
  for (const auto& [name, tensor] : other) Set(prefix + name, tensor);
}

ParameterSet ParameterSet::Extract(std::string_view prefix) const {
  ParameterSet out;
  for (const auto& [name, tensor] : blocks_) {
    if (name.compare(0, prefix.size(), prefix) == 0) {
      out.Set(name.substr(prefix.size()), tensor);
    }
  }
  return out;
}

std::string SerializeParameters(const ParameterSet& params) {
  std::string out(kMagic, sizeof(kMagic));
  PutLe<std::uint32_t>(out, kCheckpointVersion);
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (int d : tensor.shape()) PutLe<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (double v : tensor.values()) PutLe<double>(out, v);
  }
  return out;
}

ParameterSet DeserializeParameters(std::string_view bytes) {
  Reader in(bytes);
  if (in.Take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw Error(ErrorKind::kSchema, "not a checkpoint (bad magic)");
  }
  const auto version = in.Get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::kSchema,
                "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = in.Get<std::uint32_t>();
  ParameterSet params;
  for (std::uint32_t b = 0; b < count; ++b) {
    const auto name_len = in.Get<std::uint32_t>();
    std::string name(in.Take(name_len));
    const auto rank = in.Get<std::uint32_t>();
    if (rank > 8) throw Error(ErrorKind::kSchema, "implausible rank in block " + name);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<int>(in.Get<std::uint64_t>()));
    }
    std::vector<double> values(ShapeSize(shape));
    for (double& v : values) v = in.Get<double>();
    params.Set(name, Tensor(std::move(shape), std::move(values)));
  }
  if (!in.done()) throw Error(ErrorKind::kSchema, "trailing bytes after checkpoint");
  return params;
}

void SaveCheckpoint(const std::filesystem::path& path,
                    const ParameterSet& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const std::string bytes = SerializeParameters(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

ParameterSet LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return DeserializeParameters(buffer.str());
}

std::uint64_t Fingerprint(const ParameterSet& params) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char c : SerializeParameters(params)) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

}  // namespace clothpb
