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

// Named parameter blocks and their binary checkpoint container.
//
// Layout (all integers little-endian):
//   magic    8 bytes  "CLOTHPB\0"
//   version  u32
//   count    u32
//   count x { name_len u32, name bytes, rank u32, dims u64[rank],
//             values f64[prod(dims)] }

#ifndef CLOTHPB_CHECKPOINT_H_
#define CLOTHPB_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "clothpb/tensor.h"

namespace clothpb {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class ParameterSet {
 public:
  using Map = std::map<std::string, Tensor, std::less<>>;

  Tensor& Set(const std::string& name, Tensor value);
  Tensor& Get(std::string_view name);
  const Tensor& Get(std::string_view name) const;
  bool Contains(std::string_view name) const;
  std::size_t size() const { return blocks_.size(); }

  Map::iterator begin() { return blocks_.begin(); }
  Map::iterator end() { return blocks_.end(); }
  Map::const_iterator begin() const { return blocks_.begin(); }
  Map::const_iterator end() const { return blocks_.end(); }

  // Copies every block of `other` under `prefix` + name.
  void Merge(const ParameterSet& other, const std::string& prefix = "");
  // Blocks whose names start with `prefix`, with the prefix stripped.
  ParameterSet Extract(std::string_view prefix) const;

 private:
  Map blocks_;
};

std::string SerializeParameters(const ParameterSet& params);
ParameterSet DeserializeParameters(std::string_view bytes);

void SaveCheckpoint(const std::filesystem::path& path,
                    const ParameterSet& params);
ParameterSet LoadCheckpoint(const std::filesystem::path& path);

// FNV-1a over the serialized container; equal iff byte-identical (up to hash
// collisions).
std::uint64_t Fingerprint(const ParameterSet& params);

}  // namespace clothpb

#endif  // CLOTHPB_CHECKPOINT_H_
