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

#ifndef CLOTHPB_IMAGE_H_
#define CLOTHPB_IMAGE_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace clothpb {

inline constexpr int kImageWidth = 128;
inline constexpr int kImageHeight = 96;

// Row-major silhouette with pixels in {0, 1}; row 0 is the top of the view.
struct BinaryImage {
  int width = kImageWidth;
  int height = kImageHeight;
  std::vector<std::uint8_t> pixels =
      std::vector<std::uint8_t>(static_cast<std::size_t>(kImageWidth) * kImageHeight, 0);

  static BinaryImage Blank(int width, int height);

  std::uint8_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  std::uint8_t& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  int ForegroundCount() const;

  friend bool operator==(const BinaryImage&, const BinaryImage&) = default;
};

// Binary PGM (P5, maxval 255) with foreground stored as 255.
std::string EncodePgm(const BinaryImage& image);
BinaryImage DecodePgm(std::string_view bytes);
void WritePgm(const std::filesystem::path& path, const BinaryImage& image);
BinaryImage ReadPgm(const std::filesystem::path& path);

}  // namespace clothpb

#endif  // CLOTHPB_IMAGE_H_
