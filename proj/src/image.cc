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

#include "clothpb/image.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "clothpb/error.h"

namespace clothpb {

BinaryImage BinaryImage::Blank(int width, int height) {
  BinaryImage image;
  image.width = width;
  image.height = height;
  image.pixels.assign(static_cast<std::size_t>(width) * height, 0);
  return image;
}

int BinaryImage::ForegroundCount() const {
  return static_cast<int>(std::count(pixels.begin(), pixels.end(), 1));
}

std::string EncodePgm(const BinaryImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + image.pixels.size());
  for (std::uint8_t p : image.pixels) out.push_back(p ? static_cast<char>(255) : 0);
  return out;
}

BinaryImage DecodePgm(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.substr(start, pos - start));
  };
  if (next_token() != "P5") throw Error(ErrorKind::kSchema, "not a binary PGM (P5)");
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw Error(ErrorKind::kSchema, "malformed PGM header");
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
    throw Error(ErrorKind::kSchema, "unsupported PGM geometry");
  }
  ++pos;  // single whitespace before the raster
  const std::size_t count = static_cast<std::size_t>(width) * height;
  if (bytes.size() < pos + count) throw Error(ErrorKind::kSchema, "truncated PGM raster");
  BinaryImage image = BinaryImage::Blank(width, height);
  for (std::size_t i = 0; i < count; ++i) {
    image.pixels[i] = static_cast<unsigned char>(bytes[pos + i]) * 2 > maxval ? 1 : 0;
  }
  return image;
}

void WritePgm(const std::filesystem::path& path, const BinaryImage& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const std::string bytes = EncodePgm(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

BinaryImage ReadPgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return DecodePgm(buffer.str());
}

}  // namespace clothpb
