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

#include "clothpb/sim/raster.h"

#include <algorithm>
#include <array>
#include <cmath>

namespace clothpb::sim {
namespace {

// Fills pixel centres inside the triangle (a, b, c), given in pixel units
// where the centre of (row, col) is (col + 0.5, row + 0.5).
void FillTriangle(const Vec2& a, const Vec2& b, const Vec2& c, BinaryImage& image) {
  auto edge = [](const Vec2& p, const Vec2& q, double x, double y) {
    return (q.x() - p.x()) * (y - p.y()) - (q.y() - p.y()) * (x - p.x());
  };
  const double area = edge(a, b, c.x(), c.y());
  if (area == 0.0) return;
  const double min_x = std::min({a.x(), b.x(), c.x()});
  const double max_x = std::max({a.x(), b.x(), c.x()});
  const double min_y = std::min({a.y(), b.y(), c.y()});
  const double max_y = std::max({a.y(), b.y(), c.y()});
  const int col0 = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
  const int col1 = std::min(image.width - 1, static_cast<int>(std::ceil(max_x - 0.5)));
  const int row0 = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
  const int row1 = std::min(image.height - 1, static_cast<int>(std::ceil(max_y - 0.5)));
  const double sign = area > 0.0 ? 1.0 : -1.0;
  for (int row = row0; row <= row1; ++row) {
    const double y = row + 0.5;
    for (int col = col0; col <= col1; ++col) {
      const double x = col + 0.5;
      if (sign * edge(a, b, x, y) >= 0.0 && sign * edge(b, c, x, y) >= 0.0 &&
          sign * edge(c, a, x, y) >= 0.0) {
        image.at(row, col) = 1;
      }
    }
  }
}

}  // namespace

BinaryImage Rasterize(const ClothModel& cloth, const WorldState& state,
                      const Viewport& viewport) {
  BinaryImage image = BinaryImage::Blank(viewport.width, viewport.height);
  auto to_pixel = [&](const Vec2& p) {
    return Vec2((p.x() - viewport.x_min) / viewport.pitch,
                (viewport.y_max - p.y()) / viewport.pitch);
  };
  for (const std::array<int, 4>& cell : cloth.cells) {
    const Vec2 p0 = to_pixel(state.node_pos[cell[0]]);
    const Vec2 p1 = to_pixel(state.node_pos[cell[1]]);
    const Vec2 p2 = to_pixel(state.node_pos[cell[2]]);
    const Vec2 p3 = to_pixel(state.node_pos[cell[3]]);
    FillTriangle(p0, p1, p2, image);
    FillTriangle(p0, p2, p3, image);
  }
  return image;
}

}  // namespace clothpb::sim
