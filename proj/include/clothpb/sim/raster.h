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

#ifndef CLOTHPB_SIM_RASTER_H_
#define CLOTHPB_SIM_RASTER_H_

#include "clothpb/image.h"
#include "clothpb/sim/world.h"

namespace clothpb::sim {

// Orthographic camera looking at the sagittal plane. Pixel (row, col) covers
// x in [x_min + col*pitch, x_min + (col+1)*pitch) and
// y in (y_max - (row+1)*pitch, y_max - row*pitch].
struct Viewport {
  double x_min = -1.2;
  double y_max = 0.6;
  double pitch = 2.4 / kImageWidth;  // m per pixel
  int width = kImageWidth;
  int height = kImageHeight;

  double x_max() const { return x_min + pitch * width; }
  double y_min() const { return y_max - pitch * height; }
};

// Scan-fills every cloth cell (two triangles each); a pixel is foreground
// when its centre lies inside or on the boundary of a triangle.
BinaryImage Rasterize(const ClothModel& cloth, const WorldState& state,
                      const Viewport& viewport);

}  // namespace clothpb::sim

#endif  // CLOTHPB_SIM_RASTER_H_
