#pragma once

#include <vector>

#include "wmvqa/geometry.hpp"

namespace wmvqa {

// Per-pixel coverage in [0,1] over a window [x0, x0+width) x [y0, y0+height)
// of the image plane. Pixels outside the window have coverage 0.
struct CoverageMask {
  int x0 = 0, y0 = 0, width = 0, height = 0;
  std::vector<double> values;  // row-major, width*height

  double at(int x, int y) const {
    if (x < x0 || y < y0 || x >= x0 + width || y >= y0 + height) return 0.0;
    return values[static_cast<std::size_t>(y - y0) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x - x0)];
  }
  // Tight pixel bounds of coverage > threshold; empty Bounds if none.
  Bounds pixel_bounds(double threshold = 0.0) const;
  // Number of pixels with coverage > threshold.
  long count_above(double threshold) const;
};

// Vertical samples per pixel row. Horizontal coverage is computed exactly.
inline constexpr int kSubRows = 16;

// Nonzero-winding fill of `path` (pixel coordinates, y down), clipped to
// [0,clip_w) x [0,clip_h). Quadratic segments are flattened to within
// `tolerance` pixels.
CoverageMask rasterize(const Path& path, int clip_w, int clip_h, double tolerance = 0.05);

}  // namespace wmvqa
