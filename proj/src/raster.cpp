#include "wmvqa/raster.hpp"

#include <algorithm>
#include <cmath>

namespace wmvqa {

namespace {

struct Edge {
  double y_top, y_bottom;  // y_top < y_bottom
  double x_at_top, dxdy;
  int winding;
};

void add_line(std::vector<Edge>& edges, Vec2 a, Vec2 b) {
  if (a.y == b.y) return;
  const int dir = b.y > a.y ? 1 : -1;
  if (dir < 0) std::swap(a, b);
  edges.push_back({a.y, b.y, a.x, (b.x - a.x) / (b.y - a.y), dir});
}

void flatten(const Path& path, double tolerance, std::vector<Edge>& edges) {
  for (const auto& contour : path.contours)
    for (const auto& s : contour) {
      if (!s.quadratic) {
        add_line(edges, s.from, s.to);
        continue;
      }
      // Max deviation of an n-piece chord approximation is |p0 - 2c + p1| / (4 n^2).
      const Vec2 dd = s.from - 2.0 * s.ctrl + s.to;
      const double dev = std::hypot(dd.x, dd.y);
      const int n = std::clamp(static_cast<int>(std::ceil(std::sqrt(dev / (4.0 * tolerance)))), 1, 256);
      Vec2 prev = s.from;
      for (int i = 1; i <= n; ++i) {
        const double t = static_cast<double>(i) / n, u = 1.0 - t;
        const Vec2 p = i == n ? s.to : (u * u) * s.from + (2 * u * t) * s.ctrl + (t * t) * s.to;
        add_line(edges, prev, p);
        prev = p;
      }
    }
}

}  // namespace

Bounds CoverageMask::pixel_bounds(double threshold) const {
  Bounds b;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (values[static_cast<std::size_t>(y) * width + x] > threshold) {
        b.add({static_cast<double>(x0 + x), static_cast<double>(y0 + y)});
        b.add({static_cast<double>(x0 + x + 1), static_cast<double>(y0 + y + 1)});
      }
  return b;
}

long CoverageMask::count_above(double threshold) const {
  return std::count_if(values.begin(), values.end(), [&](double v) { return v > threshold; });
}

CoverageMask rasterize(const Path& path, int clip_w, int clip_h, double tolerance) {
  std::vector<Edge> edges;
  flatten(path, tolerance, edges);
  CoverageMask mask;
  if (edges.empty()) return mask;

  double min_x = edges[0].x_at_top, max_x = min_x, min_y = edges[0].y_top, max_y = edges[0].y_bottom;
  for (const auto& e : edges) {
    const double xb = e.x_at_top + e.dxdy * (e.y_bottom - e.y_top);
    min_x = std::min({min_x, e.x_at_top, xb});
    max_x = std::max({max_x, e.x_at_top, xb});
    min_y = std::min(min_y, e.y_top);
    max_y = std::max(max_y, e.y_bottom);
  }
  const int wx0 = std::clamp(static_cast<int>(std::floor(min_x)), 0, clip_w);
  const int wx1 = std::clamp(static_cast<int>(std::ceil(max_x)) + 1, 0, clip_w);
  const int wy0 = std::clamp(static_cast<int>(std::floor(min_y)), 0, clip_h);
  const int wy1 = std::clamp(static_cast<int>(std::ceil(max_y)), 0, clip_h);
  if (wx0 >= wx1 || wy0 >= wy1) return mask;

  mask.x0 = wx0;
  mask.y0 = wy0;
  mask.width = wx1 - wx0;
  mask.height = wy1 - wy0;
  mask.values.assign(static_cast<std::size_t>(mask.width) * mask.height, 0.0);

  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.y_top < b.y_top; });
  std::vector<const Edge*> active;
  std::size_t next = 0;
  std::vector<std::pair<double, int>> crossings;
  std::vector<double> acc(static_cast<std::size_t>(mask.width));

  for (int py = wy0; py < wy1; ++py) {
    while (next < edges.size() && edges[next].y_top < py + 1) active.push_back(&edges[next++]);
    std::erase_if(active, [&](const Edge* e) { return e->y_bottom <= py; });
    std::fill(acc.begin(), acc.end(), 0.0);

    for (int k = 0; k < kSubRows; ++k) {
      const double sy = py + (k + 0.5) / kSubRows;
      crossings.clear();
      for (const Edge* e : active)
        if (e->y_top <= sy && sy < e->y_bottom)
          crossings.emplace_back(e->x_at_top + (sy - e->y_top) * e->dxdy, e->winding);
      if (crossings.size() < 2) continue;
      std::sort(crossings.begin(), crossings.end());

      int winding = 0;
      for (std::size_t i = 0; i + 1 < crossings.size(); ++i) {
        winding += crossings[i].second;
        if (winding == 0) continue;
        const double xa = std::max(crossings[i].first, static_cast<double>(wx0));
        const double xb = std::min(crossings[i + 1].first, static_cast<double>(wx1));
        if (xb <= xa) continue;
        const int ia = static_cast<int>(std::floor(xa));
        const int ib = static_cast<int>(std::floor(xb));
        if (ia == ib) {
          acc[static_cast<std::size_t>(ia - wx0)] += xb - xa;
          continue;
        }
        acc[static_cast<std::size_t>(ia - wx0)] += (ia + 1) - xa;
        for (int x = ia + 1; x < ib; ++x) acc[static_cast<std::size_t>(x - wx0)] += 1.0;
        if (ib < wx1) acc[static_cast<std::size_t>(ib - wx0)] += xb - ib;
      }
    }
    double* row = &mask.values[static_cast<std::size_t>(py - wy0) * mask.width];
    for (int x = 0; x < mask.width; ++x) row[x] = std::min(1.0, acc[static_cast<std::size_t>(x)] / kSubRows);
  }
  return mask;
}

}  // namespace wmvqa
