#include "wmvqa/geometry.hpp"

#include <numbers>

namespace wmvqa {

Affine Affine::rotate_ccw_screen(double degrees, Vec2 center) {
  if (degrees == 0.0) return {};
  const double r = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(r), s = std::sin(r);
  // y points down, so a visually counterclockwise turn is a clockwise turn in
  // the math convention.
  const Affine rot{c, s, 0, -s, c, 0};
  return translate(center.x, center.y).then_after(rot).then_after(translate(-center.x, -center.y));
}

Bounds Path::control_bounds() const {
  Bounds b;
  for (const auto& c : contours)
    for (const auto& s : c) {
      b.add(s.from);
      b.add(s.to);
      if (s.quadratic) b.add(s.ctrl);
    }
  return b;
}

Bounds Path::tight_bounds() const {
  Bounds b;
  auto quad_at = [](const PathSegment& s, double t) {
    const double u = 1 - t;
    return (u * u) * s.from + (2 * u * t) * s.ctrl + (t * t) * s.to;
  };
  for (const auto& c : contours)
    for (const auto& s : c) {
      b.add(s.from);
      b.add(s.to);
      if (!s.quadratic) continue;
      const double dx = s.from.x - 2 * s.ctrl.x + s.to.x;
      const double dy = s.from.y - 2 * s.ctrl.y + s.to.y;
      if (dx != 0) {
        const double t = (s.from.x - s.ctrl.x) / dx;
        if (t > 0 && t < 1) b.add(quad_at(s, t));
      }
      if (dy != 0) {
        const double t = (s.from.y - s.ctrl.y) / dy;
        if (t > 0 && t < 1) b.add(quad_at(s, t));
      }
    }
  return b;
}

Path Path::transformed(const Affine& m) const {
  Path out;
  out.contours.reserve(contours.size());
  for (const auto& c : contours) {
    PathContour tc;
    tc.reserve(c.size());
    for (const auto& s : c) tc.push_back({m(s.from), m(s.ctrl), m(s.to), s.quadratic});
    out.contours.push_back(std::move(tc));
  }
  return out;
}

Path Path::rectangle(double x, double y, double w, double h) {
  const Vec2 a{x, y}, b{x + w, y}, c{x + w, y + h}, d{x, y + h};
  Path p;
  p.contours.push_back({{a, a, b, false}, {b, b, c, false}, {c, c, d, false}, {d, d, a, false}});
  return p;
}

}  // namespace wmvqa
