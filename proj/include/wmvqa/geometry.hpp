#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace wmvqa {

struct Vec2 {
  double x = 0, y = 0;
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

// Axis-aligned bounds; empty() until something is added.
struct Bounds {
  double x_min = std::numeric_limits<double>::infinity();
  double y_min = std::numeric_limits<double>::infinity();
  double x_max = -std::numeric_limits<double>::infinity();
  double y_max = -std::numeric_limits<double>::infinity();

  bool empty() const { return x_min > x_max || y_min > y_max; }
  double width() const { return empty() ? 0 : x_max - x_min; }
  double height() const { return empty() ? 0 : y_max - y_min; }
  void add(Vec2 p) {
    x_min = std::min(x_min, p.x);
    y_min = std::min(y_min, p.y);
    x_max = std::max(x_max, p.x);
    y_max = std::max(y_max, p.y);
  }
};

// x' = xx*x + xy*y + tx ; y' = yx*x + yy*y + ty
struct Affine {
  double xx = 1, xy = 0, tx = 0;
  double yx = 0, yy = 1, ty = 0;

  Vec2 operator()(Vec2 p) const { return {xx * p.x + xy * p.y + tx, yx * p.x + yy * p.y + ty}; }

  // this ∘ rhs (apply rhs first)
  Affine then_after(const Affine& rhs) const {
    return {xx * rhs.xx + xy * rhs.yx, xx * rhs.xy + xy * rhs.yy, xx * rhs.tx + xy * rhs.ty + tx,
            yx * rhs.xx + yy * rhs.yx, yx * rhs.xy + yy * rhs.yy, yx * rhs.tx + yy * rhs.ty + ty};
  }

  static Affine translate(double dx, double dy) { return {1, 0, dx, 0, 1, dy}; }
  static Affine scale(double sx, double sy) { return {sx, 0, 0, 0, sy, 0}; }
  // Counterclockwise on screen (y axis pointing down) about `center`.
  static Affine rotate_ccw_screen(double degrees, Vec2 center);
};

// Quadratic or straight segment of a glyph/shape outline.
struct PathSegment {
  Vec2 from, ctrl, to;
  bool quadratic = false;
};

using PathContour = std::vector<PathSegment>;

struct Path {
  std::vector<PathContour> contours;

  Bounds control_bounds() const;
  // Exact bounds of the curves (quadratic extrema included).
  Bounds tight_bounds() const;
  Path transformed(const Affine& m) const;
  void append(const Path& other) { contours.insert(contours.end(), other.contours.begin(), other.contours.end()); }
  static Path rectangle(double x, double y, double w, double h);
};

}  // namespace wmvqa
