#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "texanno/imaging.hpp"

namespace texanno {

struct Point {
  std::int64_t x = 0;
  std::int64_t y = 0;

  friend auto operator<=>(const Point&, const Point&) = default;
};

/// Twice the signed area of triangle (o, a, b); positive for a
/// counter-clockwise turn.
inline std::int64_t orientation(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Vertex list in counter-clockwise order (positive signed area). Hull outputs
// are strictly convex; instance outlines from the generator are only simple.
struct Polygon {
  std::vector<Point> vertices;

  std::int64_t twice_signed_area() const;
  Rect bounding_rect() const;

  friend bool operator==(const Polygon&, const Polygon&) = default;
};

/// Corners (x0,y0), (x1,y0), (x1,y1), (x0,y1) of a half-open rect, i.e. the
/// pixel-edge outline.
std::array<Point, 4> rect_corners(const Rect& r);
Polygon rect_polygon(const Rect& r);

/// True iff the intersection has positive area. Shared edges do not count.
bool rects_overlap(const Rect& a, const Rect& b);

// Symmetric boolean matrix with a false diagonal.
class AdjacencyMatrix {
 public:
  explicit AdjacencyMatrix(std::size_t n = 0) : n_(n), bits_(n * n, 0) {}

  std::size_t size() const { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void connect(std::size_t i, std::size_t j);

 private:
  std::size_t n_;
  std::vector<std::uint8_t> bits_;
};

AdjacencyMatrix build_adjacency(std::span<const Rect> regions);

/// Connected components as sorted index lists, ordered by smallest member.
std::vector<std::vector<std::size_t>> connected_components(
    const AdjacencyMatrix& adj);

/// Strictly convex CCW hull (Andrew's monotone chain, exact integer
/// arithmetic). Starts at the lowest (x, y) vertex. Throws kDegenerateHull
/// when fewer than three non-collinear points are given.
Polygon convex_hull(std::vector<Point> points);

/// Inside-or-on-boundary test for a CCW convex polygon.
bool convex_contains(const Polygon& hull, const Point& p);

}  // namespace texanno
