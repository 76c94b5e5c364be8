#include "texanno/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "texanno/errors.hpp"

namespace texanno {

std::int64_t Polygon::twice_signed_area() const {
  std::int64_t sum = 0;
  const std::size_t n = vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = vertices[i];
    const Point& b = vertices[(i + 1) % n];
    sum += a.x * b.y - b.x * a.y;
  }
  return sum;
}

Rect Polygon::bounding_rect() const {
  if (vertices.empty()) return {};
  std::int64_t x0 = std::numeric_limits<std::int64_t>::max(), y0 = x0;
  std::int64_t x1 = std::numeric_limits<std::int64_t>::min(), y1 = x1;
  for (const Point& p : vertices) {
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  return {static_cast<int>(x0), static_cast<int>(y0), static_cast<int>(x1),
          static_cast<int>(y1)};
}

std::array<Point, 4> rect_corners(const Rect& r) {
  return {Point{r.x0, r.y0}, Point{r.x1, r.y0}, Point{r.x1, r.y1},
          Point{r.x0, r.y1}};
}

Polygon rect_polygon(const Rect& r) {
  const auto c = rect_corners(r);
  return Polygon{{c.begin(), c.end()}};
}

bool rects_overlap(const Rect& a, const Rect& b) {
  return std::max(a.x0, b.x0) < std::min(a.x1, b.x1) &&
         std::max(a.y0, b.y0) < std::min(a.y1, b.y1);
}

void AdjacencyMatrix::connect(std::size_t i, std::size_t j) {
  if (i == j) return;
  bits_[i * n_ + j] = 1;
  bits_[j * n_ + i] = 1;
}

AdjacencyMatrix build_adjacency(std::span<const Rect> regions) {
  AdjacencyMatrix adj(regions.size());
  for (std::size_t i = 0; i < regions.size(); ++i) {
    for (std::size_t j = i + 1; j < regions.size(); ++j) {
      if (rects_overlap(regions[i], regions[j])) adj.connect(i, j);
    }
  }
  return adj;
}

std::vector<std::vector<std::size_t>> connected_components(
    const AdjacencyMatrix& adj) {
  const std::size_t n = adj.size();
  std::vector<int> label(n, -1);
  std::vector<std::vector<std::size_t>> components;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (label[start] >= 0) continue;
    const int id = static_cast<int>(components.size());
    components.emplace_back();
    label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      components.back().push_back(v);
      for (std::size_t u = 0; u < n; ++u) {
        if (label[u] < 0 && adj(v, u)) {
          label[u] = id;
          stack.push_back(u);
        }
      }
    }
    std::sort(components.back().begin(), components.back().end());
  }
  return components;
}

Polygon convex_hull(std::vector<Point> points) {
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() < 3) {
    throw Error(ErrorCode::kDegenerateHull, "need three distinct points for a hull");
  }
  std::vector<Point> hull(2 * points.size());
  std::size_t k = 0;
  for (const Point& p : points) {
    while (k >= 2 && orientation(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = points.size() - 1; i-- > 0;) {
    while (k >= lower && orientation(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
    hull[k++] = points[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 3) {
    throw Error(ErrorCode::kDegenerateHull, "all points are collinear");
  }
  return Polygon{std::move(hull)};
}

bool convex_contains(const Polygon& hull, const Point& p) {
  const std::size_t n = hull.vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (orientation(hull.vertices[i], hull.vertices[(i + 1) % n], p) < 0) {
      return false;
    }
  }
  return n >= 3;
}

}  // namespace texanno
