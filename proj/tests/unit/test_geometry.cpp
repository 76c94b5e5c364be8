#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "properties.hpp"
#include "support.hpp"
#include "texanno/errors.hpp"
#include "texanno/evaluation.hpp"
#include "texanno/geometry.hpp"

using namespace texanno;
using texanno::testing::random_rect;

namespace {

bool overlap_oracle(const Rect& a, const Rect& b) {
  // Count shared pixels directly on a small grid.
  for (int y = std::max(a.y0, b.y0); y < std::min(a.y1, b.y1); ++y)
    for (int x = std::max(a.x0, b.x0); x < std::min(a.x1, b.x1); ++x) return true;
  return false;
}

// Reachability closure, Floyd-Warshall style.
std::vector<std::vector<bool>> closure(const AdjacencyMatrix& adj) {
  const std::size_t n = adj.size();
  std::vector<std::vector<bool>> r(n, std::vector<bool>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) r[i][j] = i == j || adj(i, j);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (r[i][k] && r[k][j]) r[i][j] = true;
  return r;
}

}  // namespace

TEST(Overlap, Examples) {
  EXPECT_TRUE(rects_overlap({0, 0, 224, 224}, {200, 0, 424, 224}));
  EXPECT_FALSE(rects_overlap({0, 0, 224, 224}, {224, 0, 448, 224}));
  EXPECT_FALSE(rects_overlap({0, 0, 10, 10}, {10, 10, 20, 20}));
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto r = random_rect(rng, 500, 200);
    EXPECT_TRUE(rects_overlap(r, r));
  }
}

TEST(Overlap, MatchesPixelOracle) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 2000; ++i) {
    const auto a = random_rect(rng, 60, 30), b = random_rect(rng, 60, 30);
    ASSERT_EQ(rects_overlap(a, b), overlap_oracle(a, b));
    ASSERT_EQ(rects_overlap(a, b), rects_overlap(b, a));
  }
}

TEST(Adjacency, EmptyAndDisjoint) {
  EXPECT_EQ(build_adjacency({}).size(), 0u);
  const std::vector<Rect> two{{0, 0, 5, 5}, {10, 10, 20, 20}};
  const auto adj = build_adjacency(two);
  ASSERT_EQ(adj.size(), 2u);
  EXPECT_FALSE(adj(0, 1));
  EXPECT_FALSE(adj(1, 0));
  EXPECT_FALSE(adj(0, 0));
}

TEST(Adjacency, RandomMatchesDoubleLoop) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<Rect> rs;
    for (int i = 0; i < 20; ++i) rs.push_back(random_rect(rng, 300, 120));
    const auto adj = build_adjacency(rs);
    for (std::size_t i = 0; i < rs.size(); ++i)
      for (std::size_t j = 0; j < rs.size(); ++j)
        ASSERT_EQ(adj(i, j), i != j && overlap_oracle(rs[i], rs[j]));
  }
}

TEST(Components, Chain) {
  AdjacencyMatrix adj(4);
  adj.connect(0, 1);
  adj.connect(1, 2);
  const auto cc = connected_components(adj);
  ASSERT_EQ(cc.size(), 2u);
  EXPECT_EQ(cc[0], (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(cc[1], (std::vector<std::size_t>{3}));
}

TEST(Components, EmptyGraph) {
  const auto cc = connected_components(AdjacencyMatrix(5));
  ASSERT_EQ(cc.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(cc[i], (std::vector<std::size_t>{i}));
}

TEST(Components, RandomMatchesClosure) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 30; ++t) {
    std::vector<Rect> rs;
    for (int i = 0; i < 50; ++i) rs.push_back(random_rect(rng, 1000, 150));
    const auto adj = build_adjacency(rs);
    const auto reach = closure(adj);
    const auto cc = connected_components(adj);
    std::vector<int> comp(rs.size(), -1);
    std::size_t prev_min = 0;
    for (std::size_t c = 0; c < cc.size(); ++c) {
      ASSERT_TRUE(std::is_sorted(cc[c].begin(), cc[c].end()));
      if (c > 0) {
        ASSERT_GT(cc[c].front(), prev_min);
      }
      prev_min = cc[c].front();
      for (auto v : cc[c]) {
        ASSERT_EQ(comp[v], -1);
        comp[v] = static_cast<int>(c);
      }
    }
    for (std::size_t i = 0; i < rs.size(); ++i)
      for (std::size_t j = 0; j < rs.size(); ++j) ASSERT_EQ(comp[i] == comp[j], reach[i][j]);
  }
}

TEST(Hull, SingleRect) {
  const auto corners = rect_corners({2, 3, 7, 9});
  const auto hull = convex_hull({corners.begin(), corners.end()});
  EXPECT_EQ(hull.vertices, (std::vector<Point>{{2, 3}, {7, 3}, {7, 9}, {2, 9}}));
  EXPECT_EQ(hull, rect_polygon({2, 3, 7, 9}));
}

TEST(Hull, TwoOverlappingSquares) {
  std::vector<Point> pts;
  for (const auto& r : {Rect{0, 0, 2, 2}, Rect{1, 1, 3, 3}}) {
    const auto c = rect_corners(r);
    pts.insert(pts.end(), c.begin(), c.end());
  }
  const auto hull = convex_hull(pts);
  EXPECT_EQ(hull.vertices, (std::vector<Point>{{0, 0}, {2, 0}, {3, 1}, {3, 3}, {1, 3}, {0, 2}}));
}

TEST(Hull, InteriorPointsIgnored) {
  const auto base = rect_corners({0, 0, 10, 10});
  std::vector<Point> pts(base.begin(), base.end());
  const auto hull = convex_hull(pts);
  pts.push_back({5, 5});
  pts.push_back({1, 9});
  pts.push_back({0, 5});  // on an edge
  EXPECT_EQ(convex_hull(pts), hull);
}

TEST(Hull, Degenerate) {
  try {
    convex_hull({{0, 0}, {1, 1}, {2, 2}, {5, 5}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateHull);
  }
  EXPECT_THROW(convex_hull({{1, 1}, {1, 1}, {1, 1}}), Error);
}

TEST(Hull, RandomAgainstContainment) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> c(-50, 50);
  for (int t = 0; t < 200; ++t) {
    std::vector<Point> pts(20);
    for (auto& p : pts) p = {c(rng), c(rng)};
    const auto hull = convex_hull(pts);
    EXPECT_GT(hull.twice_signed_area(), 0);
    for (const auto& p : pts) ASSERT_TRUE(convex_contains(hull, p));
    const auto& v = hull.vertices;
    for (std::size_t i = 0; i < v.size(); ++i)
      ASSERT_GT(orientation(v[i], v[(i + 1) % v.size()], v[(i + 2) % v.size()]), 0);
    EXPECT_EQ(v.front(), *std::min_element(v.begin(), v.end()));
  }
}

TEST(Hull, RectRasterizesToItsPixels) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    const auto r = random_rect(rng, 40, 20);
    const auto corners = rect_corners(r);
    const auto mask = rasterize_hull(convex_hull({corners.begin(), corners.end()}), 40, 40);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) {
        const bool in = x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1;
        ASSERT_EQ(mask.bits[y * 40 + x] != 0, in);
      }
  }
}

TEST(Hull, ExtremePointOracle) {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 100; ++t) {
    std::vector<Point> pts;
    const int n = 1 + static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) {
      const auto c = rect_corners(random_rect(rng, 300, 120));
      pts.insert(pts.end(), c.begin(), c.end());
    }
    ASSERT_EQ(texanno::testing::check_hull_oracle(pts), "") << t;
  }
}
