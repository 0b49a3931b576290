#include <gtest/gtest.h>

#include <filesystem>

#include "lanediff/png_io.hpp"
#include "lanediff/raster.hpp"
#include "oracles.hpp"

using namespace lanediff;

namespace {

LaneGraph segment(Point2 a, Point2 b) {
  LaneGraph g;
  g.add_edge(g.add_node(a), g.add_node(b));
  return g;
}

GrayRaster constant(int w, int h, double v) { return GrayRaster(w, h, v); }

}  // namespace

TEST(Threshold, BoundaryIsInclusive) {
  EXPECT_EQ(count_true(threshold(constant(4, 3, 0.0), 0.5)), 0u);
  GrayRaster one(1, 1, 0.5);
  EXPECT_EQ(threshold(one, 0.5)(0, 0), 1);
  one(0, 0) = std::nextafter(0.5, 0.0);
  EXPECT_EQ(threshold(one, 0.5)(0, 0), 0);
  EXPECT_THROW(threshold(one, 0.0), ParameterError);
  EXPECT_THROW(threshold(one, 1.0), ParameterError);
}

TEST(Threshold, CheckerboardSurvives) {
  GrayRaster r(6, 5);
  BinaryMask expect(6, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x) {
      r(x, y) = (x + y) % 2;
      expect(x, y) = (x + y) % 2;
    }
  EXPECT_EQ(threshold(r, 0.5), expect);
}

TEST(RenderMask, HorizontalEdgeGivesFiveRowBand) {
  const BinaryMask m = render_graph_mask(segment({40, 50}, {60, 50}), 100, 100, 5);
  for (int y = 0; y < 100; ++y) EXPECT_EQ(m(50, y) != 0, y >= 48 && y <= 52) << "row " << y;
  // Full per-pixel distance oracle.
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x < 100; ++x) {
      const double dx = x < 40 ? 40 - x : (x > 60 ? x - 60 : 0);
      const bool inside = std::hypot(dx, y - 50.0) <= 2.5;
      ASSERT_EQ(m(x, y) != 0, inside) << x << "," << y;
    }
}

TEST(RenderMask, EmptyAndOffCanvas) {
  EXPECT_EQ(count_true(render_graph_mask(LaneGraph{}, 20, 20)), 0u);
  EXPECT_EQ(count_true(render_graph_mask(segment({-50, -50}, {-10, -30}), 20, 20)), 0u);
  EXPECT_EQ(count_true(render_graph_mask(segment({25, 5}, {80, 5}), 20, 20)), 0u);
  EXPECT_THROW(render_graph_mask(LaneGraph{}, 20, 20, 0), ParameterError);
}

TEST(RenderMask, EverySetPixelNearSomeSegment) {
  CounterRng rng(3, 3);
  for (int trial = 0; trial < 30; ++trial) {
    const LaneGraph g = oracle::random_graph(rng, static_cast<int>(rng.uniform_int(2, 8)), 3, 64.0, true);
    const int width = static_cast<int>(rng.uniform_int(1, 7));
    const BinaryMask m = threshold(to_gray(render_graph_mask(g, 64, 64, width)), 0.5);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        if (!m(x, y)) continue;
        double best = 1e9;
        for (const auto& e : g.edges())
          best = std::min(best, distance_to_segment({double(x), double(y)}, g.position(e.from), g.position(e.to)));
        ASSERT_LE(best, width / 2.0 + 0.71);
      }
  }
}

TEST(DirectionMap, EncodesUnitDirectionOfNearestEdge) {
  const DirectionMap px = render_direction_map(segment({10, 20}, {40, 20}), 50, 50);
  const Point2 d = decode_direction(px(25, 20));
  EXPECT_NEAR(d.x, 1.0, 1e-12);
  EXPECT_NEAR(d.y, 0.0, 1e-12);
  EXPECT_EQ(px(25, 20)[2], 1.0);
  EXPECT_EQ(px(25, 30), (std::array<double, 3>{0, 0, 0}));

  const DirectionMap ny = render_direction_map(segment({20, 40}, {20, 5}), 50, 50);
  const Point2 u = decode_direction(ny(20, 20));
  EXPECT_NEAR(u.x, 0.0, 1e-12);
  EXPECT_NEAR(u.y, -1.0, 1e-12);

  const DirectionMap empty = render_direction_map(LaneGraph{}, 8, 8);
  for (const auto& c : empty) EXPECT_EQ(c, (std::array<double, 3>{0, 0, 0}));

  CounterRng rng(8, 1);
  const LaneGraph g = oracle::random_graph(rng, 6, 2, 50.0, true);
  const DirectionMap any = render_direction_map(g, 50, 50);
  const BinaryMask mask = render_graph_mask(g, 50, 50);
  for (std::size_t i = 0; i < any.size(); ++i) {
    if (!mask[i]) {
      EXPECT_EQ(any[i], (std::array<double, 3>{0, 0, 0}));
      continue;
    }
    const Point2 v = decode_direction(any[i]);
    EXPECT_NEAR(std::hypot(v.x, v.y), 1.0, 1e-3);
  }
}

TEST(WindowPlan, LargeTileAndSmallCases) {
  const TileLayout big = window_plan(4096, 4096, 1024, 512);
  EXPECT_EQ(big.origins.size(), 49u);
  EXPECT_EQ(big.origins.back(), (WindowOrigin{3072, 3072}));
  EXPECT_EQ(window_plan(1024, 1024, 1024, 512).origins, (std::vector<WindowOrigin>{{0, 0}}));
  const TileLayout mid = window_plan(2048, 2048, 1024, 512);
  ASSERT_EQ(mid.origins.size(), 9u);
  EXPECT_EQ(mid.origins[1], (WindowOrigin{512, 0}));
  EXPECT_EQ(mid.origins[2], (WindowOrigin{1024, 0}));
  EXPECT_THROW(window_plan(512, 2048, 1024, 512), ParameterError);
  EXPECT_THROW(window_plan(2048, 2048, 1024, 0), ParameterError);
}

TEST(WindowPlan, CoversEveryPixelAndStaysInside) {
  CounterRng rng(4, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = static_cast<int>(rng.uniform_int(1, 90)), h = static_cast<int>(rng.uniform_int(1, 90));
    const int win = static_cast<int>(rng.uniform_int(1, std::min(w, h)));
    const int stride = static_cast<int>(rng.uniform_int(1, win));
    const TileLayout t = window_plan(w, h, win, stride);
    std::vector<int> cover(static_cast<std::size_t>(w) * h, 0);
    for (const auto& o : t.origins) {
      ASSERT_TRUE(o.x >= 0 && o.y >= 0 && o.x + win <= w && o.y + win <= h);
      ASSERT_TRUE(o.x % stride == 0 || o.x == w - win);
      for (int y = o.y; y < o.y + win; ++y)
        for (int x = o.x; x < o.x + win; ++x) cover[static_cast<std::size_t>(y) * w + x] = 1;
    }
    for (int c : cover) ASSERT_EQ(c, 1);
  }
}

TEST(Stitch, ConstantWindowsGiveConstantTile) {
  const TileLayout t = window_plan(40, 40, 16, 8);
  std::vector<PlacedWindow> ws;
  for (const auto& o : t.origins) ws.push_back({o, constant(16, 16, 0.7)});
  for (double v : stitch_average(ws, t)) EXPECT_NEAR(v, 0.7, 1e-15);
}

TEST(Stitch, HalfOverlapAveragesToOneHalf) {
  const TileLayout t = window_plan(12, 8, 8, 4);
  ASSERT_EQ(t.origins.size(), 2u);
  const GrayRaster out = stitch_average({{t.origins[0], constant(8, 8, 0.0)}, {t.origins[1], constant(8, 8, 1.0)}}, t);
  EXPECT_EQ(out(2, 3), 0.0);
  EXPECT_EQ(out(5, 3), 0.5);
  EXPECT_EQ(out(10, 3), 1.0);
}

TEST(Stitch, FourWayOverlapIsMeanOfFour) {
  const TileLayout t = window_plan(12, 12, 8, 4);
  ASSERT_EQ(t.origins.size(), 4u);
  const double vals[] = {0.1, 0.35, 0.6, 0.95};
  std::vector<PlacedWindow> ws;
  for (std::size_t i = 0; i < 4; ++i) ws.push_back({t.origins[i], constant(8, 8, vals[i])});
  const GrayRaster out = stitch_average(ws, t);
  for (int y = 4; y < 8; ++y)
    for (int x = 4; x < 8; ++x) EXPECT_NEAR(out(x, y), (0.1 + 0.35 + 0.6 + 0.95) / 4.0, 1e-12);
  // Duplicating a window does not change anything where only it contributes
  // and is idempotent for identical copies everywhere.
  std::vector<PlacedWindow> dup = ws;
  for (auto& w : dup) ws.push_back(w);
  const GrayRaster twice = stitch_average(ws, t);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(twice[i], out[i], 1e-15);
  EXPECT_THROW(stitch_average({{t.origins[0], constant(7, 8, 0)}}, t), ParameterError);
}

TEST(Resize, ConstantIdentityAndRamp) {
  for (double v : resize_bilinear(constant(5, 7, 0.3), 13, 2)) EXPECT_NEAR(v, 0.3, 1e-15);
  GrayRaster r(2, 2, std::vector<double>{0, 1, 0, 1});
  const GrayRaster up = resize_bilinear(r, 4, 2);
  for (int y = 0; y < 2; ++y) {
    EXPECT_DOUBLE_EQ(up(0, y), 0.0);
    EXPECT_DOUBLE_EQ(up(1, y), 0.25);
    EXPECT_DOUBLE_EQ(up(2, y), 0.75);
    EXPECT_DOUBLE_EQ(up(3, y), 1.0);
  }
  EXPECT_EQ(resize_bilinear(r, 2, 2), r);
  EXPECT_THROW(resize_bilinear(r, 0, 2), ParameterError);
}

TEST(Resize, StaysWithinInputRange) {
  CounterRng rng(2, 9);
  for (int trial = 0; trial < 30; ++trial) {
    GrayRaster r(static_cast<int>(rng.uniform_int(1, 20)), static_cast<int>(rng.uniform_int(1, 20)));
    for (auto& v : r) v = rng.uniform();
    const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
    for (double v : resize_bilinear(r, static_cast<int>(rng.uniform_int(1, 40)), static_cast<int>(rng.uniform_int(1, 40)))) {
      ASSERT_GE(v, *lo - 1e-15);
      ASSERT_LE(v, *hi + 1e-15);
    }
  }
}

TEST(MaskChangeStats, IdenticalAndFullFlip) {
  BinaryMask white(10, 10, 1), black(10, 10, 0);
  EXPECT_EQ(mask_change_stats(white, white), MaskChangeStats{});
  const auto s = mask_change_stats(white, black);
  EXPECT_EQ(s.white_to_black, 100u);
  EXPECT_EQ(s.black_to_white, 0u);
  EXPECT_EQ(s.abs_diff, 100u);
  EXPECT_EQ(s.rel_white_to_black_pct, 100.0);
  EXPECT_EQ(s.rel_black_to_white_pct, 0.0);
  EXPECT_THROW(mask_change_stats(white, BinaryMask(10, 9)), ParameterError);
}

TEST(MaskChangeStats, MatchesPixelLoopAndIsSymmetric) {
  CounterRng rng(6, 6);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = static_cast<int>(rng.uniform_int(1, 30)), h = static_cast<int>(rng.uniform_int(1, 30));
    BinaryMask a(w, h), b(w, h);
    const double pa = rng.uniform(), pb = rng.uniform();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        a(x, y) = rng.bernoulli(pa);
        b(x, y) = rng.bernoulli(pb);
      }
    std::size_t w2b = 0, b2w = 0, white = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        white += a(x, y);
        w2b += a(x, y) && !b(x, y);
        b2w += !a(x, y) && b(x, y);
      }
    const auto s = mask_change_stats(a, b);
    EXPECT_EQ(s.white_to_black, w2b);
    EXPECT_EQ(s.black_to_white, b2w);
    EXPECT_EQ(s.abs_diff, w2b > b2w ? w2b - b2w : b2w - w2b);
    EXPECT_EQ(s.rel_white_to_black_pct, white ? 100.0 * w2b / white : 0.0);
    EXPECT_EQ(mask_change_stats(b, a).black_to_white, s.white_to_black);
  }
}

TEST(Png, RoundTrips) {
  const auto dir = std::filesystem::temp_directory_path();
  GrayRaster r(7, 3);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<double>(i * 12) / 255.0;
  write_gray_png(r, (dir / "ld_gray.png").string());
  const GrayRaster back = read_gray_png((dir / "ld_gray.png").string());
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(back[i], r[i], 1e-12);

  const BinaryMask m = render_graph_mask(segment({1, 1}, {9, 6}), 12, 9);
  write_mask_png(m, (dir / "ld_mask.png").string());
  EXPECT_EQ(read_mask_png((dir / "ld_mask.png").string()), m);

  const DirectionMap d = render_direction_map(segment({1, 1}, {9, 6}), 12, 9);
  write_direction_png(d, (dir / "ld_dir.png").string());
  const DirectionMap dback = read_direction_png((dir / "ld_dir.png").string());
  for (std::size_t i = 0; i < d.size(); ++i)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(dback[i][c], d[i][c], 0.5 / 255.0 + 1e-12);

  EXPECT_THROW(read_gray_png((dir / "ld_missing.png").string()), ParseError);
}
