#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <vector>

#include "lanediff/errors.hpp"
#include "lanediff/graph.hpp"
#include "lanediff/grid.hpp"

namespace lanediff {

struct DirTag;
/// Three channels per pixel: (dx+1)/2, (dy+1)/2, 1 on lanes; zero elsewhere.
using DirectionMap = Grid2D<std::array<double, 3>, DirTag>;

/// Clamps every value into [0,1]. Non-finite values are rejected.
inline GrayRaster clamp01(GrayRaster r) {
  for (auto& v : r) {
    if (!std::isfinite(v)) throw ParameterError("raster contains a non-finite value");
    v = std::clamp(v, 0.0, 1.0);
  }
  return r;
}

inline GrayRaster to_gray(const BinaryMask& m) {
  GrayRaster out(m.width(), m.height());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 1.0 : 0.0;
  return out;
}

inline std::size_t count_true(const BinaryMask& m) {
  return static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](auto v) { return v != 0; }));
}

/// Pixel is set iff p >= alpha.
inline BinaryMask threshold(const GrayRaster& p, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("threshold alpha must lie in (0,1)");
  BinaryMask out(p.width(), p.height());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] >= alpha ? 1 : 0;
  return out;
}

namespace detail {

/// Calls visit(x, y, distance, edge_index) for every canvas pixel whose center
/// lies within half_width of an edge.
template <class Visit>
void for_each_pixel_near_edges(const LaneGraph& g, int w, int h, double half_width, Visit&& visit) {
  for (std::size_t ei = 0; ei < g.edges().size(); ++ei) {
    const auto& e = g.edges()[ei];
    const Point2 a = g.position(e.from);
    const Point2 b = g.position(e.to);
    const double lo_x = std::min(a.x, b.x) - half_width;
    const double hi_x = std::max(a.x, b.x) + half_width;
    const double lo_y = std::min(a.y, b.y) - half_width;
    const double hi_y = std::max(a.y, b.y) + half_width;
    if (hi_x < 0.0 || hi_y < 0.0 || lo_x > w - 1 || lo_y > h - 1) continue;
    const int x0 = std::max(0, static_cast<int>(std::ceil(lo_x)));
    const int x1 = std::min(w - 1, static_cast<int>(std::floor(hi_x)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(lo_y)));
    const int y1 = std::min(h - 1, static_cast<int>(std::floor(hi_y)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d = distance_to_segment({static_cast<double>(x), static_cast<double>(y)}, a, b);
        if (d <= half_width) visit(x, y, d, ei);
      }
    }
  }
}

}  // namespace detail

/// Lane mask: a pixel is set iff its center is within line_width_px/2 of an edge.
inline BinaryMask render_graph_mask(const LaneGraph& g, int canvas_w, int canvas_h, int line_width_px = 5) {
  if (line_width_px < 1) throw ParameterError("line width must be >= 1");
  BinaryMask out(canvas_w, canvas_h);
  detail::for_each_pixel_near_edges(g, canvas_w, canvas_h, line_width_px / 2.0,
                                    [&](int x, int y, double, std::size_t) { out(x, y) = 1; });
  return out;
}

/// Direction map using each edge's stored from->to orientation; the nearest
/// edge (first on ties) wins where lanes overlap.
inline DirectionMap render_direction_map(const LaneGraph& g, int canvas_w, int canvas_h, int line_width_px = 5) {
  if (line_width_px < 1) throw ParameterError("line width must be >= 1");
  DirectionMap out(canvas_w, canvas_h, {0.0, 0.0, 0.0});
  std::vector<double> best(out.size(), std::numeric_limits<double>::infinity());
  detail::for_each_pixel_near_edges(g, canvas_w, canvas_h, line_width_px / 2.0,
                                    [&](int x, int y, double d, std::size_t ei) {
                                      auto& slot = best[static_cast<std::size_t>(y) * canvas_w + x];
                                      if (d >= slot) return;
                                      const auto& e = g.edges()[ei];
                                      const Point2 v = g.position(e.to) - g.position(e.from);
                                      const double len = std::hypot(v.x, v.y);
                                      if (len == 0.0) return;
                                      slot = d;
                                      out(x, y) = {(v.x / len + 1.0) / 2.0, (v.y / len + 1.0) / 2.0, 1.0};
                                    });
  return out;
}

/// Inverse of the channel encoding: unit direction (dx, dy) of a lane pixel.
inline Point2 decode_direction(const std::array<double, 3>& c) { return {2.0 * c[0] - 1.0, 2.0 * c[1] - 1.0}; }

struct WindowOrigin {
  int x = 0;
  int y = 0;
  friend bool operator==(const WindowOrigin&, const WindowOrigin&) = default;
};

struct TileLayout {
  int tile_w = 0;
  int tile_h = 0;
  int window = 0;
  int stride = 0;
  /// Row-major: y outer, x inner.
  std::vector<WindowOrigin> origins;
};

namespace detail {

inline std::vector<int> axis_origins(int tile, int window, int stride) {
  std::vector<int> out;
  for (int o = 0;; o += stride) {
    if (o + window >= tile) {
      out.push_back(tile - window);
      break;
    }
    out.push_back(o);
  }
  return out;
}

}  // namespace detail

/// Sliding windows at multiples of `stride`; the last window on each axis is
/// clamped to end at the tile edge.
inline TileLayout window_plan(int tile_w, int tile_h, int window = 1024, int stride = 512) {
  if (window < 1 || stride < 1) throw ParameterError("window and stride must be >= 1");
  if (window > tile_w || window > tile_h) {
    throw ParameterError("window " + std::to_string(window) + " exceeds tile " + std::to_string(tile_w) + "x" +
                         std::to_string(tile_h));
  }
  TileLayout layout{tile_w, tile_h, window, stride, {}};
  const auto xs = detail::axis_origins(tile_w, window, stride);
  const auto ys = detail::axis_origins(tile_h, window, stride);
  for (int y : ys) {
    for (int x : xs) layout.origins.push_back({x, y});
  }
  return layout;
}

/// Sum/count accumulation for overlap averaging. Adding windows is associative
/// and commutative up to floating-point summation order.
class StitchAccumulator {
 public:
  explicit StitchAccumulator(const TileLayout& layout)
      : layout_(layout), sum_(layout.tile_w, layout.tile_h, 0.0), count_(layout.tile_w, layout.tile_h, 0) {}

  void add(WindowOrigin origin, const GrayRaster& r) {
    if (r.width() != layout_.window || r.height() != layout_.window) {
      throw ParameterError("window raster is " + std::to_string(r.width()) + "x" + std::to_string(r.height()) +
                           ", layout expects " + std::to_string(layout_.window));
    }
    if (origin.x < 0 || origin.y < 0 || origin.x + layout_.window > layout_.tile_w ||
        origin.y + layout_.window > layout_.tile_h) {
      throw ParameterError("window origin outside tile");
    }
    for (int y = 0; y < r.height(); ++y) {
      for (int x = 0; x < r.width(); ++x) {
        sum_(origin.x + x, origin.y + y) += r(x, y);
        count_(origin.x + x, origin.y + y) += 1;
      }
    }
  }

  /// Pixels never covered are 0.
  GrayRaster result() const {
    GrayRaster out(layout_.tile_w, layout_.tile_h);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = count_[i] ? sum_[i] / count_[i] : 0.0;
    return out;
  }

 private:
  struct SumTag;
  struct CountTag;
  TileLayout layout_;
  Grid2D<double, SumTag> sum_;
  Grid2D<int, CountTag> count_;
};

struct PlacedWindow {
  WindowOrigin origin;
  GrayRaster raster;
};

/// Each tile pixel becomes the mean of every window value covering it.
inline GrayRaster stitch_average(const std::vector<PlacedWindow>& windows, const TileLayout& layout) {
  StitchAccumulator acc(layout);
  for (const auto& w : windows) acc.add(w.origin, w.raster);
  return acc.result();
}

/// Bilinear resize with half-pixel centers and edge clamping.
template <class Tag>
Grid2D<double, Tag> resize_bilinear(const Grid2D<double, Tag>& r, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw ParameterError("resize target must be at least 1x1");
  if (r.empty()) throw ParameterError("cannot resize an empty raster");
  if (out_w == r.width() && out_h == r.height()) return r;
  Grid2D<double, Tag> out(out_w, out_h);
  const double sx = static_cast<double>(r.width()) / out_w;
  const double sy = static_cast<double>(r.height()) / out_h;
  const auto sample_axis = [](int dst, double scale, int n, int& i0, int& i1, double& f) {
    const double src = std::clamp((dst + 0.5) * scale - 0.5, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<int>(std::floor(src));
    i1 = std::min(i0 + 1, n - 1);
    f = src - i0;
  };
  for (int y = 0; y < out_h; ++y) {
    int y0, y1;
    double fy;
    sample_axis(y, sy, r.height(), y0, y1, fy);
    for (int x = 0; x < out_w; ++x) {
      int x0, x1;
      double fx;
      sample_axis(x, sx, r.width(), x0, x1, fx);
      const double top = r(x0, y0) + (r(x1, y0) - r(x0, y0)) * fx;
      const double bottom = r(x0, y1) + (r(x1, y1) - r(x0, y1)) * fx;
      out(x, y) = top + (bottom - top) * fy;
    }
  }
  return out;
}

struct MaskChangeStats {
  std::size_t white_to_black = 0;
  std::size_t black_to_white = 0;
  std::size_t abs_diff = 0;
  /// Percent of the source's white pixels that turned black (0 if none).
  double rel_white_to_black_pct = 0.0;
  /// Percent of the source's black pixels that turned white (0 if none).
  double rel_black_to_white_pct = 0.0;

  friend bool operator==(const MaskChangeStats&, const MaskChangeStats&) = default;
};

inline MaskChangeStats mask_change_stats(const BinaryMask& before, const BinaryMask& after) {
  require_same_shape(before, after, "mask_change_stats");
  MaskChangeStats s;
  std::size_t white = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const bool b = before[i] != 0;
    const bool a = after[i] != 0;
    white += b ? 1 : 0;
    if (b && !a) ++s.white_to_black;
    if (!b && a) ++s.black_to_white;
  }
  const std::size_t black = before.size() - white;
  s.abs_diff = s.white_to_black > s.black_to_white ? s.white_to_black - s.black_to_white
                                                   : s.black_to_white - s.white_to_black;
  s.rel_white_to_black_pct = white ? 100.0 * static_cast<double>(s.white_to_black) / static_cast<double>(white) : 0.0;
  s.rel_black_to_white_pct = black ? 100.0 * static_cast<double>(s.black_to_white) / static_cast<double>(black) : 0.0;
  return s;
}

}  // namespace lanediff
