#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "lanediff/errors.hpp"
#include "lanediff/graph.hpp"
#include "lanediff/raster.hpp"
#include "lanediff/rng.hpp"
#include "lanediff/toy_denoiser.hpp"

namespace lanediff {

struct SceneParams {
  int canvas_w = 512;
  int canvas_h = 512;
  int min_lanes = 2;
  int max_lanes = 4;
  int line_width_px = 5;
  /// Minimum distance between any two lane polylines.
  double min_separation_px = 12.0;
  double step_px = 20.0;
  /// Heading change per step is uniform in +-max_turn_deg.
  double max_turn_deg = 8.0;
  /// Lanes stay within this angle of the scene heading.
  double max_heading_dev_deg = 30.0;
  double margin_px = 16.0;
  double min_lane_len_px = 150.0;

  /// Gaps: each slot of gap_spacing_px arclength holds a gap with
  /// gap_probability, centered uniformly inside the slot.
  double gap_probability = 0.35;
  double gap_spacing_px = 64.0;
  double gap_len_min_px = 16.0;
  double gap_len_max_px = 40.0;
  /// Gap pixels keep a faint response, uniform in this range per gap.
  double gap_residual_min = 0.2;
  double gap_residual_max = 0.45;
  double blur_sigma_px = 1.0;
  double speckle_rate = 0.02;

  std::uint64_t seed = 0;

  int blur_radius_px() const { return blur_sigma_px > 0.0 ? static_cast<int>(std::ceil(3.0 * blur_sigma_px)) : 0; }

  void validate() const {
    if (canvas_w < 1 || canvas_h < 1) throw ParameterError("canvas size must be positive");
    if (min_lanes < 1 || max_lanes < min_lanes) throw ParameterError("lane count range must satisfy 1 <= min <= max");
    if (line_width_px < 1) throw ParameterError("line width must be >= 1");
    if (!(step_px > 0.0) || !(min_separation_px >= 0.0) || !(margin_px >= 0.0) || !(min_lane_len_px >= 0.0)) {
      throw ParameterError("scene geometry parameters must be positive");
    }
    if (!(max_turn_deg >= 0.0) || !(max_heading_dev_deg >= 0.0)) throw ParameterError("turn limits must be >= 0");
    if (!(gap_probability >= 0.0 && gap_probability <= 1.0)) throw ParameterError("gap probability must lie in [0,1]");
    if (!(speckle_rate >= 0.0 && speckle_rate <= 1.0)) throw ParameterError("speckle rate must lie in [0,1]");
    if (!(gap_spacing_px > 0.0) || !(gap_len_min_px >= 0.0) || gap_len_max_px < gap_len_min_px) {
      throw ParameterError("gap length range must satisfy 0 <= min <= max and spacing > 0");
    }
    if (!(gap_residual_min >= 0.0) || gap_residual_max < gap_residual_min || gap_residual_max > 1.0) {
      throw ParameterError("gap residual range must lie in [0,1]");
    }
    if (!(blur_sigma_px >= 0.0)) throw ParameterError("blur sigma must be >= 0");
    if (2.0 * margin_px >= std::min(canvas_w, canvas_h)) throw ParameterError("margin leaves no room for lanes");
  }
};

struct Scene {
  LaneGraph gt;
  BinaryMask clean;
};

namespace synth_detail {

inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }

inline bool segments_intersect(Point2 a, Point2 b, Point2 c, Point2 d) {
  const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

inline double segment_distance(Point2 a, Point2 b, Point2 c, Point2 d) {
  if (segments_intersect(a, b, c, d)) return 0.0;
  return std::min({distance_to_segment(a, c, d), distance_to_segment(b, c, d), distance_to_segment(c, a, b),
                   distance_to_segment(d, a, b)});
}

inline double polyline_distance(const std::vector<Point2>& p, const std::vector<Point2>& q) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < p.size(); ++i)
    for (std::size_t j = 0; j + 1 < q.size(); ++j) best = std::min(best, segment_distance(p[i], p[i + 1], q[j], q[j + 1]));
  return best;
}

inline double polyline_length(const std::vector<Point2>& p) {
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) len += distance(p[i], p[i + 1]);
  return len;
}

/// Random walk from `start` with heading kept near `base`, until the next
/// point would leave the margin box.
inline std::vector<Point2> walk(CounterRng& rng, Point2 start, double base, double sign, const SceneParams& p) {
  const double max_turn = p.max_turn_deg * std::numbers::pi / 180.0;
  const double max_dev = p.max_heading_dev_deg * std::numbers::pi / 180.0;
  std::vector<Point2> pts{start};
  double dev = rng.uniform(-max_dev, max_dev) * 0.5;
  const double lo_x = p.margin_px, hi_x = p.canvas_w - 1 - p.margin_px;
  const double lo_y = p.margin_px, hi_y = p.canvas_h - 1 - p.margin_px;
  for (int guard = 0; guard < 10000; ++guard) {
    dev = std::clamp(dev + rng.uniform(-max_turn, max_turn), -max_dev, max_dev);
    const double heading = base + dev;
    const Point2 next = pts.back() + sign * p.step_px * Point2{std::cos(heading), std::sin(heading)};
    if (next.x < lo_x || next.x > hi_x || next.y < lo_y || next.y > hi_y) break;
    pts.push_back(next);
  }
  return pts;
}

}  // namespace synth_detail

/// Random roughly parallel lanes as point chains, mutually separated by more
/// than min_separation_px. Deterministic per seed.
inline Scene gen_scene(const SceneParams& p) {
  p.validate();
  CounterRng rng(p.seed, 0x5ce7e);
  const Point2 center{(p.canvas_w - 1) / 2.0, (p.canvas_h - 1) / 2.0};
  constexpr int kSceneAttempts = 50;
  constexpr int kLaneAttempts = 100;
  for (int attempt = 0; attempt < kSceneAttempts; ++attempt) {
    const int count = static_cast<int>(rng.uniform_int(p.min_lanes, p.max_lanes));
    const double base = rng.uniform(0.0, std::numbers::pi);
    const Point2 across{-std::sin(base), std::cos(base)};
    const double half_span = 0.5 * std::min(p.canvas_w, p.canvas_h) - p.margin_px;
    std::vector<std::vector<Point2>> lanes;
    for (int tries = 0; tries < kLaneAttempts && static_cast<int>(lanes.size()) < count; ++tries) {
      const double offset = rng.uniform(-half_span, half_span);
      const Point2 start = center + offset * across + rng.uniform(-half_span, half_span) * 0.3 * Point2{across.y, -across.x};
      if (start.x < p.margin_px || start.y < p.margin_px || start.x > p.canvas_w - 1 - p.margin_px ||
          start.y > p.canvas_h - 1 - p.margin_px) {
        continue;
      }
      auto back = synth_detail::walk(rng, start, base, -1.0, p);
      auto fwd = synth_detail::walk(rng, start, base, 1.0, p);
      std::vector<Point2> lane(back.rbegin(), back.rend());
      lane.insert(lane.end(), fwd.begin() + 1, fwd.end());
      if (lane.size() < 2 || synth_detail::polyline_length(lane) < p.min_lane_len_px) continue;
      const bool clear = std::all_of(lanes.begin(), lanes.end(), [&](const auto& other) {
        return synth_detail::polyline_distance(lane, other) > p.min_separation_px;
      });
      if (clear) lanes.push_back(std::move(lane));
    }
    if (static_cast<int>(lanes.size()) < count) continue;

    Scene s;
    s.gt.name = "synthetic-" + std::to_string(p.seed);
    s.gt.gsd_cm = 12.5;
    for (const auto& lane : lanes) {
      NodeId prev = -1;
      for (const auto& q : lane) {
        const NodeId v = s.gt.add_node(q);
        if (prev >= 0) s.gt.add_edge(prev, v);
        prev = v;
      }
    }
    s.clean = render_graph_mask(s.gt, p.canvas_w, p.canvas_h, p.line_width_px);
    return s;
  }
  throw GenerationError("could not place " + std::to_string(p.min_lanes) + "+ separated lanes after " +
                        std::to_string(kSceneAttempts) + " attempts (seed " + std::to_string(p.seed) + ")");
}

/// Separable Gaussian blur truncated at ceil(3 sigma); borders clamp.
inline GrayRaster gaussian_blur(const GrayRaster& r, double sigma) {
  if (!(sigma >= 0.0)) throw ParameterError("blur sigma must be >= 0");
  if (sigma == 0.0 || r.empty()) return r;
  const int rad = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * rad + 1));
  double sum = 0.0;
  for (int i = -rad; i <= rad; ++i) sum += k[static_cast<std::size_t>(i + rad)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  const int w = r.width(), h = r.height();
  GrayRaster tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -rad; i <= rad; ++i) acc += k[static_cast<std::size_t>(i + rad)] * r(std::clamp(x + i, 0, w - 1), y);
      tmp(x, y) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -rad; i <= rad; ++i) acc += k[static_cast<std::size_t>(i + rad)] * tmp(x, std::clamp(y + i, 0, h - 1));
      out(x, y) = acc;
    }
  return clamp01(std::move(out));
}

/// Emulated unrefined segmentation: faint gaps along lanes, blur, speckle.
/// Gaps are placed along each lane's arclength, so the lane graph is needed
/// alongside the clean mask.
inline GrayRaster corrupt_mask(const BinaryMask& clean, const LaneGraph& gt, const SceneParams& p) {
  p.validate();
  CounterRng rng(p.seed, 0xc022);
  const int w = clean.width(), h = clean.height();
  const double half = p.line_width_px / 2.0;

  // Split every edge chain into kept and gap pieces by arclength. Edges are
  // walked in storage order; lanes from gen_scene are contiguous chains.
  GrayRaster gap_value(w, h, 0.0);
  BinaryMask kept(w, h, 0);
  const auto paint = [&](Point2 a, Point2 b, auto&& set) {
    LaneGraph seg;
    seg.add_edge(seg.add_node(a), seg.add_node(b));
    detail::for_each_pixel_near_edges(seg, w, h, half, [&](int x, int y, double, std::size_t) { set(x, y); });
  };

  const Adjacency adj = build_adjacency(gt);
  std::vector<bool> seen(gt.node_count(), false);
  for (const auto& comp : connected_components(gt)) {
    // Order the component as a path from its lowest-id terminal when it is one.
    NodeId startv = comp.front();
    for (NodeId v : comp) {
      if (adj.arcs[static_cast<std::size_t>(v)].size() == 1) {
        startv = v;
        break;
      }
    }
    std::vector<Point2> chain{gt.position(startv)};
    seen[static_cast<std::size_t>(startv)] = true;
    for (NodeId cur = startv;;) {
      NodeId next = -1;
      for (const auto& arc : adj.arcs[static_cast<std::size_t>(cur)]) {
        if (!seen[static_cast<std::size_t>(arc.to)]) {
          next = arc.to;
          break;
        }
      }
      if (next < 0) break;
      seen[static_cast<std::size_t>(next)] = true;
      chain.push_back(gt.position(next));
      cur = next;
    }
    const double length = synth_detail::polyline_length(chain);

    struct Gap {
      double lo, hi, residual;
    };
    std::vector<Gap> gaps;
    for (double slot = 0.0; slot < length; slot += p.gap_spacing_px) {
      if (!rng.bernoulli(p.gap_probability)) continue;
      const double c = slot + rng.uniform() * std::min(p.gap_spacing_px, length - slot);
      const double len = rng.uniform(p.gap_len_min_px, p.gap_len_max_px);
      gaps.push_back({c - len / 2.0, c + len / 2.0, rng.uniform(p.gap_residual_min, p.gap_residual_max)});
    }
    const auto gap_at = [&](double s) {
      double r = -1.0;
      for (const auto& g : gaps)
        if (s >= g.lo && s <= g.hi) r = std::max(r, g.residual);
      return r;
    };

    // Walk the chain in sub-steps of at most 1 px and paint each piece.
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
      const double seg_len = distance(chain[i], chain[i + 1]);
      const int pieces = std::max(1, static_cast<int>(std::ceil(seg_len)));
      for (int k = 0; k < pieces; ++k) {
        const double t0 = static_cast<double>(k) / pieces, t1 = static_cast<double>(k + 1) / pieces;
        const Point2 a = chain[i] + t0 * (chain[i + 1] - chain[i]);
        const Point2 b = chain[i] + t1 * (chain[i + 1] - chain[i]);
        const double r = gap_at(s + (t0 + t1) / 2.0 * seg_len);
        if (r < 0.0) {
          paint(a, b, [&](int x, int y) { kept(x, y) = 1; });
        } else {
          paint(a, b, [&](int x, int y) { gap_value(x, y) = std::max(gap_value(x, y), r); });
        }
      }
      s += seg_len;
    }
  }

  GrayRaster out(w, h, 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!clean[i]) continue;
    out[i] = kept[i] ? 1.0 : gap_value[i];
  }
  out = gaussian_blur(out, p.blur_sigma_px);
  if (p.speckle_rate > 0.0) {
    CounterRng speck(p.seed, 0x5bec);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (speck.uniform_at(2 * i) < p.speckle_rate) out[i] = std::clamp(out[i] + 2.0 * speck.uniform_at(2 * i + 1) - 1.0, 0.0, 1.0);
    }
  }
  return out;
}

/// Scene parameters for the i-th member of a seeded collection.
inline SceneParams nth_scene_params(const SceneParams& base, std::uint64_t i) {
  SceneParams p = base;
  p.seed = CounterRng::mix(base.seed * 0x100000001b3ULL + i);
  return p;
}

/// n training pairs (clean target, corrupted condition) at model resolution.
inline std::vector<TrainingPair> make_dataset(int n, const SceneParams& base, int model_w = 256, int model_h = 256) {
  if (n < 1) throw ParameterError("dataset size must be >= 1");
  if (model_w < 1 || model_h < 1) throw ParameterError("model resolution must be positive");
  std::vector<TrainingPair> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const SceneParams p = nth_scene_params(base, static_cast<std::uint64_t>(i));
    const Scene s = gen_scene(p);
    const GrayRaster corrupt = corrupt_mask(s.clean, s.gt, p);
    out.push_back({clamp01(resize_bilinear(to_gray(s.clean), model_w, model_h)),
                   clamp01(resize_bilinear(corrupt, model_w, model_h))});
  }
  return out;
}

}  // namespace lanediff
