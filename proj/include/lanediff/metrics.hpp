#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "lanediff/errors.hpp"
#include "lanediff/graph.hpp"
#include "lanediff/matching.hpp"

namespace lanediff {

/// Metric hyperparameters in pixels. Defaults correspond to 25 cm
/// densification, a 1 m match radius and a 50 m TOPO radius at 12.5 cm/px.
struct EvalConfig {
  double densify_spacing_px = 2.0;
  double match_radius_px = 8.0;
  double topo_radius_px = 400.0;
  double gsd_cm = 12.5;
  MatchingMode matching = MatchingMode::maximum;

  void validate() const {
    if (!(densify_spacing_px > 0.0) || !(match_radius_px > 0.0) || !(topo_radius_px > 0.0) || !(gsd_cm > 0.0)) {
      throw ParameterError("evaluation parameters must be positive");
    }
  }
  double px_to_m(double px) const { return px * gsd_cm / 100.0; }
};

struct MatchResult {
  /// (pred node id, gt node id) in the densified graphs, ascending by pred id.
  std::vector<std::pair<NodeId, NodeId>> pairs;
  std::size_t pred_total = 0;
  std::size_t gt_total = 0;
};

struct Scores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  friend bool operator==(const Scores&, const Scores&) = default;
};
using GeoScores = Scores;
using TopoScores = Scores;

inline double f1_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

inline Scores make_scores(double p, double r) { return {p, r, f1_score(p, r)}; }

/// Matching between two already-densified graphs.
inline MatchResult match_nodes(const LaneGraph& pred, const LaneGraph& gt, double radius, MatchingMode mode) {
  MatchResult m;
  m.pred_total = pred.node_count();
  m.gt_total = gt.node_count();
  const auto cands = radius_candidates(pred.positions(), gt.positions(), radius);
  const auto match = bipartite_match(pred.node_count(), gt.node_count(), cands, mode);
  for (std::size_t i = 0; i < match.size(); ++i) {
    if (match[i] >= 0) m.pairs.emplace_back(static_cast<NodeId>(i), match[i]);
  }
  return m;
}

/// Densifies both graphs and matches their nodes one-to-one within the radius.
inline MatchResult geo_match(const LaneGraph& pred, const LaneGraph& gt, const EvalConfig& cfg = {}) {
  cfg.validate();
  return match_nodes(densify(pred, cfg.densify_spacing_px), densify(gt, cfg.densify_spacing_px),
                     cfg.match_radius_px, cfg.matching);
}

inline GeoScores geo_scores(const MatchResult& m) {
  const auto k = static_cast<double>(m.pairs.size());
  const double p = m.pred_total ? k / static_cast<double>(m.pred_total) : 0.0;
  const double r = m.gt_total ? k / static_cast<double>(m.gt_total) : 0.0;
  return make_scores(p, r);
}

/// Induced subgraph on nodes whose shortest-path distance from v is < radius_px.
inline Subgraph subgraph_within(const LaneGraph& g, NodeId v, double radius_px) {
  const auto dist = shortest_path_lengths(g, v, radius_px);
  std::vector<bool> keep(g.node_count(), false);
  for (const auto& [id, d] : dist) keep[static_cast<std::size_t>(id)] = true;
  return induced_subgraph(g, keep);
}

/// TOPO scores of densified graphs given their GEO matching.
inline TopoScores topo_scores_densified(const LaneGraph& pred, const LaneGraph& gt, const MatchResult& m,
                                        const EvalConfig& cfg) {
  if (m.pairs.empty()) return {};
  const Adjacency pred_adj = build_adjacency(pred);
  const Adjacency gt_adj = build_adjacency(gt);
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> pred_scratch(pred.node_count(), inf), gt_scratch(gt.node_count(), inf);
  std::vector<Point2> sp, sg;
  std::vector<std::pair<NodeId, double>> ordered;

  const auto collect = [&](const Adjacency& adj, const LaneGraph& g, NodeId v, std::vector<double>& scratch,
                           std::vector<Point2>& pts) {
    auto reach = shortest_path_lengths(adj, v, cfg.topo_radius_px, scratch);
    std::sort(reach.begin(), reach.end());
    pts.clear();
    for (const auto& [id, d] : reach) pts.push_back(g.position(id));
  };

  double pre_sum = 0.0, rec_sum = 0.0;
  for (const auto& [pv, gv] : m.pairs) {
    collect(pred_adj, pred, pv, pred_scratch, sp);
    collect(gt_adj, gt, gv, gt_scratch, sg);
    const auto cands = radius_candidates(sp, sg, cfg.match_radius_px);
    const auto match = bipartite_match(sp.size(), sg.size(), cands, cfg.matching);
    const auto k = static_cast<double>(std::count_if(match.begin(), match.end(), [](auto j) { return j >= 0; }));
    pre_sum += k / static_cast<double>(sp.size());
    rec_sum += k / static_cast<double>(sg.size());
  }
  return make_scores(pre_sum / static_cast<double>(m.pred_total), rec_sum / static_cast<double>(m.gt_total));
}

inline TopoScores topo_scores(const LaneGraph& pred, const LaneGraph& gt, const EvalConfig& cfg = {}) {
  cfg.validate();
  const LaneGraph pd = densify(pred, cfg.densify_spacing_px);
  const LaneGraph gd = densify(gt, cfg.densify_spacing_px);
  return topo_scores_densified(pd, gd, match_nodes(pd, gd, cfg.match_radius_px, cfg.matching), cfg);
}

struct Evaluation {
  GeoScores geo;
  TopoScores topo;
  std::size_t matched = 0;
  std::size_t pred_nodes = 0;
  std::size_t gt_nodes = 0;
};

inline Evaluation evaluate(const LaneGraph& pred, const LaneGraph& gt, const EvalConfig& cfg = {}) {
  cfg.validate();
  const LaneGraph pd = densify(pred, cfg.densify_spacing_px);
  const LaneGraph gd = densify(gt, cfg.densify_spacing_px);
  const MatchResult m = match_nodes(pd, gd, cfg.match_radius_px, cfg.matching);
  return {geo_scores(m), topo_scores_densified(pd, gd, m, cfg), m.pairs.size(), m.pred_total, m.gt_total};
}

inline const char* to_string(MatchingMode m) { return m == MatchingMode::maximum ? "maximum" : "greedy"; }

inline MatchingMode matching_mode_from_string(const std::string& s) {
  if (s == "maximum") return MatchingMode::maximum;
  if (s == "greedy") return MatchingMode::greedy;
  throw ParameterError("unknown matching mode '" + s + "' (expected maximum|greedy)");
}

}  // namespace lanediff
