#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lanediff/errors.hpp"

namespace lanediff {

/// Pixel-space position: x is the column, y the row. Pixel (i, j) has its
/// center at (i, j).
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
};

inline double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Distance from `p` to the closed segment [a, b].
inline double distance_to_segment(Point2 p, Point2 a, Point2 b) {
  const Point2 ab = b - a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  if (len2 == 0.0) return distance(p, a);
  const Point2 ap = p - a;
  const double dot = ap.x * ab.x + ap.y * ab.y;
  if (dot <= 0.0) return distance(p, a);
  if (dot >= len2) return distance(p, b);
  return std::abs(ab.x * ap.y - ab.y * ap.x) / std::sqrt(len2);
}

using NodeId = std::int32_t;

/// Edge as stored: `from` -> `to` orientation is kept for direction maps but
/// ignored by every graph algorithm and metric.
struct Edge {
  NodeId from = 0;
  NodeId to = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Lane graph with dense node ids 0..N-1.
class LaneGraph {
 public:
  std::optional<std::string> name;
  std::optional<double> gsd_cm;
  bool directed = false;

  NodeId add_node(Point2 p) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ParameterError("node position must be finite");
    nodes_.push_back(p);
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  void add_edge(NodeId a, NodeId b) {
    check_node(a);
    check_node(b);
    if (a == b) throw ParameterError("self-loop on node " + std::to_string(a));
    if (!edge_keys_.insert(key(a, b)).second) {
      throw ParameterError("duplicate edge " + std::to_string(a) + "-" + std::to_string(b));
    }
    edges_.push_back({a, b});
  }

  /// Adds the edge unless it already exists. Returns true if added.
  bool try_add_edge(NodeId a, NodeId b) {
    if (a == b || has_edge(a, b)) return false;
    add_edge(a, b);
    return true;
  }

  bool has_edge(NodeId a, NodeId b) const { return edge_keys_.count(key(a, b)) != 0; }
  bool has_node(NodeId id) const { return id >= 0 && static_cast<std::size_t>(id) < nodes_.size(); }

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }

  const Point2& position(NodeId id) const {
    check_node(id);
    return nodes_[static_cast<std::size_t>(id)];
  }
  const std::vector<Point2>& positions() const noexcept { return nodes_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  double edge_length(const Edge& e) const { return distance(position(e.from), position(e.to)); }

  double total_length() const {
    double sum = 0.0;
    for (const auto& e : edges_) sum += edge_length(e);
    return sum;
  }

  /// Structural equality: same positions (exact), same edge set, same flags.
  friend bool operator==(const LaneGraph& a, const LaneGraph& b) {
    return a.nodes_ == b.nodes_ && a.edge_keys_ == b.edge_keys_ && a.directed == b.directed &&
           a.gsd_cm == b.gsd_cm && a.name == b.name;
  }

 private:
  static std::pair<NodeId, NodeId> key(NodeId a, NodeId b) { return a < b ? std::pair{a, b} : std::pair{b, a}; }

  void check_node(NodeId id) const {
    if (!has_node(id)) throw LookupError("node " + std::to_string(id) + " does not exist");
  }

  std::vector<Point2> nodes_;
  std::vector<Edge> edges_;
  std::set<std::pair<NodeId, NodeId>> edge_keys_;
};

/// Undirected weighted adjacency; neighbor lists are sorted by id.
struct Adjacency {
  struct Arc {
    NodeId to;
    double length;
  };
  std::vector<std::vector<Arc>> arcs;

  std::size_t degree(NodeId v) const { return arcs[static_cast<std::size_t>(v)].size(); }
};

inline Adjacency build_adjacency(const LaneGraph& g) {
  Adjacency adj;
  adj.arcs.resize(g.node_count());
  for (const auto& e : g.edges()) {
    const double len = g.edge_length(e);
    adj.arcs[static_cast<std::size_t>(e.from)].push_back({e.to, len});
    adj.arcs[static_cast<std::size_t>(e.to)].push_back({e.from, len});
  }
  for (auto& list : adj.arcs) {
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.to < b.to; });
  }
  return adj;
}

inline std::vector<std::size_t> degrees(const LaneGraph& g) {
  std::vector<std::size_t> deg(g.node_count(), 0);
  for (const auto& e : g.edges()) {
    ++deg[static_cast<std::size_t>(e.from)];
    ++deg[static_cast<std::size_t>(e.to)];
  }
  return deg;
}

/// Result of keeping a subset of nodes: the compacted graph plus, for each of
/// its nodes, the id it had in the source graph.
struct Subgraph {
  LaneGraph graph;
  std::vector<NodeId> source_ids;
};

/// Induced subgraph on the nodes with keep[id] set. Relative node order and
/// edge orientation are preserved.
inline Subgraph induced_subgraph(const LaneGraph& g, const std::vector<bool>& keep) {
  Subgraph out;
  out.graph.name = g.name;
  out.graph.gsd_cm = g.gsd_cm;
  out.graph.directed = g.directed;
  std::vector<NodeId> remap(g.node_count(), -1);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    if (i < keep.size() && keep[i]) {
      remap[i] = out.graph.add_node(g.positions()[i]);
      out.source_ids.push_back(static_cast<NodeId>(i));
    }
  }
  for (const auto& e : g.edges()) {
    const NodeId a = remap[static_cast<std::size_t>(e.from)];
    const NodeId b = remap[static_cast<std::size_t>(e.to)];
    if (a >= 0 && b >= 0) out.graph.add_edge(a, b);
  }
  return out;
}

/// Subdivides every edge longer than `max_spacing_px` into ceil(len/spacing)
/// equal parts. Original ids are kept; inserted nodes are appended in edge order.
/// Lengths within a relative 1e-9 of a whole multiple of the spacing count as
/// that multiple, so pieces may exceed the spacing by at most that fraction.
inline constexpr double kDensifyTolerance = 1e-9;

inline LaneGraph densify(const LaneGraph& g, double max_spacing_px) {
  if (!(max_spacing_px > 0.0) || !std::isfinite(max_spacing_px)) {
    throw ParameterError("densify spacing must be positive, got " + std::to_string(max_spacing_px));
  }
  LaneGraph out;
  out.name = g.name;
  out.gsd_cm = g.gsd_cm;
  out.directed = g.directed;
  for (const auto& p : g.positions()) out.add_node(p);

  std::vector<Point2> inner;
  for (const auto& e : g.edges()) {
    const Point2 a = g.position(e.from);
    const Point2 b = g.position(e.to);
    const double len = distance(a, b);
    const double limit = max_spacing_px * (1.0 + kDensifyTolerance);
    if (len <= limit) {
      out.add_edge(e.from, e.to);
      continue;
    }
    auto parts = static_cast<long>(std::ceil(len / max_spacing_px * (1.0 - kDensifyTolerance)));
    // Rounding in the interpolated positions can push a piece a few ulps over.
    for (;; ++parts) {
      inner.clear();
      Point2 prev = a;
      bool ok = true;
      for (long k = 1; k <= parts; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(parts);
        const Point2 p = k == parts ? b : Point2{a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t};
        if (distance(prev, p) > limit) {
          ok = false;
          break;
        }
        if (k < parts) inner.push_back(p);
        prev = p;
      }
      if (ok) break;
    }
    NodeId prev_id = e.from;
    for (const auto& p : inner) {
      const NodeId id = out.add_node(p);
      out.add_edge(prev_id, id);
      prev_id = id;
    }
    out.add_edge(prev_id, e.to);
  }
  return out;
}

/// Degree-1 nodes, ascending.
inline std::vector<NodeId> terminal_nodes(const LaneGraph& g) {
  const auto deg = degrees(g);
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < deg.size(); ++i) {
    if (deg[i] == 1) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

/// Nodes of degree >= 3, ascending.
inline std::vector<NodeId> junction_nodes(const LaneGraph& g) {
  const auto deg = degrees(g);
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < deg.size(); ++i) {
    if (deg[i] >= 3) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

/// (node, distance) pairs in settle order.
using DistanceList = std::vector<std::pair<NodeId, double>>;

/// Dijkstra from `source` keeping only nodes strictly closer than `cutoff_px`.
/// `dist_scratch` must hold adj.arcs.size() entries of +inf and is restored on return.
inline DistanceList shortest_path_lengths(const Adjacency& adj, NodeId source, double cutoff_px,
                                          std::vector<double>& dist_scratch) {
  if (source < 0 || static_cast<std::size_t>(source) >= adj.arcs.size()) {
    throw LookupError("source node " + std::to_string(source) + " does not exist");
  }
  if (!(cutoff_px > 0.0)) throw ParameterError("cutoff must be positive");
  constexpr double inf = std::numeric_limits<double>::infinity();
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  std::vector<NodeId> touched;
  DistanceList settled;

  dist_scratch[static_cast<std::size_t>(source)] = 0.0;
  touched.push_back(source);
  heap.push({0.0, source});
  while (!heap.empty()) {
    const auto [d, v] = heap.top();
    heap.pop();
    if (d > dist_scratch[static_cast<std::size_t>(v)]) continue;
    settled.emplace_back(v, d);
    for (const auto& arc : adj.arcs[static_cast<std::size_t>(v)]) {
      const double nd = d + arc.length;
      auto& slot = dist_scratch[static_cast<std::size_t>(arc.to)];
      if (nd < cutoff_px && nd < slot) {
        if (slot == inf) touched.push_back(arc.to);
        slot = nd;
        heap.push({nd, arc.to});
      }
    }
  }
  for (NodeId v : touched) dist_scratch[static_cast<std::size_t>(v)] = inf;
  return settled;
}

/// Shortest-path (Euclidean edge weight) distances from `source`, restricted
/// to nodes with distance < cutoff_px. Unreachable nodes are absent.
inline std::map<NodeId, double> shortest_path_lengths(const LaneGraph& g, NodeId source, double cutoff_px) {
  if (!g.has_node(source)) throw LookupError("source node " + std::to_string(source) + " does not exist");
  const Adjacency adj = build_adjacency(g);
  std::vector<double> scratch(g.node_count(), std::numeric_limits<double>::infinity());
  std::map<NodeId, double> out;
  for (const auto& [v, d] : shortest_path_lengths(adj, source, cutoff_px, scratch)) out.emplace(v, d);
  return out;
}

/// Partition of node ids by undirected reachability. Components are ordered by
/// smallest member; members ascend.
inline std::vector<std::vector<NodeId>> connected_components(const LaneGraph& g) {
  const Adjacency adj = build_adjacency(g);
  std::vector<bool> seen(g.node_count(), false);
  std::vector<std::vector<NodeId>> out;
  std::vector<NodeId> stack;
  for (std::size_t s = 0; s < g.node_count(); ++s) {
    if (seen[s]) continue;
    std::vector<NodeId> comp;
    seen[s] = true;
    stack.push_back(static_cast<NodeId>(s));
    while (!stack.empty()) {
      const NodeId v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      for (const auto& arc : adj.arcs[static_cast<std::size_t>(v)]) {
        if (!seen[static_cast<std::size_t>(arc.to)]) {
          seen[static_cast<std::size_t>(arc.to)] = true;
          stack.push_back(arc.to);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

}  // namespace lanediff
