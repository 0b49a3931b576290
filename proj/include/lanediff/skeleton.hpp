#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <vector>

#include "lanediff/errors.hpp"
#include "lanediff/graph.hpp"
#include "lanediff/grid.hpp"
#include "lanediff/raster.hpp"

namespace lanediff {

struct ExtractionParams {
  double alpha = 0.5;
  double min_component_len_px = 50.0;
  double max_spur_len_px = 30.0;
  double dp_epsilon_px = 2.0;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0,1)");
    if (!(min_component_len_px >= 0.0) || !(max_spur_len_px >= 0.0) || !(dp_epsilon_px >= 0.0)) {
      throw ParameterError("pruning and simplification thresholds must be non-negative");
    }
  }
};

// Neighbor order used throughout (Guo-Hall numbering):
//   P9 P2 P3
//   P8 P1 P4
//   P7 P6 P5
// Pixels outside the mask count as background.

namespace detail {

inline bool pixel(const BinaryMask& m, int x, int y) { return m.contains(x, y) && m(x, y) != 0; }

/// One Guo-Hall subiteration; returns number of pixels removed.
inline std::size_t guo_hall_pass(BinaryMask& m, int parity, std::vector<std::size_t>& doomed) {
  doomed.clear();
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m(x, y)) continue;
      const int p2 = pixel(m, x, y - 1), p3 = pixel(m, x + 1, y - 1), p4 = pixel(m, x + 1, y);
      const int p5 = pixel(m, x + 1, y + 1), p6 = pixel(m, x, y + 1), p7 = pixel(m, x - 1, y + 1);
      const int p8 = pixel(m, x - 1, y), p9 = pixel(m, x - 1, y - 1);
      const int c = ((!p2) & (p3 | p4)) + ((!p4) & (p5 | p6)) + ((!p6) & (p7 | p8)) + ((!p8) & (p9 | p2));
      const int n1 = (p9 | p2) + (p3 | p4) + (p5 | p6) + (p7 | p8);
      const int n2 = (p2 | p3) + (p4 | p5) + (p6 | p7) + (p8 | p9);
      const int n = std::min(n1, n2);
      const int side = parity == 0 ? ((p6 | p7 | !p9) & p8) : ((p2 | p3 | !p5) & p4);
      if (c == 1 && n >= 2 && n <= 3 && side == 0) {
        doomed.push_back(static_cast<std::size_t>(y) * static_cast<std::size_t>(m.width()) + static_cast<std::size_t>(x));
      }
    }
  }
  for (auto i : doomed) m[i] = 0;
  return doomed.size();
}

}  // namespace detail

namespace detail {

/// True when the set 8-neighbors of (x, y) form one 8-connected group
/// without (x, y) itself, so removing it keeps every component intact.
inline bool locally_simple(const BinaryMask& m, int x, int y) {
  static constexpr int dx[8] = {-1, 0, 1, 1, 1, 0, -1, -1};
  static constexpr int dy[8] = {-1, -1, -1, 0, 1, 1, 1, 0};
  bool on[8];
  int count = 0;
  for (int k = 0; k < 8; ++k) count += (on[k] = pixel(m, x + dx[k], y + dy[k])) ? 1 : 0;
  if (count == 0) return false;
  int seen_mask = 0, stack[8], top = 0;
  for (int k = 0; k < 8; ++k) {
    if (on[k]) {
      stack[top++] = k;
      seen_mask = 1 << k;
      break;
    }
  }
  int reached = 1;
  while (top > 0) {
    const int a = stack[--top];
    for (int b = 0; b < 8; ++b) {
      if (!on[b] || (seen_mask >> b & 1)) continue;
      if (std::abs(dx[a] - dx[b]) <= 1 && std::abs(dy[a] - dy[b]) <= 1) {
        seen_mask |= 1 << b;
        stack[top++] = b;
        ++reached;
      }
    }
  }
  return reached == count;
}

/// Sequentially removes one locally simple pixel from each remaining 2x2
/// block, scanning in raster order. Returns the number removed.
inline std::size_t break_blocks(BinaryMask& m) {
  std::size_t removed = 0;
  for (int y = 0; y + 1 < m.height(); ++y) {
    for (int x = 0; x + 1 < m.width(); ++x) {
      if (!(m(x, y) && m(x + 1, y) && m(x, y + 1) && m(x + 1, y + 1))) continue;
      for (auto [cx, cy] : {std::pair{x, y}, std::pair{x + 1, y}, std::pair{x, y + 1}, std::pair{x + 1, y + 1}}) {
        if (locally_simple(m, cx, cy)) {
          m(cx, cy) = 0;
          ++removed;
          break;
        }
      }
    }
  }
  return removed;
}

}  // namespace detail

/// Guo-Hall two-subiteration parallel thinning, run until a full pass
/// removes nothing. Blocks that survive around small holes are then broken
/// by deleting connectivity-preserving pixels, and both steps repeat until
/// neither changes the mask.
inline BinaryMask thin(const BinaryMask& m) {
  BinaryMask out = m;
  std::vector<std::size_t> doomed;
  for (;;) {
    for (;;) {
      std::size_t removed = detail::guo_hall_pass(out, 0, doomed);
      removed += detail::guo_hall_pass(out, 1, doomed);
      if (removed == 0) break;
    }
    if (detail::break_blocks(out) == 0) break;
  }
  return out;
}

inline bool has_2x2_block(const BinaryMask& m) {
  for (int y = 0; y + 1 < m.height(); ++y) {
    for (int x = 0; x + 1 < m.width(); ++x) {
      if (m(x, y) && m(x + 1, y) && m(x, y + 1) && m(x + 1, y + 1)) return true;
    }
  }
  return false;
}

/// Every set pixel becomes a node at its center. 4-neighbors are always
/// joined; diagonal neighbors only when they share no set 4-neighbor, so
/// staircases do not form triangles.
inline LaneGraph skeleton_to_graph(const BinaryMask& m) {
  if (has_2x2_block(m)) throw PreconditionError("skeleton_to_graph: mask is not thin (contains a 2x2 block)");
  LaneGraph g;
  std::vector<NodeId> id(m.size(), -1);
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (m(x, y)) id[static_cast<std::size_t>(y) * m.width() + x] = g.add_node({double(x), double(y)});
    }
  }
  const auto at = [&](int x, int y) { return id[static_cast<std::size_t>(y) * m.width() + x]; };
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m(x, y)) continue;
      if (detail::pixel(m, x + 1, y)) g.add_edge(at(x, y), at(x + 1, y));
      if (detail::pixel(m, x, y + 1)) g.add_edge(at(x, y), at(x, y + 1));
      // Down-right diagonal: shared 4-neighbors are (x+1,y) and (x,y+1).
      if (detail::pixel(m, x + 1, y + 1) && !detail::pixel(m, x + 1, y) && !detail::pixel(m, x, y + 1)) {
        g.add_edge(at(x, y), at(x + 1, y + 1));
      }
      // Down-left diagonal: shared 4-neighbors are (x-1,y) and (x,y+1).
      if (detail::pixel(m, x - 1, y + 1) && !detail::pixel(m, x - 1, y) && !detail::pixel(m, x, y + 1)) {
        g.add_edge(at(x, y), at(x - 1, y + 1));
      }
    }
  }
  return g;
}

namespace detail {

/// Walks from `start` through `first` until reaching a node whose degree is
/// not 2. Returns the visited nodes (start .. end) and their summed length.
struct Walk {
  std::vector<NodeId> nodes;
  double length = 0.0;
};

inline Walk walk_chain(const LaneGraph& g, const std::vector<std::vector<NodeId>>& nbrs,
                       const std::vector<bool>& alive, NodeId start, NodeId first) {
  const auto live_degree = [&](NodeId v) {
    std::size_t d = 0;
    for (NodeId u : nbrs[static_cast<std::size_t>(v)]) d += alive[static_cast<std::size_t>(u)] ? 1 : 0;
    return d;
  };
  Walk w;
  w.nodes.push_back(start);
  NodeId prev = start;
  NodeId cur = first;
  for (;;) {
    w.length += distance(g.position(prev), g.position(cur));
    w.nodes.push_back(cur);
    if (cur == start || live_degree(cur) != 2) break;
    NodeId next = -1;
    for (NodeId u : nbrs[static_cast<std::size_t>(cur)]) {
      if (alive[static_cast<std::size_t>(u)] && u != prev) {
        next = u;
        break;
      }
    }
    if (next < 0) break;
    prev = cur;
    cur = next;
  }
  return w;
}

}  // namespace detail

/// Removes dead-end chains (terminal to junction) shorter than
/// max_spur_len_px until none remain, shortest first, then drops connected
/// components whose total length is below min_component_len_px.
inline LaneGraph prune(const LaneGraph& g, double min_component_len_px, double max_spur_len_px) {
  if (!(min_component_len_px >= 0.0) || !(max_spur_len_px >= 0.0)) {
    throw ParameterError("prune thresholds must be non-negative");
  }
  const std::size_t n = g.node_count();
  std::vector<std::vector<NodeId>> nbrs(n);
  for (const auto& e : g.edges()) {
    nbrs[static_cast<std::size_t>(e.from)].push_back(e.to);
    nbrs[static_cast<std::size_t>(e.to)].push_back(e.from);
  }
  for (auto& l : nbrs) std::sort(l.begin(), l.end());
  std::vector<bool> alive(n, true);
  const auto live_degree = [&](NodeId v) {
    std::size_t d = 0;
    for (NodeId u : nbrs[static_cast<std::size_t>(v)]) d += alive[static_cast<std::size_t>(u)] ? 1 : 0;
    return d;
  };

  for (bool changed = true; changed;) {
    changed = false;
    std::vector<detail::Walk> spurs;
    for (std::size_t v = 0; v < n; ++v) {
      if (!alive[v] || live_degree(static_cast<NodeId>(v)) != 1) continue;
      NodeId first = -1;
      for (NodeId u : nbrs[v]) {
        if (alive[static_cast<std::size_t>(u)]) first = u;
      }
      auto w = detail::walk_chain(g, nbrs, alive, static_cast<NodeId>(v), first);
      if (live_degree(w.nodes.back()) >= 3 && w.length < max_spur_len_px) spurs.push_back(std::move(w));
    }
    std::stable_sort(spurs.begin(), spurs.end(), [](const auto& a, const auto& b) {
      return a.length != b.length ? a.length < b.length : a.nodes.front() < b.nodes.front();
    });
    for (const auto& s : spurs) {
      // An earlier removal may have turned this chain's junction into a
      // plain chain node, or consumed part of the chain.
      bool intact = true;
      for (NodeId v : s.nodes) intact = intact && alive[static_cast<std::size_t>(v)];
      if (!intact || live_degree(s.nodes.back()) < 3) continue;
      for (std::size_t i = 0; i + 1 < s.nodes.size(); ++i) alive[static_cast<std::size_t>(s.nodes[i])] = false;
      changed = true;
    }
  }

  Subgraph trimmed = induced_subgraph(g, alive);
  std::vector<bool> keep(trimmed.graph.node_count(), false);
  const Adjacency adj = build_adjacency(trimmed.graph);
  for (const auto& comp : connected_components(trimmed.graph)) {
    double len = 0.0;
    for (NodeId v : comp) {
      for (const auto& arc : adj.arcs[static_cast<std::size_t>(v)]) len += arc.length;
    }
    len /= 2.0;
    if (len >= min_component_len_px) {
      for (NodeId v : comp) keep[static_cast<std::size_t>(v)] = true;
    }
  }
  return induced_subgraph(trimmed.graph, keep).graph;
}

namespace detail {

inline void douglas_peucker(const std::vector<Point2>& pts, std::size_t lo, std::size_t hi, double eps,
                            std::vector<bool>& keep) {
  if (hi <= lo + 1) return;
  double worst = -1.0;
  std::size_t at = lo;
  for (std::size_t i = lo + 1; i < hi; ++i) {
    const double d = distance_to_segment(pts[i], pts[lo], pts[hi]);
    if (d > worst) {
      worst = d;
      at = i;
    }
  }
  if (worst > eps) {
    keep[at] = true;
    douglas_peucker(pts, lo, at, eps, keep);
    douglas_peucker(pts, at, hi, eps, keep);
  }
}

}  // namespace detail

/// Douglas-Peucker on every maximal chain of degree-2 nodes. Nodes whose
/// degree is not 2 are always kept. Closed loops keep at least three nodes and
/// simplification never creates a duplicate edge.
inline LaneGraph simplify_dp(const LaneGraph& g, double epsilon_px) {
  if (!(epsilon_px >= 0.0)) throw ParameterError("epsilon must be non-negative");
  const std::size_t n = g.node_count();
  std::vector<std::vector<NodeId>> nbrs(n);
  for (const auto& e : g.edges()) {
    nbrs[static_cast<std::size_t>(e.from)].push_back(e.to);
    nbrs[static_cast<std::size_t>(e.to)].push_back(e.from);
  }
  for (auto& l : nbrs) std::sort(l.begin(), l.end());
  const std::vector<bool> all(n, true);

  std::vector<bool> keep(n, false);
  std::vector<bool> visited_edge_node(n, false);  // interior nodes already processed
  std::vector<std::vector<NodeId>> chains;
  for (std::size_t v = 0; v < n; ++v) {
    if (nbrs[v].size() != 2) keep[v] = true;
  }
  std::vector<std::pair<NodeId, NodeId>> pending;
  // Chains anchored at non-degree-2 nodes.
  for (std::size_t v = 0; v < n; ++v) {
    if (!keep[v]) continue;
    for (NodeId u : nbrs[v]) {
      if (keep[static_cast<std::size_t>(u)]) {
        if (static_cast<std::size_t>(u) > v) pending.emplace_back(static_cast<NodeId>(v), u);
        continue;
      }
      if (visited_edge_node[static_cast<std::size_t>(u)]) continue;
      auto w = detail::walk_chain(g, nbrs, all, static_cast<NodeId>(v), u);
      for (std::size_t i = 1; i + 1 < w.nodes.size(); ++i) visited_edge_node[static_cast<std::size_t>(w.nodes[i])] = true;
      chains.push_back(std::move(w.nodes));
    }
  }
  // Pure cycles of degree-2 nodes, anchored at their smallest id.
  for (std::size_t v = 0; v < n; ++v) {
    if (keep[v] || visited_edge_node[v]) continue;
    keep[v] = true;
    auto w = detail::walk_chain(g, nbrs, all, static_cast<NodeId>(v), nbrs[v][0]);
    for (std::size_t i = 1; i + 1 < w.nodes.size(); ++i) visited_edge_node[static_cast<std::size_t>(w.nodes[i])] = true;
    chains.push_back(std::move(w.nodes));
  }

  LaneGraph out;
  out.name = g.name;
  out.gsd_cm = g.gsd_cm;
  out.directed = g.directed;
  for (const auto& chain : chains) {
    std::vector<Point2> pts;
    pts.reserve(chain.size());
    for (NodeId id : chain) pts.push_back(g.position(id));
    std::vector<bool> k(chain.size(), false);
    k.front() = k.back() = true;
    const bool closed = chain.front() == chain.back();
    if (closed && chain.size() >= 4) {
      // Split the loop at the node farthest from the anchor.
      std::size_t far = 1;
      for (std::size_t i = 1; i + 1 < chain.size(); ++i) {
        if (distance(pts[i], pts[0]) > distance(pts[far], pts[0])) far = i;
      }
      k[far] = true;
      detail::douglas_peucker(pts, 0, far, epsilon_px, k);
      detail::douglas_peucker(pts, far, chain.size() - 1, epsilon_px, k);
      std::size_t kept = 0;
      for (bool b : k) kept += b ? 1 : 0;
      if (kept < 4) {  // closed loop needs three distinct nodes
        std::size_t best = 0;
        double best_d = -1.0;
        for (std::size_t i = 1; i + 1 < chain.size(); ++i) {
          if (k[i]) continue;
          const double d = std::min(distance_to_segment(pts[i], pts[0], pts[far]),
                                    distance_to_segment(pts[i], pts[far], pts.back()));
          if (d > best_d) {
            best_d = d;
            best = i;
          }
        }
        if (best_d >= 0.0) k[best] = true;
      }
    } else {
      detail::douglas_peucker(pts, 0, chain.size() - 1, epsilon_px, k);
    }
    std::vector<std::size_t> kept_idx;
    for (std::size_t i = 0; i < chain.size(); ++i) {
      if (k[i]) kept_idx.push_back(i);
    }
    // A direct anchor-to-anchor shortcut may coincide with an existing edge or
    // another chain's shortcut; keep the chain's farthest node to stay simple.
    if (kept_idx.size() == 2 && chain.size() > 2) {
      const NodeId a = chain.front(), b = chain.back();
      const bool clash = std::any_of(pending.begin(), pending.end(), [&](const auto& p) {
        return (p.first == a && p.second == b) || (p.first == b && p.second == a);
      }) || g.has_edge(a, b);
      if (clash) {
        std::size_t best = 1;
        double best_d = -1.0;
        for (std::size_t i = 1; i + 1 < chain.size(); ++i) {
          const double d = distance_to_segment(pts[i], pts.front(), pts.back());
          if (d > best_d) {
            best_d = d;
            best = i;
          }
        }
        kept_idx = {0, best, chain.size() - 1};
      }
    }
    for (std::size_t j : kept_idx) keep[static_cast<std::size_t>(chain[j])] = true;
    for (std::size_t j = 0; j + 1 < kept_idx.size(); ++j) {
      pending.emplace_back(chain[kept_idx[j]], chain[kept_idx[j + 1]]);
    }
  }
  std::vector<NodeId> remap(n, -1);
  for (std::size_t v = 0; v < n; ++v) {
    if (keep[v]) remap[v] = out.add_node(g.positions()[v]);
  }
  for (const auto& [a, b] : pending) {
    out.try_add_edge(remap[static_cast<std::size_t>(a)], remap[static_cast<std::size_t>(b)]);
  }
  return out;
}

/// threshold -> thin -> skeleton_to_graph -> prune -> simplify_dp.
inline LaneGraph extract(const GrayRaster& p, const ExtractionParams& params = {}) {
  params.validate();
  const BinaryMask skeleton = thin(threshold(p, params.alpha));
  const LaneGraph raw = skeleton_to_graph(skeleton);
  const LaneGraph pruned = prune(raw, params.min_component_len_px, params.max_spur_len_px);
  return simplify_dp(pruned, params.dp_epsilon_px);
}

}  // namespace lanediff
