#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <unordered_map>
#include <vector>

#include "lanediff/graph.hpp"

namespace lanediff {

/// Candidate pair between left index `left` and right index `right`.
struct Candidate {
  std::int32_t left;
  std::int32_t right;
  double dist;
};

/// All (i, j) with ||left[i] - right[j]|| < radius, sorted by
/// (distance, left, right). Uses a uniform hash grid with cell size = radius.
inline std::vector<Candidate> radius_candidates(const std::vector<Point2>& left, const std::vector<Point2>& right,
                                                double radius) {
  std::vector<Candidate> out;
  if (left.empty() || right.empty() || !(radius > 0.0)) return out;
  const auto cell_of = [radius](double v) { return static_cast<std::int64_t>(std::floor(v / radius)); };
  const auto key = [](std::int64_t cx, std::int64_t cy) {
    return static_cast<std::uint64_t>(cx) * 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(cy);
  };
  std::unordered_map<std::uint64_t, std::vector<std::int32_t>> buckets;
  for (std::size_t j = 0; j < right.size(); ++j) {
    buckets[key(cell_of(right[j].x), cell_of(right[j].y))].push_back(static_cast<std::int32_t>(j));
  }
  for (std::size_t i = 0; i < left.size(); ++i) {
    const auto cx = cell_of(left[i].x), cy = cell_of(left[i].y);
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        auto it = buckets.find(key(cx + dx, cy + dy));
        if (it == buckets.end()) continue;
        for (std::int32_t j : it->second) {
          // Hash collisions between distinct cells only add far pairs, which the test rejects.
          const double d = distance(left[i], right[static_cast<std::size_t>(j)]);
          if (d < radius) out.push_back({static_cast<std::int32_t>(i), j, d});
        }
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.left != b.left) return a.left < b.left;
    return a.right < b.right;
  });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const Candidate& a, const Candidate& b) { return a.left == b.left && a.right == b.right; }),
            out.end());
  return out;
}

enum class MatchingMode {
  /// Maximum cardinality (greedy nearest-first start, then Hopcroft-Karp augmentation).
  maximum,
  /// Greedy nearest-first only: maximal, not necessarily maximum.
  greedy,
};

/// One-to-one matching over the candidate pairs. Returns match_left[i] = j or -1.
inline std::vector<std::int32_t> bipartite_match(std::size_t n_left, std::size_t n_right,
                                                 const std::vector<Candidate>& cands, MatchingMode mode) {
  constexpr std::int32_t none = -1;
  std::vector<std::int32_t> match_l(n_left, none), match_r(n_right, none);
  for (const auto& c : cands) {
    if (match_l[static_cast<std::size_t>(c.left)] == none && match_r[static_cast<std::size_t>(c.right)] == none) {
      match_l[static_cast<std::size_t>(c.left)] = c.right;
      match_r[static_cast<std::size_t>(c.right)] = c.left;
    }
  }
  if (mode == MatchingMode::greedy) return match_l;

  // Adjacency in nearest-first order so augmenting paths prefer short pairs.
  std::vector<std::vector<std::int32_t>> adj(n_left);
  for (const auto& c : cands) adj[static_cast<std::size_t>(c.left)].push_back(c.right);

  constexpr std::int32_t inf = std::numeric_limits<std::int32_t>::max();
  std::vector<std::int32_t> level(n_left);
  std::vector<std::size_t> cursor(n_left);

  const auto bfs = [&] {
    std::queue<std::int32_t> q;
    bool found = false;
    for (std::size_t u = 0; u < n_left; ++u) {
      if (match_l[u] == none) {
        level[u] = 0;
        q.push(static_cast<std::int32_t>(u));
      } else {
        level[u] = inf;
      }
    }
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      for (auto v : adj[static_cast<std::size_t>(u)]) {
        const auto w = match_r[static_cast<std::size_t>(v)];
        if (w == none) {
          found = true;
        } else if (level[static_cast<std::size_t>(w)] == inf) {
          level[static_cast<std::size_t>(w)] = level[static_cast<std::size_t>(u)] + 1;
          q.push(w);
        }
      }
    }
    return found;
  };

  // Iterative DFS along the BFS layering.
  const auto augment = [&](std::int32_t root) {
    std::vector<std::int32_t> stack{root};
    std::vector<std::int32_t> via;  // right vertex used to step to stack[k+1]
    while (!stack.empty()) {
      const auto u = stack.back();
      auto& cur = cursor[static_cast<std::size_t>(u)];
      bool advanced = false;
      while (cur < adj[static_cast<std::size_t>(u)].size()) {
        const auto v = adj[static_cast<std::size_t>(u)][cur++];
        const auto w = match_r[static_cast<std::size_t>(v)];
        if (w == none) {
          via.push_back(v);
          for (std::size_t k = 0; k < stack.size(); ++k) {
            match_l[static_cast<std::size_t>(stack[k])] = via[k];
            match_r[static_cast<std::size_t>(via[k])] = stack[k];
          }
          return true;
        }
        if (level[static_cast<std::size_t>(w)] == level[static_cast<std::size_t>(u)] + 1) {
          via.push_back(v);
          stack.push_back(w);
          advanced = true;
          break;
        }
      }
      if (!advanced) {
        level[static_cast<std::size_t>(u)] = inf;
        stack.pop_back();
        if (!via.empty()) via.pop_back();
      }
    }
    return false;
  };

  while (bfs()) {
    std::fill(cursor.begin(), cursor.end(), 0);
    for (std::size_t u = 0; u < n_left; ++u) {
      if (match_l[u] == none) augment(static_cast<std::int32_t>(u));
    }
  }
  return match_l;
}

}  // namespace lanediff
