#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lanediff/errors.hpp"
#include "lanediff/graph.hpp"

namespace lanediff {

// Graph JSON:
//   {"gsd_cm": 12.5, "name": "...", "directed": false,
//    "nodes": [{"id": 0, "x": 1.0, "y": 2.0}, ...], "edges": [[0, 1], ...]}
// Ids must be a permutation of 0..N-1. Non-finite numbers are rejected.

inline nlohmann::json graph_to_json(const LaneGraph& g) {
  nlohmann::json j;
  if (g.gsd_cm) {
    if (!std::isfinite(*g.gsd_cm)) throw ParameterError("gsd_cm must be finite");
    j["gsd_cm"] = *g.gsd_cm;
  }
  if (g.name) j["name"] = *g.name;
  auto nodes = nlohmann::json::array();
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const Point2 p = g.positions()[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw ParameterError("node " + std::to_string(i) + " has a non-finite position");
    }
    nodes.push_back({{"id", i}, {"x", p.x}, {"y", p.y}});
  }
  j["nodes"] = std::move(nodes);
  auto edges = nlohmann::json::array();
  for (const auto& e : g.edges()) edges.push_back({e.from, e.to});
  j["edges"] = std::move(edges);
  j["directed"] = g.directed;
  return j;
}

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + "." + key + ": missing field");
  return *it;
}

inline double require_number(const nlohmann::json& obj, const char* key, const std::string& where) {
  const auto& v = require_field(obj, key, where);
  if (!v.is_number()) throw ParseError(where + "." + key + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ParseError(where + "." + key + ": non-finite value");
  return d;
}

}  // namespace detail

inline LaneGraph graph_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("graph: top level must be an object");
  LaneGraph g;
  if (auto it = j.find("gsd_cm"); it != j.end() && !it->is_null()) {
    g.gsd_cm = detail::require_number(j, "gsd_cm", "graph");
  }
  if (auto it = j.find("name"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError("graph.name: expected a string");
    g.name = it->get<std::string>();
  }
  if (auto it = j.find("directed"); it != j.end()) {
    if (!it->is_boolean()) throw ParseError("graph.directed: expected a boolean");
    g.directed = it->get<bool>();
  }

  const auto& nodes = detail::require_field(j, "nodes", "graph");
  if (!nodes.is_array()) throw ParseError("graph.nodes: expected an array");
  std::vector<Point2> pos(nodes.size());
  std::vector<bool> seen(nodes.size(), false);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string where = "nodes[" + std::to_string(i) + "]";
    const auto& n = nodes[i];
    if (!n.is_object()) throw ParseError(where + ": expected an object");
    const auto& id_field = detail::require_field(n, "id", where);
    if (!id_field.is_number_integer()) throw ParseError(where + ".id: expected an integer");
    const auto id = id_field.get<long long>();
    if (id < 0 || static_cast<std::size_t>(id) >= nodes.size()) {
      throw ParseError(where + ".id: " + std::to_string(id) + " outside 0.." + std::to_string(nodes.size() - 1));
    }
    if (seen[static_cast<std::size_t>(id)]) throw ParseError(where + ".id: duplicate id " + std::to_string(id));
    seen[static_cast<std::size_t>(id)] = true;
    pos[static_cast<std::size_t>(id)] = {detail::require_number(n, "x", where), detail::require_number(n, "y", where)};
  }
  for (const auto& p : pos) g.add_node(p);

  const auto& edges = detail::require_field(j, "edges", "graph");
  if (!edges.is_array()) throw ParseError("graph.edges: expected an array");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string where = "edges[" + std::to_string(i) + "]";
    const auto& e = edges[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
      throw ParseError(where + ": expected [from, to] integer pair");
    }
    const auto a = e[0].get<long long>();
    const auto b = e[1].get<long long>();
    const auto n = static_cast<long long>(g.node_count());
    if (a < 0 || b < 0 || a >= n || b >= n) throw ParseError(where + ": references a missing node");
    try {
      g.add_edge(static_cast<NodeId>(a), static_cast<NodeId>(b));
    } catch (const ParameterError& err) {
      throw ParseError(where + ": " + err.what());
    }
  }
  return g;
}

inline LaneGraph parse_graph(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& err) {
    throw ParseError(std::string("graph JSON syntax error: ") + err.what());
  }
  return graph_from_json(j);
}

inline LaneGraph load_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open graph file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_graph(ss.str());
  } catch (const ParseError& err) {
    throw ParseError(path + ": " + err.what());
  }
}

inline void save_graph(const LaneGraph& g, const std::string& path) {
  const std::string text = graph_to_json(g).dump(1) + "\n";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write graph file '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing graph file '" + path + "'");
}

}  // namespace lanediff
