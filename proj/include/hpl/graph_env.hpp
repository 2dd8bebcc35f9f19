#pragma once

#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hpl/gridworld.hpp"
#include "hpl/tensor.hpp"

namespace hpl {

/// Cargo weight per cell; cells without an entry carry 0.
struct CargoField {
  std::map<std::pair<int, int>, double> weight;

  double at(Cell c) const {
    auto it = weight.find({c.x, c.y});
    return it == weight.end() ? 0.0 : it->second;
  }
  void set(Cell c, double w) { weight[{c.x, c.y}] = w; }
};

/// Lines of `x y weight`. Blank lines and '#' comments allowed.
inline CargoField parse_cargo(const std::string& text, const GridMap& map) {
  CargoField field;
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int x, y;
    double w;
    if (!(ls >> x >> y >> w) || w < 0.0)
      throw std::runtime_error("cargo line " + std::to_string(lineno) + " malformed");
    Cell c{x, y};
    if (!map.is_passable(c))
      throw std::runtime_error("cargo line " + std::to_string(lineno) +
                               " places cargo on a blocked or out-of-bounds cell");
    field.set(c, w);
  }
  return field;
}

constexpr std::size_t kNodeFeatureDim = 6;

/// Undirected weighted graph over the passable cells of a map, with the
/// node feature matrix and normalized adjacency the graph encoder consumes.
/// Nodes are ordered row-major so two builds of the same inputs agree
/// exactly.
struct EnvGraph {
  struct Edge {
    std::size_t i, j;  // node indices, i < j
    double weight;
  };

  std::vector<Cell> nodes;
  std::vector<Edge> edges;
  Tensor features;        // N × kNodeFeatureDim
  Tensor norm_adjacency;  // N × N

  std::size_t node_of(const GridMap& map, Cell c) const {
    // nodes are row-major passable cells; map from cell index
    return node_index_[map.index(c)];
  }

  std::vector<std::size_t> node_index_;  // cell index -> node id (or npos)
};

/// Â = D^{-1/2} (A + I) D^{-1/2} with D the row sums of A + I.
inline Tensor normalized_adjacency(std::size_t n, const std::vector<EnvGraph::Edge>& edges) {
  Tensor a(n, n);
  for (const auto& e : edges) {
    a.at(e.i, e.j) += e.weight;
    a.at(e.j, e.i) += e.weight;
  }
  for (std::size_t i = 0; i < n; ++i) a.at(i, i) += 1.0;
  std::vector<double> dinv(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) d += a.at(i, j);
    dinv[i] = 1.0 / std::sqrt(d);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a.at(i, j) *= dinv[i] * dinv[j];
  return a;
}

inline Tensor normalized_adjacency(const EnvGraph& g) {
  return normalized_adjacency(g.nodes.size(), g.edges);
}

/// Node features: [1, cargo, start-occupancy, goal, x/width, y/height].
inline EnvGraph build_graph(const GridMap& map, const Scenario& scenario,
                            const CargoField& cargo = {}) {
  EnvGraph g;
  g.node_index_.assign(map.cell_count(), static_cast<std::size_t>(-1));
  for (std::size_t idx = 0; idx < map.cell_count(); ++idx) {
    if (!map.passable[idx]) continue;
    g.node_index_[idx] = g.nodes.size();
    g.nodes.push_back(map.cell_at(idx));
  }
  const std::size_t n = g.nodes.size();

  // 4-adjacent passable pairs; unit weight (adjacent cell centers are one
  // apart)
  for (std::size_t v = 0; v < n; ++v) {
    Cell c = g.nodes[v];
    for (Action a : {Action::Down, Action::Right}) {  // each undirected pair once
      Cell nb = step(c, a);
      if (!map.is_passable(nb)) continue;
      std::size_t u = g.node_index_[map.index(nb)];
      g.edges.push_back({std::min(v, u), std::max(v, u), 1.0});
    }
  }

  g.features = Tensor(n, kNodeFeatureDim);
  for (std::size_t v = 0; v < n; ++v) {
    Cell c = g.nodes[v];
    g.features.at(v, 0) = 1.0;
    g.features.at(v, 1) = cargo.at(c);
    g.features.at(v, 4) = static_cast<double>(c.x) / map.width;
    g.features.at(v, 5) = static_cast<double>(c.y) / map.height;
  }
  for (const auto& agent : scenario.agents) {
    if (!map.is_passable(agent.start) || !map.is_passable(agent.goal))
      throw std::invalid_argument("scenario does not fit the map");
    g.features.at(g.node_index_[map.index(agent.start)], 2) = 1.0;
    g.features.at(g.node_index_[map.index(agent.goal)], 3) = 1.0;
  }

  g.norm_adjacency = normalized_adjacency(n, g.edges);
  return g;
}

}  // namespace hpl
