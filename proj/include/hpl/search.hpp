#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "hpl/gridworld.hpp"

namespace hpl {

struct NoPath : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Per-cell traversal cost, indexed like GridMap cells. Entering a cell
/// costs its field value; the floor of 1 keeps the Manhattan heuristic
/// admissible for astar.
struct CostField {
  std::vector<double> cost;

  double at(const GridMap& map, Cell c) const { return cost[map.index(c)]; }

  static CostField uniform(const GridMap& map, double value = 1.0) {
    if (value < 1.0) throw std::invalid_argument("cost floor is 1");
    return CostField{std::vector<double>(map.cell_count(), value)};
  }
};

struct SearchResult {
  Path path;
  double cost = 0.0;
  std::size_t expanded = 0;
};

namespace detail {

/// Shared best-first search. `heuristic(cell)` must be admissible for the
/// field (0 for Dijkstra). Ties on the queue key break lexicographically by
/// (y, x) so every run is reproducible.
template <typename H>
SearchResult best_first(const CostField& field, const GridMap& map, Cell start, Cell goal,
                        H&& heuristic) {
  if (!map.is_passable(start)) throw std::invalid_argument("start is not passable");
  if (!map.is_passable(goal)) throw std::invalid_argument("goal is not passable");
  if (field.cost.size() != map.cell_count())
    throw std::invalid_argument("cost field does not match the map");

  const std::size_t n = map.cell_count();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> g(n, kInf);
  std::vector<std::int32_t> parent(n, -1);
  std::vector<std::uint8_t> closed(n, 0);

  using QItem = std::tuple<double, int, int, std::uint32_t>;  // (key, y, x, index)
  std::priority_queue<QItem, std::vector<QItem>, std::greater<QItem>> open;

  std::size_t s = map.index(start);
  g[s] = 0.0;
  open.emplace(heuristic(start), start.y, start.x, static_cast<std::uint32_t>(s));

  SearchResult res;
  std::size_t goal_idx = map.index(goal);
  while (!open.empty()) {
    auto [key, qy, qx, idx] = open.top();
    open.pop();
    if (closed[idx]) continue;  // stale entry
    closed[idx] = 1;
    ++res.expanded;
    if (idx == goal_idx) {
      res.cost = g[idx];
      std::vector<Cell> cells;
      for (std::int64_t cur = static_cast<std::int64_t>(idx); cur != -1; cur = parent[cur])
        cells.push_back(map.cell_at(static_cast<std::size_t>(cur)));
      std::reverse(cells.begin(), cells.end());
      res.path = Path{std::move(cells)};
      return res;
    }
    Cell c = map.cell_at(idx);
    for (Action a : {Action::Up, Action::Down, Action::Left, Action::Right}) {
      Cell nb = step(c, a);
      if (!map.is_passable(nb)) continue;
      std::size_t ni = map.index(nb);
      if (closed[ni]) continue;
      double ng = g[idx] + field.cost[ni];
      if (ng < g[ni]) {
        g[ni] = ng;
        parent[ni] = static_cast<std::int32_t>(idx);
        open.emplace(ng + heuristic(nb), nb.y, nb.x, static_cast<std::uint32_t>(ni));
      }
    }
  }
  throw NoPath("no path from (" + std::to_string(start.x) + "," + std::to_string(start.y) +
               ") to (" + std::to_string(goal.x) + "," + std::to_string(goal.y) + ")");
}

}  // namespace detail

inline SearchResult dijkstra(const CostField& field, const GridMap& map, Cell start, Cell goal) {
  return detail::best_first(field, map, start, goal, [](Cell) { return 0.0; });
}

inline SearchResult astar(const CostField& field, const GridMap& map, Cell start, Cell goal) {
  return detail::best_first(field, map, start, goal,
                            [goal](Cell c) { return static_cast<double>(manhattan(c, goal)); });
}

}  // namespace hpl
