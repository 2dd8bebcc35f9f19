#pragma once

#include <limits>
#include <queue>
#include <vector>

#include "hpl/gridworld.hpp"

namespace hpl::oracle {

constexpr int kUnreachable = -1;

/// Plain breadth-first distances over unit-cost 4-adjacency, kept separate
/// from the search module so it can serve as an independent reference for
/// it. Returns one distance per cell index, -1 where unreachable.
inline std::vector<int> bfs_distances(const GridMap& map, Cell source) {
  std::vector<int> dist(map.cell_count(), kUnreachable);
  if (!map.is_passable(source)) return dist;
  std::queue<Cell> q;
  dist[map.index(source)] = 0;
  q.push(source);
  while (!q.empty()) {
    Cell c = q.front();
    q.pop();
    int d = dist[map.index(c)];
    for (Action a : {Action::Up, Action::Down, Action::Left, Action::Right}) {
      Cell n = step(c, a);
      if (!map.is_passable(n)) continue;
      if (dist[map.index(n)] != kUnreachable) continue;
      dist[map.index(n)] = d + 1;
      q.push(n);
    }
  }
  return dist;
}

inline int bfs_distance(const GridMap& map, Cell source, Cell target) {
  auto dist = bfs_distances(map, source);
  return map.in_bounds(target) ? dist[map.index(target)] : kUnreachable;
}

}  // namespace hpl::oracle
