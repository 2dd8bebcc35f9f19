#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "hpl/gridworld.hpp"
#include "hpl/rng.hpp"
#include "hpl/search.hpp"

namespace hpl {

struct ExhaustedRetries : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Instance {
  GridMap map;
  Scenario scenario;
};

/// One random solvable instance: Bernoulli(density) blocking, agents with
/// pairwise-distinct passable starts and goals, each start-goal pair
/// connected (verified by search). Rejection-samples up to `retries`
/// attempts. optimal_hint is the unit-cost optimal path cost.
inline Instance generate_instance(int width, int height, double density, std::size_t agents,
                                  Rng& rng, std::size_t retries = 1000) {
  if (density < 0.0 || density > 0.45)
    throw std::invalid_argument("obstacle density must be in [0, 0.45]");
  if (agents == 0) throw std::invalid_argument("at least one agent");
  const std::size_t cells = static_cast<std::size_t>(width) * height;
  if (2 * agents > cells) throw std::invalid_argument("too many agents for the map");

  for (std::size_t attempt = 0; attempt < retries; ++attempt) {
    std::vector<std::uint8_t> grid(cells);
    for (auto& c : grid) c = rng.bernoulli(density) ? 0 : 1;
    std::vector<std::size_t> open_cells;
    for (std::size_t i = 0; i < cells; ++i)
      if (grid[i]) open_cells.push_back(i);
    if (open_cells.size() < 2 * agents) continue;
    GridMap map{width, height, std::move(grid)};

    std::vector<std::size_t> picks;  // starts then goals, all distinct
    bool ok = true;
    for (std::size_t k = 0; k < 2 * agents && ok; ++k) {
      for (std::size_t tries = 0;; ++tries) {
        if (tries >= 50) {
          ok = false;
          break;
        }
        std::size_t c = open_cells[rng.uniform_int(open_cells.size())];
        bool dup = false;
        for (std::size_t p : picks) dup |= p == c;
        if (!dup) {
          picks.push_back(c);
          break;
        }
      }
    }
    if (!ok) continue;

    Scenario scen;
    CostField unit = CostField::uniform(map);
    for (std::size_t a = 0; a < agents && ok; ++a) {
      Cell start = map.cell_at(picks[a]);
      Cell goal = map.cell_at(picks[agents + a]);
      try {
        SearchResult r = astar(unit, map, start, goal);
        scen.agents.push_back(AgentTask{start, goal, r.cost});
      } catch (const NoPath&) {
        ok = false;
      }
    }
    if (!ok) continue;
    return Instance{std::move(map), std::move(scen)};
  }
  throw ExhaustedRetries("no connected instance after " + std::to_string(retries) + " attempts");
}

inline std::vector<Instance> generate_instances(std::size_t count, int width, int height,
                                                double density, std::size_t agents,
                                                std::uint64_t seed) {
  std::vector<Instance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = Rng::fork(seed, i);
    out.push_back(generate_instance(width, height, density, agents, rng));
  }
  return out;
}

}  // namespace hpl
