#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <queue>
#include <stdexcept>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "hpl/pipeline.hpp"
#include "hpl/search.hpp"

namespace hpl {

struct NoJointPlan : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Space-time occupancy of already-planned agents. An agent that has
/// reached its goal parks there forever.
class ReservationTable {
 public:
  explicit ReservationTable(const GridMap& map)
      : map_(&map), last_vertex_t_(map.cell_count(), -1) {}

  void reserve_path(const Path& p) {
    for (std::size_t t = 0; t < p.cells.size(); ++t) {
      std::size_t idx = map_->index(p.cells[t]);
      vertex_.insert(key(idx, t));
      last_vertex_t_[idx] = std::max(last_vertex_t_[idx], static_cast<std::int64_t>(t));
      if (t + 1 < p.cells.size())
        edge_.insert(edge_key(idx, map_->index(p.cells[t + 1]), t));
    }
    parked_.push_back({map_->index(p.cells.back()), p.cells.size() - 1});
  }

  bool vertex_blocked(std::size_t cell_idx, std::size_t t) const {
    if (vertex_.count(key(cell_idx, t))) return true;
    for (auto [idx, since] : parked_)
      if (idx == cell_idx && t >= since) return true;
    return false;
  }

  /// True when moving from -> to over [t, t+1] would swap with an earlier
  /// agent moving to -> from.
  bool swap_blocked(std::size_t from_idx, std::size_t to_idx, std::size_t t) const {
    return edge_.count(edge_key(to_idx, from_idx, t)) != 0;
  }

  /// True when some earlier agent still passes through cell_idx at any
  /// time >= t (an agent cannot park where traffic is still due).
  bool needed_later(std::size_t cell_idx, std::size_t t) const {
    return last_vertex_t_[cell_idx] >= static_cast<std::int64_t>(t);
  }

 private:
  std::uint64_t key(std::size_t cell_idx, std::size_t t) const {
    return static_cast<std::uint64_t>(t) * map_->cell_count() + cell_idx;
  }
  std::uint64_t edge_key(std::size_t from, std::size_t to, std::size_t t) const {
    return (static_cast<std::uint64_t>(t) * map_->cell_count() + from) * map_->cell_count() + to;
  }

  const GridMap* map_;
  std::unordered_set<std::uint64_t> vertex_;
  std::unordered_set<std::uint64_t> edge_;
  std::vector<std::int64_t> last_vertex_t_;
  std::vector<std::pair<std::size_t, std::size_t>> parked_;  // (cell, parked since)
};

namespace detail {

/// Space-time A* under reservations. Moves cost the field value of the
/// destination; waiting costs 1 per step. Admissible heuristic: Manhattan
/// distance (every remaining move costs at least 1).
inline Path spacetime_astar(const CostField& field, const GridMap& map, Cell start, Cell goal,
                            const ReservationTable& table, std::size_t horizon) {
  const std::size_t n = map.cell_count();
  const std::size_t goal_idx = map.index(goal);
  constexpr double kInf = std::numeric_limits<double>::infinity();

  auto state_key = [n](std::size_t cell, std::size_t t) { return t * n + cell; };
  std::vector<double> g((horizon + 1) * n, kInf);
  std::vector<std::int64_t> parent((horizon + 1) * n, -1);

  // (f, t, y, x, state) — lexicographic tie-break keeps runs reproducible
  using QItem = std::tuple<double, std::size_t, int, int, std::uint64_t>;
  std::priority_queue<QItem, std::vector<QItem>, std::greater<QItem>> open;

  std::size_t s_idx = map.index(start);
  if (table.vertex_blocked(s_idx, 0))
    throw NoJointPlan("start cell reserved by an earlier agent at t=0");
  g[state_key(s_idx, 0)] = 0.0;
  open.emplace(manhattan(start, goal), 0, start.y, start.x, state_key(s_idx, 0));

  std::vector<std::uint8_t> closed((horizon + 1) * n, 0);
  while (!open.empty()) {
    auto [f, t, qy, qx, sk] = open.top();
    open.pop();
    if (closed[sk]) continue;
    closed[sk] = 1;
    std::size_t cell = sk % n;
    if (cell == goal_idx && !table.needed_later(cell, t)) {
      std::vector<Cell> cells;
      for (std::int64_t cur = static_cast<std::int64_t>(sk); cur != -1; cur = parent[cur])
        cells.push_back(map.cell_at(static_cast<std::size_t>(cur) % n));
      std::reverse(cells.begin(), cells.end());
      return Path{std::move(cells)};
    }
    if (t >= horizon) continue;
    Cell c = map.cell_at(cell);
    auto consider = [&](Cell nxt, double step_cost) {
      std::size_t ni = map.index(nxt);
      if (table.vertex_blocked(ni, t + 1)) return;
      if (ni != cell && table.swap_blocked(cell, ni, t)) return;
      std::uint64_t nk = state_key(ni, t + 1);
      if (closed[nk]) return;
      double ng = g[sk] + step_cost;
      if (ng < g[nk]) {
        g[nk] = ng;
        parent[nk] = static_cast<std::int64_t>(sk);
        open.emplace(ng + manhattan(nxt, goal), t + 1, nxt.y, nxt.x, nk);
      }
    };
    for (Action a : {Action::Up, Action::Down, Action::Left, Action::Right}) {
      Cell nxt = step(c, a);
      if (map.is_passable(nxt)) consider(nxt, field.cost[map.index(nxt)]);
    }
    consider(c, 1.0);  // wait
  }
  throw NoJointPlan("no conflict-free path within the horizon");
}

}  // namespace detail

struct JointPlan {
  std::vector<Path> paths;
  std::vector<std::string> provenance;  // per agent
};

/// Prioritized planning: agents are planned in index order; the first agent
/// runs the full pipeline, later agents run space-time search against the
/// reservations of everyone planned before them. The result is always
/// conflict-free or an error — never a silently conflicting plan.
inline JointPlan prioritized_multi(const GridMap& map, const Scenario& scenario, Models& models,
                                   const PipelineConfig& config, std::uint64_t seed = 0) {
  if (scenario.agents.empty()) throw std::invalid_argument("prioritized_multi: no agents");
  const std::size_t horizon = 4 * static_cast<std::size_t>(map.width + map.height);

  CostField field = CostField::uniform(map);
  if (config.use_gnn && models.gcn) {
    EnvGraph graph = build_graph(map, scenario);
    field = bias_costs(map, score_nodes(graph, *models.gcn), config.lambda);
  }

  JointPlan plan;
  ReservationTable table(map);
  for (std::size_t i = 0; i < scenario.agents.size(); ++i) {
    const auto& agent = scenario.agents[i];
    Path path;
    std::string prov;
    if (i == 0) {
      PlanResult r = hybrid_plan(map, agent.start, agent.goal, models, config, seed);
      path = std::move(r.path);
      prov = std::move(r.provenance);
    } else {
      try {
        path = detail::spacetime_astar(field, map, agent.start, agent.goal, table, horizon);
      } catch (const NoJointPlan& e) {
        throw NoJointPlan("agent " + std::to_string(i) + ": " + e.what());
      }
      prov = "spacetime-astar";
    }
    table.reserve_path(path);
    plan.paths.push_back(std::move(path));
    plan.provenance.push_back(std::move(prov));
  }
  return plan;
}

}  // namespace hpl
