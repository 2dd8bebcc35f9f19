#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "hpl/bfs_oracle.hpp"
#include "hpl/gridworld.hpp"
#include "hpl/io.hpp"
#include "hpl/rng.hpp"

namespace hpl {

struct FixtureDrift : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Checked-in reference inputs and expected values. Everything is a pure
/// function of the seed: `regenerate_fixtures` rebuilds the exact byte
/// content, `check_fixtures` diffs it against a directory on disk.
/// Expected costs are computed with the breadth-first oracle (tagged
/// bfs-oracle) or stated as hand-enumerated constants (tagged hand).
inline std::map<std::string, std::string> regenerate_fixtures(std::uint64_t seed) {
  std::map<std::string, std::string> files;

  GridMap corridor = GridMap::open(5, 1);
  files["corridor_1x5.map"] = render_map(corridor);

  GridMap open3 = GridMap::open(3, 3);
  files["open_3x3.map"] = render_map(open3);

  // 5×5 with the middle row walled except a gap at x=3
  GridMap wallgap = GridMap::open(5, 5);
  for (int x = 0; x < 5; ++x)
    if (x != 3) wallgap.passable[wallgap.index({x, 2})] = 0;
  files["wallgap_5x5.map"] = render_map(wallgap);

  // seeded random map; the attempt tag advances until the corner pair of
  // passable cells is connected, so the pick is reproducible
  GridMap random8 = GridMap::open(8, 8);
  Cell rnd_a{0, 0}, rnd_b{0, 0};
  int rnd_cost = -1;
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng = Rng::fork(seed, 0xf1a0 + attempt);
    std::vector<std::uint8_t> cells(64);
    for (auto& c : cells) c = rng.bernoulli(0.2) ? 0 : 1;
    std::size_t first = cells.size(), last = 0;
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (cells[i]) {
        if (first == cells.size()) first = i;
        last = i;
      }
    if (first >= last) continue;
    GridMap m{8, 8, cells};
    Cell a = m.cell_at(first), b = m.cell_at(last);
    int d = oracle::bfs_distance(m, a, b);
    if (d < 0) continue;
    random8 = std::move(m);
    rnd_a = a;
    rnd_b = b;
    rnd_cost = d;
    break;
  }
  files["random_8x8.map"] = render_map(random8);

  Scenario scen;
  scen.agents.push_back({{0, 0}, {2, 2}, 4.0});
  scen.agents.push_back({{2, 0}, {0, 2}, 4.0});
  files["open_3x3.scen"] = render_scenario(scen, "open_3x3.map", open3);

  // map sx sy gx gy expected_cost source
  std::string costs;
  costs += "# unit-cost shortest path lengths; source is the value's origin\n";
  costs += "corridor_1x5.map 0 0 4 0 4 hand\n";
  costs += "open_3x3.map 0 0 2 2 4 hand\n";
  auto bfs_line = [](const GridMap& m, const std::string& name, Cell a, Cell b) {
    int d = oracle::bfs_distance(m, a, b);
    return name + " " + std::to_string(a.x) + " " + std::to_string(a.y) + " " +
           std::to_string(b.x) + " " + std::to_string(b.y) + " " + std::to_string(d) +
           " bfs-oracle\n";
  };
  costs += bfs_line(wallgap, "wallgap_5x5.map", {0, 0}, {0, 4});
  costs += bfs_line(random8, "random_8x8.map", rnd_a, rnd_b);
  files["expected_costs.txt"] = costs;

  // action string, metrics config, expected metric triple
  std::string metrics;
  metrics += "# actions power step_time length time_s energy_j source\n";
  metrics += "RRRR 1 1 4 4 4 hand\n";
  metrics += "RWR 2 2 2 6 12 hand\n";
  metrics += "W 1 1 0 1 1 hand\n";
  metrics += "DDRR 2 1 4 4 8 hand\n";
  files["expected_metrics.txt"] = metrics;

  return files;
}

/// Compare regenerated fixture bytes against a checked-in directory.
inline void check_fixtures(const std::string& dir, std::uint64_t seed) {
  auto files = regenerate_fixtures(seed);
  for (const auto& [name, content] : files) {
    std::string on_disk;
    try {
      on_disk = read_file(dir + "/" + name);
    } catch (const std::exception&) {
      throw FixtureDrift("fixture '" + name + "' is missing from " + dir);
    }
    if (on_disk != content) throw FixtureDrift("fixture '" + name + "' differs from regeneration");
  }
}

inline void write_fixtures(const std::string& dir, std::uint64_t seed) {
  for (const auto& [name, content] : regenerate_fixtures(seed))
    write_file_atomic(dir + "/" + name, content);
}

constexpr std::uint64_t kFixtureSeed = 7;

}  // namespace hpl
