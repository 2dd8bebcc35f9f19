#include <catch2/catch_amalgamated.hpp>

#include "hpl/bfs_oracle.hpp"
#include "hpl/gridworld.hpp"
#include "hpl/rng.hpp"

using namespace hpl;

namespace {

GridMap from_rows(const std::vector<std::string>& rows) {
  std::string text = "type octile\nheight " + std::to_string(rows.size()) + "\nwidth " +
                     std::to_string(rows[0].size()) + "\nmap\n";
  for (const auto& r : rows) text += r + "\n";
  return parse_map(text);
}

GridMap random_map(Rng& rng, int w, int h, double density) {
  std::vector<std::uint8_t> cells(static_cast<std::size_t>(w) * h);
  bool any = false;
  for (auto& c : cells) {
    c = rng.bernoulli(density) ? 0 : 1;
    any |= c != 0;
  }
  if (!any) cells[0] = 1;
  return GridMap{w, h, std::move(cells)};
}

}  // namespace

TEST_CASE("parse_map accepts an all-passable body") {
  GridMap m = from_rows({"...", "...", "..."});
  CHECK(m.width == 3);
  CHECK(m.height == 3);
  CHECK(m.passable_count() == 9);
}

TEST_CASE("parse_map maps glyphs to passability") {
  GridMap m = from_rows({".@"});
  CHECK(m.is_passable({0, 0}));
  CHECK_FALSE(m.is_passable({1, 0}));

  GridMap trees = from_rows({".T.", "O.G"});
  CHECK_FALSE(trees.is_passable({1, 0}));
  CHECK_FALSE(trees.is_passable({0, 1}));
  CHECK(trees.is_passable({2, 1}));
}

TEST_CASE("parse_map rejects a body that disagrees with the header") {
  std::string text = "type octile\nheight 2\nwidth 3\nmap\n...\n...\n...\n";
  try {
    parse_map(text);
    FAIL("expected DimensionMismatch");
  } catch (const MapFormatError& e) {
    CHECK(e.kind == MapFormatError::Kind::DimensionMismatch);
  }

  std::string ragged = "type octile\nheight 2\nwidth 3\nmap\n...\n..\n";
  CHECK_THROWS_AS(parse_map(ragged), MapFormatError);
}

TEST_CASE("parse_map rejects unknown glyphs and bad headers") {
  try {
    parse_map("type octile\nheight 1\nwidth 3\nmap\n.x.\n");
    FAIL("expected IllegalCharacter");
  } catch (const MapFormatError& e) {
    CHECK(e.kind == MapFormatError::Kind::IllegalCharacter);
  }
  try {
    parse_map("type quad\nheight 1\nwidth 1\nmap\n.\n");
    FAIL("expected MalformedHeader");
  } catch (const MapFormatError& e) {
    CHECK(e.kind == MapFormatError::Kind::MalformedHeader);
  }
}

TEST_CASE("documented-but-unmodeled glyphs block with a warning") {
  std::vector<std::string> warnings;
  GridMap m = parse_map("type octile\nheight 1\nwidth 2\nmap\n.S\n", &warnings);
  CHECK_FALSE(m.is_passable({1, 0}));
  REQUIRE(warnings.size() == 1);
}

TEST_CASE("map round-trips through render and parse") {
  Rng rng(123);
  for (int i = 0; i < 100; ++i) {
    int w = 1 + static_cast<int>(rng.uniform_int(12));
    int h = 1 + static_cast<int>(rng.uniform_int(12));
    GridMap m = random_map(rng, w, h, 0.3);
    CHECK(parse_map(render_map(m)) == m);
  }
}

TEST_CASE("parse_scenario reads agents in file order with hints") {
  GridMap m = from_rows({"..."});
  std::string scen =
      "version 1\n"
      "0\tm.map\t3\t1\t0\t0\t2\t0\t2\n"
      "0\tm.map\t3\t1\t2\t0\t0\t0\t2\n";
  Scenario s = parse_scenario(scen, m);
  REQUIRE(s.agents.size() == 2);
  CHECK(s.agents[0].start == Cell{0, 0});
  CHECK(s.agents[0].goal == Cell{2, 0});
  CHECK(s.agents[0].optimal_hint == 2.0);
  CHECK(s.agents[1].start == Cell{2, 0});
}

TEST_CASE("parse_scenario rejects blocked or out-of-range endpoints") {
  GridMap m = from_rows({".@."});
  try {
    parse_scenario("version 1\n0\tm\t3\t1\t1\t0\t2\t0\t1\n", m);
    FAIL("expected StartOrGoalBlocked");
  } catch (const ScenarioError& e) {
    CHECK(e.kind == ScenarioError::Kind::StartOrGoalBlocked);
  }
  try {
    parse_scenario("version 1\n0\tm\t3\t1\t0\t0\t3\t0\t1\n", m);
    FAIL("expected OutOfBounds");
  } catch (const ScenarioError& e) {
    CHECK(e.kind == ScenarioError::Kind::OutOfBounds);
  }
  CHECK_THROWS_AS(parse_scenario("version 1\n0\tm\t3\t1\t0\t0\n", m), ScenarioError);
}

TEST_CASE("neighbors clips to bounds and skips blocked cells") {
  GridMap open = GridMap::open(3, 3);
  CHECK(neighbors(open, {1, 1}).size() == 4);
  CHECK(neighbors(open, {0, 0}).size() == 2);

  GridMap m = from_rows({".@.", "...", "..."});
  auto nb = neighbors(m, {1, 1});
  REQUIRE(nb.size() == 3);  // the blocked cell above is excluded
  for (Cell c : nb) CHECK(c != Cell{1, 0});
}

TEST_CASE("neighbors is symmetric on random maps") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    GridMap m = random_map(rng, 6, 6, 0.35);
    for (std::size_t i = 0; i < m.cell_count(); ++i) {
      if (!m.passable[i]) continue;
      Cell a = m.cell_at(i);
      for (Cell b : neighbors(m, a)) {
        auto back = neighbors(m, b);
        CHECK(std::find(back.begin(), back.end(), a) != back.end());
      }
    }
  }
}

TEST_CASE("validate_path checks endpoints, adjacency and passability") {
  GridMap m = from_rows({"...", ".@.", "..."});
  Cell s{0, 0}, g{0, 0};
  CHECK(validate_path(m, Path{{s}}, s, g));  // zero-length path

  Path diagonal{{{0, 0}, {1, 1}}};
  CHECK_FALSE(validate_path(m, diagonal, {0, 0}, {1, 1}));

  Path through_wall{{{0, 1}, {1, 1}, {2, 1}}};
  CHECK_FALSE(validate_path(m, through_wall, {0, 1}, {2, 1}));

  Path ok{{{0, 0}, {1, 0}, {1, 0}, {2, 0}}};  // contains a Wait
  CHECK(validate_path(m, ok, {0, 0}, {2, 0}));
}

TEST_CASE("simulate_joint reports no conflicts for disjoint paths") {
  GridMap m = GridMap::open(3, 3);
  Path a{{{0, 0}, {1, 0}, {2, 0}}};
  Path b{{{0, 2}, {1, 2}, {2, 2}}};
  CHECK(simulate_joint(m, {a, b}).clean());
}

TEST_CASE("simulate_joint finds a vertex conflict") {
  // positions per timestep, by hand:
  //   agent0: (0,0) (1,0) (2,0)
  //   agent1: (2,0) (1,0) (0,0)   -> both at (1,0) at t=1
  GridMap m = GridMap::open(3, 1);
  Path a{{{0, 0}, {1, 0}, {2, 0}}};
  Path b{{{2, 0}, {1, 0}, {0, 0}}};
  auto rep = simulate_joint(m, {a, b});
  REQUIRE(rep.vertex_conflicts.size() == 1);
  CHECK(rep.vertex_conflicts[0].time == 1);
  CHECK(rep.vertex_conflicts[0].cell == Cell{1, 0});
}

TEST_CASE("simulate_joint finds a swap conflict") {
  // agent0 (0,0)->(1,0) while agent1 (1,0)->(0,0) over the t=0 step
  GridMap m = GridMap::open(2, 1);
  Path a{{{0, 0}, {1, 0}}};
  Path b{{{1, 0}, {0, 0}}};
  auto rep = simulate_joint(m, {a, b});
  REQUIRE(rep.swap_conflicts.size() == 1);
  CHECK(rep.swap_conflicts[0].time == 0);
}

TEST_CASE("simulate_joint pads shorter paths by waiting at their goal") {
  GridMap m = GridMap::open(3, 1);
  Path arrives{{{1, 0}, {1, 0}}};      // parks at (1,0)
  Path crosses{{{0, 0}, {0, 0}, {1, 0}, {2, 0}}};
  auto rep = simulate_joint(m, {crosses, arrives});
  CHECK(rep.vertex_conflicts.size() == 1);  // crossing hits the parked agent at t=2
  CHECK(rep.vertex_conflicts[0].time == 2);
}

TEST_CASE("a valid single path has no self conflicts") {
  Rng rng(5);
  GridMap m = GridMap::open(4, 4);
  Path p{{{0, 0}, {1, 0}, {1, 1}, {1, 1}, {2, 1}}};
  REQUIRE(validate_path(m, p, {0, 0}, {2, 1}));
  CHECK(simulate_joint(m, {p}).clean());
}

TEST_CASE("simulate_joint is permutation covariant") {
  GridMap m = GridMap::open(3, 1);
  Path a{{{0, 0}, {1, 0}, {2, 0}}};
  Path b{{{2, 0}, {1, 0}, {0, 0}}};
  auto fwd = simulate_joint(m, {a, b});
  auto rev = simulate_joint(m, {b, a});
  REQUIRE(fwd.vertex_conflicts.size() == rev.vertex_conflicts.size());
  CHECK(fwd.vertex_conflicts[0].time == rev.vertex_conflicts[0].time);
  CHECK(fwd.vertex_conflicts[0].cell == rev.vertex_conflicts[0].cell);
  // agent indices permute with the order, nothing else changes
  CHECK(fwd.vertex_conflicts[0].agent_i == 0);
  CHECK(rev.vertex_conflicts[0].agent_i == 0);
}

TEST_CASE("follow_actions truncates at the first illegal move") {
  GridMap m = from_rows({".@."});
  auto tr = follow_actions(m, {0, 0}, {Action::Right, Action::Right});
  CHECK(tr.first_invalid == 0);
  CHECK(tr.cells.size() == 1);

  auto ok = follow_actions(GridMap::open(3, 1), {0, 0}, {Action::Right, Action::Right});
  CHECK(ok.first_invalid == 2);
  CHECK(ok.cells.back() == Cell{2, 0});
}
