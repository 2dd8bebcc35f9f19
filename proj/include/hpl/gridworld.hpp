#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hpl {

struct MapFormatError : std::runtime_error {
  enum class Kind { MalformedHeader, IllegalCharacter, DimensionMismatch };
  Kind kind;
  MapFormatError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

struct ScenarioError : std::runtime_error {
  enum class Kind { OutOfBounds, StartOrGoalBlocked, MalformedLine };
  Kind kind;
  ScenarioError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(Cell a, Cell b) { return a.x == b.x && a.y == b.y; }
  friend bool operator!=(Cell a, Cell b) { return !(a == b); }
  // lexicographic by (y, x); also the search tie-break order
  friend bool operator<(Cell a, Cell b) { return a.y != b.y ? a.y < b.y : a.x < b.x; }
};

enum class Action { Up, Down, Left, Right, Wait };

constexpr std::array<Action, 5> kAllActions = {Action::Up, Action::Down, Action::Left,
                                               Action::Right, Action::Wait};

inline const char* action_name(Action a) {
  switch (a) {
    case Action::Up: return "U";
    case Action::Down: return "D";
    case Action::Left: return "L";
    case Action::Right: return "R";
    case Action::Wait: return "W";
  }
  return "?";
}

/// Unchecked move. Up decreases y (row 0 is the top line of the map file).
inline Cell step(Cell c, Action a) {
  switch (a) {
    case Action::Up: return {c.x, c.y - 1};
    case Action::Down: return {c.x, c.y + 1};
    case Action::Left: return {c.x - 1, c.y};
    case Action::Right: return {c.x + 1, c.y};
    case Action::Wait: return c;
  }
  return c;
}

/// Occupancy grid in file coordinates: x = column, y = row, (0,0) top-left.
struct GridMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> passable;  // row-major, passable[y*width + x]

  bool in_bounds(Cell c) const { return c.x >= 0 && c.x < width && c.y >= 0 && c.y < height; }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * width + c.x; }
  Cell cell_at(std::size_t idx) const {
    return {static_cast<int>(idx % width), static_cast<int>(idx / width)};
  }
  bool is_passable(Cell c) const { return in_bounds(c) && passable[index(c)] != 0; }
  std::size_t cell_count() const { return passable.size(); }

  std::size_t passable_count() const {
    std::size_t n = 0;
    for (auto p : passable) n += p != 0;
    return n;
  }

  static GridMap make(int w, int h, std::vector<std::uint8_t> cells) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("grid dimensions must be positive");
    if (cells.size() != static_cast<std::size_t>(w) * h)
      throw std::invalid_argument("cell count does not match dimensions");
    GridMap m{w, h, std::move(cells)};
    if (m.passable_count() == 0) throw std::invalid_argument("map has no passable cells");
    return m;
  }

  static GridMap open(int w, int h) {
    return make(w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 1));
  }

  friend bool operator==(const GridMap& a, const GridMap& b) {
    return a.width == b.width && a.height == b.height && a.passable == b.passable;
  }
};

struct AgentTask {
  Cell start;
  Cell goal;
  std::optional<double> optimal_hint;  // final column of the scen line, when known
};

struct Scenario {
  std::vector<AgentTask> agents;
};

/// A cell sequence; consecutive cells are identical (a Wait) or 4-adjacent.
struct Path {
  std::vector<Cell> cells;
  std::size_t timesteps() const { return cells.empty() ? 0 : cells.size() - 1; }
};

struct ConflictReport {
  struct Vertex {
    int time;  // timestep at which both agents occupy cell
    Cell cell;
    int agent_i, agent_j;  // agent_i < agent_j
  };
  struct Swap {
    int time;  // departure timestep; the exchange happens over [time, time+1]
    Cell a, b;
    int agent_i, agent_j;
  };
  std::vector<Vertex> vertex_conflicts;
  std::vector<Swap> swap_conflicts;
  bool clean() const { return vertex_conflicts.empty() && swap_conflicts.empty(); }
};

namespace detail {

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char ch : text) {
    if (ch == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) {
    if (cur.back() == '\r') cur.pop_back();
    lines.push_back(cur);
  }
  return lines;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace detail

/// Parse a movingai .map file:
///   type octile / height H / width W / map / H rows of W glyphs.
/// '.' and 'G' are passable; '@', 'T', 'O' blocked. 'S' and 'W' are
/// documented glyphs we do not model; they are treated as blocked and
/// reported through `warnings`.
inline GridMap parse_map(const std::string& text, std::vector<std::string>* warnings = nullptr) {
  using K = MapFormatError::Kind;
  auto lines = detail::split_lines(text);
  if (lines.size() < 4) throw MapFormatError(K::MalformedHeader, "map header truncated");
  if (lines[0] != "type octile")
    throw MapFormatError(K::MalformedHeader, "expected 'type octile', got '" + lines[0] + "'");

  auto parse_dim = [&](const std::string& line, const std::string& key) {
    auto toks = detail::split_ws(line);
    if (toks.size() != 2 || toks[0] != key)
      throw MapFormatError(K::MalformedHeader, "expected '" + key + " <n>', got '" + line + "'");
    int v = 0;
    try {
      v = std::stoi(toks[1]);
    } catch (const std::exception&) {
      throw MapFormatError(K::MalformedHeader, key + " is not a number: '" + toks[1] + "'");
    }
    if (v <= 0) throw MapFormatError(K::MalformedHeader, key + " must be positive");
    return v;
  };
  int height = parse_dim(lines[1], "height");
  int width = parse_dim(lines[2], "width");
  if (lines[3] != "map") throw MapFormatError(K::MalformedHeader, "expected 'map' line");

  std::vector<std::string> body;
  for (std::size_t i = 4; i < lines.size(); ++i) {
    if (lines[i].empty() && i + 1 == lines.size()) break;  // trailing blank line
    body.push_back(lines[i]);
  }
  if (static_cast<int>(body.size()) != height)
    throw MapFormatError(K::DimensionMismatch,
                         "body has " + std::to_string(body.size()) + " rows, header says " +
                             std::to_string(height));

  std::vector<std::uint8_t> cells;
  cells.reserve(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const std::string& row = body[y];
    if (static_cast<int>(row.size()) != width)
      throw MapFormatError(K::DimensionMismatch, "row " + std::to_string(y) + " has " +
                                                     std::to_string(row.size()) +
                                                     " cells, header says " + std::to_string(width));
    for (int x = 0; x < width; ++x) {
      char g = row[x];
      switch (g) {
        case '.':
        case 'G':
          cells.push_back(1);
          break;
        case '@':
        case 'T':
        case 'O':
          cells.push_back(0);
          break;
        case 'S':
        case 'W':
          cells.push_back(0);
          if (warnings)
            warnings->push_back("glyph '" + std::string(1, g) + "' at (" + std::to_string(x) +
                                "," + std::to_string(y) + ") treated as blocked");
          break;
        default:
          throw MapFormatError(K::IllegalCharacter, "unknown glyph '" + std::string(1, g) +
                                                        "' at (" + std::to_string(x) + "," +
                                                        std::to_string(y) + ")");
      }
    }
  }
  return GridMap::make(width, height, std::move(cells));
}

inline std::string render_map(const GridMap& m) {
  std::string out = "type octile\nheight " + std::to_string(m.height) + "\nwidth " +
                    std::to_string(m.width) + "\nmap\n";
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x)
      out.push_back(m.passable[static_cast<std::size_t>(y) * m.width + x] ? '.' : '@');
    out.push_back('\n');
  }
  return out;
}

/// Parse a movingai .scen file against its map. Lines are
///   bucket map_name map_width map_height start_x start_y goal_x goal_y optimal
inline Scenario parse_scenario(const std::string& text, const GridMap& map) {
  using K = ScenarioError::Kind;
  auto lines = detail::split_lines(text);
  if (lines.empty() || lines[0].rfind("version", 0) != 0)
    throw ScenarioError(K::MalformedLine, "missing 'version' header line");

  Scenario scen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto toks = detail::split_ws(lines[i]);
    if (toks.size() != 9)
      throw ScenarioError(K::MalformedLine,
                          "line " + std::to_string(i) + ": expected 9 fields, got " +
                              std::to_string(toks.size()));
    int w, h, sx, sy, gx, gy;
    double opt;
    try {
      w = std::stoi(toks[2]);
      h = std::stoi(toks[3]);
      sx = std::stoi(toks[4]);
      sy = std::stoi(toks[5]);
      gx = std::stoi(toks[6]);
      gy = std::stoi(toks[7]);
      opt = std::stod(toks[8]);
    } catch (const std::exception&) {
      throw ScenarioError(K::MalformedLine, "line " + std::to_string(i) + ": non-numeric field");
    }
    if (w != map.width || h != map.height)
      throw ScenarioError(K::MalformedLine, "line " + std::to_string(i) +
                                                ": declared map dimensions do not match");
    Cell start{sx, sy}, goal{gx, gy};
    if (!map.in_bounds(start) || !map.in_bounds(goal))
      throw ScenarioError(K::OutOfBounds, "line " + std::to_string(i) + ": cell out of bounds");
    if (!map.is_passable(start) || !map.is_passable(goal))
      throw ScenarioError(K::StartOrGoalBlocked,
                          "line " + std::to_string(i) + ": start or goal on a blocked cell");
    scen.agents.push_back(AgentTask{start, goal, opt});
  }
  if (scen.agents.empty()) throw ScenarioError(K::MalformedLine, "scenario lists no agents");
  return scen;
}

inline std::string render_scenario(const Scenario& scen, const std::string& map_name,
                                   const GridMap& map) {
  std::string out = "version 1\n";
  for (const auto& a : scen.agents) {
    double hint = a.optimal_hint.value_or(0.0);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.8g", hint);
    out += "0\t" + map_name + "\t" + std::to_string(map.width) + "\t" +
           std::to_string(map.height) + "\t" + std::to_string(a.start.x) + "\t" +
           std::to_string(a.start.y) + "\t" + std::to_string(a.goal.x) + "\t" +
           std::to_string(a.goal.y) + "\t" + buf + "\n";
  }
  return out;
}

/// Passable 4-neighbors of c, in Up, Down, Left, Right order.
inline std::vector<Cell> neighbors(const GridMap& map, Cell c) {
  std::vector<Cell> out;
  out.reserve(4);
  for (Action a : {Action::Up, Action::Down, Action::Left, Action::Right}) {
    Cell n = step(c, a);
    if (map.is_passable(n)) out.push_back(n);
  }
  return out;
}

/// The action taking a to b, if they are equal or 4-adjacent.
inline std::optional<Action> action_between(Cell a, Cell b) {
  if (a == b) return Action::Wait;
  int dx = b.x - a.x, dy = b.y - a.y;
  if (dx == 0 && dy == -1) return Action::Up;
  if (dx == 0 && dy == 1) return Action::Down;
  if (dx == -1 && dy == 0) return Action::Left;
  if (dx == 1 && dy == 0) return Action::Right;
  return std::nullopt;
}

inline std::vector<Action> derive_actions(const Path& p) {
  std::vector<Action> acts;
  for (std::size_t i = 0; i + 1 < p.cells.size(); ++i) {
    auto a = action_between(p.cells[i], p.cells[i + 1]);
    if (!a) throw std::invalid_argument("path contains a non-adjacent step");
    acts.push_back(*a);
  }
  return acts;
}

inline bool validate_path(const GridMap& map, const Path& path, Cell start, Cell goal) {
  if (path.cells.empty()) return false;
  if (path.cells.front() != start || path.cells.back() != goal) return false;
  for (std::size_t i = 0; i < path.cells.size(); ++i) {
    if (!map.is_passable(path.cells[i])) return false;
    if (i + 1 < path.cells.size() && !action_between(path.cells[i], path.cells[i + 1]))
      return false;
  }
  return true;
}

/// Result of executing an action string from a start cell: the visited
/// cells up to (not including) the first invalid move, and that move's index
/// (== actions.size() when every action was legal).
struct ActionTrace {
  std::vector<Cell> cells;
  std::size_t first_invalid;
};

inline ActionTrace follow_actions(const GridMap& map, Cell start,
                                  const std::vector<Action>& actions) {
  ActionTrace tr;
  tr.cells.push_back(start);
  tr.first_invalid = actions.size();
  Cell cur = start;
  for (std::size_t k = 0; k < actions.size(); ++k) {
    Cell nxt = step(cur, actions[k]);
    if (!map.is_passable(nxt)) {
      tr.first_invalid = k;
      return tr;
    }
    tr.cells.push_back(nxt);
    cur = nxt;
  }
  return tr;
}

/// Enumerate vertex and swap conflicts of a joint plan. Paths shorter than
/// the longest are padded by waiting at their final cell.
inline ConflictReport simulate_joint(const GridMap& map, const std::vector<Path>& paths) {
  (void)map;
  ConflictReport rep;
  if (paths.empty()) return rep;
  std::size_t T = 0;
  for (const auto& p : paths) T = std::max(T, p.cells.size());
  auto pos = [&](std::size_t agent, std::size_t t) {
    const auto& c = paths[agent].cells;
    return c[std::min(t, c.size() - 1)];
  };
  int n = static_cast<int>(paths.size());
  for (std::size_t t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (pos(i, t) == pos(j, t))
          rep.vertex_conflicts.push_back({static_cast<int>(t), pos(i, t), i, j});
        if (t + 1 < T) {
          Cell ai = pos(i, t), bi = pos(i, t + 1);
          Cell aj = pos(j, t), bj = pos(j, t + 1);
          if (ai == bj && bi == aj && ai != bi)
            rep.swap_conflicts.push_back({static_cast<int>(t), ai, aj, i, j});
        }
      }
    }
  }
  return rep;
}

inline int manhattan(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

/// Number of actual moves in a path (Waits excluded).
inline std::size_t path_move_count(const Path& p) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < p.cells.size(); ++i)
    if (p.cells[i] != p.cells[i + 1]) ++n;
  return n;
}

}  // namespace hpl
