#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>

#include "json.hpp"

#include "hpl/gridworld.hpp"
#include "hpl/io.hpp"
#include "hpl/search.hpp"

using namespace hpl;
namespace fs = std::filesystem;

namespace {

std::string bin() {
  const char* env = std::getenv("HPL_BIN");
  REQUIRE(env != nullptr);
  return env;
}

int run(const std::string& args) {
  std::string cmd = bin() + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string dir_digest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string digest;
  for (const auto& f : files) {
    digest += f.filename().string() + "\n";
    if (fs::is_regular_file(f)) digest += read_file(f.string());
  }
  return digest;
}

std::string strip_wallclock_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string field;
    int idx = 0;
    while (std::getline(ls, field, ',')) {
      if (idx != 6 && idx != 7) out += field + ",";
      ++idx;
    }
    out += "\n";
  }
  return out;
}

}  // namespace

TEST_CASE("gen-maps is deterministic and emits solvable instances") {
  fs::path a = fresh_dir("hpl_cli_gen_a");
  fs::path b = fresh_dir("hpl_cli_gen_b");
  std::string flags = "gen-maps --count 4 --width 8 --height 8 --density 0.2 --seed 11 --out ";
  REQUIRE(run(flags + a.string()) == 0);
  REQUIRE(run(flags + b.string()) == 0);
  CHECK(dir_digest(a) == dir_digest(b));

  for (int i = 0; i < 4; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "map_%03d", i);
    GridMap m = parse_map(read_file((a / (std::string(stem) + ".map")).string()));
    Scenario s = parse_scenario(read_file((a / (std::string(stem) + ".scen")).string()), m);
    for (const auto& agent : s.agents) {
      auto r = astar(CostField::uniform(m), m, agent.start, agent.goal);
      CHECK(r.cost == agent.optimal_hint.value());
    }
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("gen-maps rejects out-of-range density") {
  fs::path out = fresh_dir("hpl_cli_gen_bad");
  CHECK(run("gen-maps --count 1 --density 0.9 --seed 1 --out " + out.string()) == 2);
  fs::remove_all(out);
}

TEST_CASE("train gcn writes a checkpoint and a full loss log") {
  fs::path data = fresh_dir("hpl_cli_train_data");
  fs::path out = fresh_dir("hpl_cli_train_out");
  REQUIRE(run("gen-maps --count 3 --width 6 --height 6 --density 0.1 --seed 3 --out " +
              data.string()) == 0);
  REQUIRE(run("train gcn --instances " + data.string() + " --steps 40 --seed 5 --out " +
              out.string()) == 0);
  CHECK(fs::exists(out / "gcn.ckpt"));
  std::string log = read_file((out / "gcn_loss.csv").string());
  CHECK(std::count(log.begin(), log.end(), '\n') == 41);  // header + one row per step
  fs::remove_all(data);
  fs::remove_all(out);
}

TEST_CASE("train honors the adversarial minimum iteration count") {
  fs::path data = fresh_dir("hpl_cli_gan_data");
  fs::path out = fresh_dir("hpl_cli_gan_out");
  REQUIRE(run("gen-maps --count 2 --width 4 --height 4 --density 0 --seed 7 --out " +
              data.string()) == 0);
  // ask for 10 steps with a tiny model; the configured minimum still wins
  REQUIRE(run("train gan --instances " + data.string() +
              " --steps 10 --hidden 8 --noise_dim 10 --gan_max_len 6 "
              "--gan_min_iterations 1800 --seed 5 --out " +
              out.string()) == 0);
  std::string log = read_file((out / "gan_loss.csv").string());
  CHECK(std::count(log.begin(), log.end(), '\n') == 1801);
  fs::remove_all(data);
  fs::remove_all(out);
}

TEST_CASE("plan on an open map matches optimal search and simulates cleanly") {
  fs::path work = fresh_dir("hpl_cli_plan");
  write_file_atomic((work / "m.map").string(), render_map(GridMap::open(6, 6)));
  Scenario scen;
  scen.agents = {{{0, 0}, {5, 5}, 10.0}, {{5, 0}, {0, 5}, 10.0}};
  write_file_atomic((work / "m.scen").string(),
                    render_scenario(scen, "m.map", GridMap::open(6, 6)));
  REQUIRE(run("plan --map " + (work / "m.map").string() + " --scen " +
              (work / "m.scen").string() + " --seed 2 --out " + work.string()) == 0);

  GridMap m = GridMap::open(6, 6);
  std::istringstream plan(read_file((work / "plan.txt").string()));
  std::vector<Path> paths(2);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(plan, line)) {
    ++lines;
    std::istringstream ls(line);
    std::string cell;
    int agent = 0;
    while (ls >> cell) {
      auto comma = cell.find(',');
      REQUIRE(comma != std::string::npos);
      paths[agent].cells.push_back(
          {std::stoi(cell.substr(0, comma)), std::stoi(cell.substr(comma + 1))});
      ++agent;
    }
    REQUIRE(agent == 2);
  }
  CHECK(simulate_joint(m, paths).clean());
  CHECK(validate_path(m, paths[0], {0, 0}, {5, 5}));
  CHECK(validate_path(m, paths[1], {5, 0}, {0, 5}));
  // plan file has one line per timestep: max path length across agents
  std::size_t T = std::max(paths[0].cells.size(), paths[1].cells.size());
  CHECK(lines == T);

  auto report = nlohmann::json::parse(read_file((work / "report.json").string()));
  CHECK(report["agents"].size() == 2);
  CHECK(report["agents"][0]["path_length"] == 10.0);
  CHECK(report["agents"][0]["time_efficiency"] == 100.0);
  fs::remove_all(work);
}

TEST_CASE("plan surfaces joint-planning failures with exit code 3") {
  fs::path work = fresh_dir("hpl_cli_plan_fail");
  GridMap corridor = GridMap::open(3, 1);
  write_file_atomic((work / "m.map").string(), render_map(corridor));
  Scenario scen;
  scen.agents = {{{0, 0}, {1, 0}, 1.0}, {{2, 0}, {0, 0}, 2.0}};
  write_file_atomic((work / "m.scen").string(), render_scenario(scen, "m.map", corridor));
  CHECK(run("plan --map " + (work / "m.map").string() + " --scen " +
            (work / "m.scen").string() + " --out " + work.string()) == 3);
  fs::remove_all(work);
}

TEST_CASE("missing input files exit with code 2") {
  CHECK(run("plan --map /nonexistent.map --scen /nonexistent.scen --out /tmp") == 2);
  CHECK(run("definitely-not-a-command") == 2);
}

TEST_CASE("ablate emits the four-row report and re-runs identically") {
  fs::path data = fresh_dir("hpl_cli_ablate_data");
  fs::path ckpt = fresh_dir("hpl_cli_ablate_ckpt");
  fs::path out1 = fresh_dir("hpl_cli_ablate_out1");
  fs::path out2 = fresh_dir("hpl_cli_ablate_out2");
  REQUIRE(run("gen-maps --count 3 --width 6 --height 6 --density 0.1 --seed 13 --out " +
              data.string()) == 0);
  REQUIRE(run("train gcn --instances " + data.string() + " --steps 15 --seed 5 --out " +
              ckpt.string()) == 0);
  REQUIRE(run("train gan --instances " + data.string() +
              " --steps 15 --hidden 8 --noise_dim 10 --gan_max_len 8 "
              "--gan_min_iterations 15 --seed 5 --out " +
              ckpt.string()) == 0);

  std::string common = "ablate --dataset tiny=" + data.string() + " --gcn " +
                       (ckpt / "gcn.ckpt").string() + " --gan " + (ckpt / "gan.ckpt").string() +
                       " --seed 17 --candidates 3 --out ";
  REQUIRE(run(common + out1.string()) == 0);
  REQUIRE(run(common + out2.string()) == 0);

  std::string csv = read_file((out1 / "ablation.csv").string());
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "config,dataset,path_length,time_efficiency,energy,parameters,training_time_s,"
        "inference_time_ms,failures");
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].rfind("baseline,", 0) == 0);
  CHECK(rows[1].rfind("+gnn,", 0) == 0);
  CHECK(rows[2].rfind("+gan,", 0) == 0);
  CHECK(rows[3].rfind("+gnn+gan,", 0) == 0);

  CHECK(strip_wallclock_csv(csv) ==
        strip_wallclock_csv(read_file((out2 / "ablation.csv").string())));
  auto parsed = nlohmann::json::parse(read_file((out1 / "ablation.json").string()));
  CHECK(parsed.size() == 4);
  fs::remove_all(data);
  fs::remove_all(ckpt);
  fs::remove_all(out1);
  fs::remove_all(out2);
}

TEST_CASE("fixtures subcommand verifies the checked-in directory") {
  const char* dir = std::getenv("HPL_FIXTURES");
  REQUIRE(dir != nullptr);
  CHECK(run(std::string("fixtures --dir ") + dir) == 0);

  fs::path tampered = fresh_dir("hpl_cli_fixture_tamper");
  REQUIRE(run("fixtures --write --dir " + tampered.string()) == 0);
  write_file_atomic((tampered / "open_3x3.map").string(), "type octile\nheight 1\nwidth 1\nmap\n.\n");
  CHECK(run("fixtures --dir " + tampered.string()) == 2);
  fs::remove_all(tampered);
}

TEST_CASE("config file values are overridden by flags") {
  fs::path work = fresh_dir("hpl_cli_config");
  write_file_atomic((work / "run.cfg").string(),
                    "count = 2\nwidth = 5\nheight = 5\ndensity = 0 # open\nseed = 9\n");
  REQUIRE(run("gen-maps --config " + (work / "run.cfg").string() + " --count 3 --out " +
              work.string()) == 0);
  CHECK(fs::exists(work / "map_002.map"));       // flag won over the file
  CHECK_FALSE(fs::exists(work / "map_003.map"));
  GridMap m = parse_map(read_file((work / "map_000.map").string()));
  CHECK(m.width == 5);  // file value used where no flag was given
  CHECK(m.passable_count() == 25);
  fs::remove_all(work);
}
