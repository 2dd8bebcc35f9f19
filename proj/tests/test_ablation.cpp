#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "hpl/ablation.hpp"
#include "hpl/training.hpp"

using namespace hpl;

namespace {

Models quick_models(const GridMap& map) {
  Models m;
  Rng rng(404);
  PlannerConfig pc;
  pc.d_model = 16;
  pc.heads = 2;
  pc.n_layers = 1;
  pc.d_ff = 32;
  pc.max_len = 96;
  m.transformer = TransformerParams(pc, rng);
  m.gcn = GcnParams(rng);
  GanConfig gc;
  gc.noise_dim = 10;
  gc.hidden = 16;
  gc.act_embed = 4;
  gc.max_len = 12;
  gc.min_iterations = 1;
  m.gan = GanModel(gc, condition_dim(map), rng);
  return m;
}

std::string strip_wallclock(const std::string& csv) {
  // drop the training_time_s and inference_time_ms columns (6 and 7)
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

TEST_CASE("standard ablation rows come in the documented order") {
  auto configs = standard_ablation_configs();
  REQUIRE(configs.size() == 4);
  CHECK(configs[0].name == "baseline");
  CHECK(configs[1].name == "+gnn");
  CHECK(configs[2].name == "+gan");
  CHECK(configs[3].name == "+gnn+gan");
  CHECK_FALSE(configs[0].config.use_gnn);
  CHECK(configs[3].config.use_gnn);
  CHECK(configs[3].config.use_gan);
  for (const auto& c : configs) CHECK_FALSE(c.config.use_transformer);
}

TEST_CASE("run_ablation aggregates per config and dataset in order") {
  auto instances = generate_instances(5, 6, 6, 0.1, 1, 606);
  Models models = quick_models(instances[0].map);
  std::vector<AblationDataset> datasets{{"setA", instances}};
  MetricsConfig mc;
  auto rows = run_ablation(datasets, standard_ablation_configs(0.5, 3), models, mc, 9,
                           {{"gnn", 1.5}, {"gan", 2.5}}, 1);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].config_name == "baseline");
  CHECK(rows[3].config_name == "+gnn+gan");
  for (const auto& r : rows) {
    CHECK(r.dataset == "setA");
    CHECK(r.failures == 0);  // generated instances are solvable
    CHECK(r.path_length > 0.0);
    CHECK(r.time_efficiency > 0.0);
    CHECK(r.time_efficiency <= 100.0);
  }
  CHECK(rows[0].parameters == 0);
  CHECK(rows[0].training_time_s == 0.0);
  CHECK(rows[1].training_time_s == 1.5);
  CHECK(rows[3].training_time_s == 4.0);
  CHECK(rows[3].parameters == models.gcn->param_count() + models.gan->param_count());
}

TEST_CASE("the csv header matches the documented schema exactly") {
  CHECK(std::string(kAblationCsvHeader) ==
        "config,dataset,path_length,time_efficiency,energy,parameters,training_time_s,"
        "inference_time_ms,failures");
  std::vector<AblationRow> rows(1);
  rows[0].config_name = "baseline";
  rows[0].dataset = "d";
  std::string csv = ablation_csv(rows);
  CHECK(csv.substr(0, csv.find('\n')) == kAblationCsvHeader);
}

TEST_CASE("ablation output is reproducible apart from wall-clock columns") {
  auto instances = generate_instances(4, 6, 6, 0.1, 1, 607);
  Models models = quick_models(instances[0].map);
  std::vector<AblationDataset> datasets{{"d0", instances}};
  MetricsConfig mc;
  auto a = run_ablation(datasets, standard_ablation_configs(0.5, 3), models, mc, 21, {}, 1);
  auto b = run_ablation(datasets, standard_ablation_configs(0.5, 3), models, mc, 21, {}, 1);
  CHECK(strip_wallclock(ablation_csv(a)) == strip_wallclock(ablation_csv(b)));
}

TEST_CASE("thread count does not change the aggregates") {
  auto instances = generate_instances(6, 6, 6, 0.1, 1, 608);
  Models models = quick_models(instances[0].map);
  std::vector<AblationDataset> datasets{{"d0", instances}};
  MetricsConfig mc;
  auto seq = run_ablation(datasets, standard_ablation_configs(0.5, 2), models, mc, 5, {}, 1);
  auto par = run_ablation(datasets, standard_ablation_configs(0.5, 2), models, mc, 5, {}, 4);
  CHECK(strip_wallclock(ablation_csv(seq)) == strip_wallclock(ablation_csv(par)));
}

TEST_CASE("planner failures are counted per row, not fatal") {
  // a map whose goal is sealed produces NoPath for every config
  GridMap sealed = parse_map("type octile\nheight 1\nwidth 4\nmap\n..@.\n");
  Instance inst;
  inst.map = sealed;
  inst.scenario.agents = {{{0, 0}, {3, 0}, {}}};
  Models models = quick_models(sealed);
  std::vector<AblationDataset> datasets{{"broken", {inst}}};
  MetricsConfig mc;
  auto rows = run_ablation(datasets, standard_ablation_configs(0.5, 2), models, mc, 3, {}, 1);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) CHECK(r.failures == 1);
}

TEST_CASE("json report carries the same fields as the csv") {
  std::vector<AblationRow> rows(1);
  rows[0].config_name = "+gnn";
  rows[0].dataset = "d";
  rows[0].path_length = 7.25;
  rows[0].parameters = 42;
  auto parsed = nlohmann::json::parse(ablation_json(rows));
  REQUIRE(parsed.is_array());
  CHECK(parsed[0]["config"] == "+gnn");
  CHECK(parsed[0]["path_length"] == 7.25);
  CHECK(parsed[0]["parameters"] == 42);
  CHECK(parsed[0].contains("training_time_s"));
  CHECK(parsed[0].contains("inference_time_ms"));
  CHECK(parsed[0].contains("failures"));
  CHECK(parsed[0].contains("time_efficiency"));
  CHECK(parsed[0].contains("energy"));
  CHECK(parsed[0].contains("dataset"));
}
