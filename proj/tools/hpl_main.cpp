// hpl — hybrid neural path planning lab for grid-world logistics.
//
// Subcommands: gen-maps, train, plan, ablate, fixtures. See README.md for
// formats and examples.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hpl/ablation.hpp"
#include "hpl/checkpoint.hpp"
#include "hpl/config.hpp"
#include "hpl/fixtures.hpp"
#include "hpl/gridworld.hpp"
#include "hpl/io.hpp"
#include "hpl/mapgen.hpp"
#include "hpl/metrics.hpp"
#include "hpl/multi_agent.hpp"
#include "hpl/pipeline.hpp"
#include "hpl/training.hpp"

namespace fs = std::filesystem;
using namespace hpl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadInput = 2;
constexpr int kExitPlanning = 3;
constexpr int kExitDivergence = 4;

struct CliError : std::runtime_error {
  int code;
  CliError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

std::string instance_stem(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "map_%03zu", i);
  return buf;
}

std::vector<Instance> load_instance_dir(const std::string& dir) {
  std::vector<fs::path> maps;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".map") maps.push_back(entry.path());
  std::sort(maps.begin(), maps.end());
  if (maps.empty()) throw CliError(kExitBadInput, "no .map files in " + dir);
  std::vector<Instance> out;
  for (const auto& mp : maps) {
    fs::path sp = mp;
    sp.replace_extension(".scen");
    if (!fs::exists(sp))
      throw CliError(kExitBadInput, "missing scenario file " + sp.string());
    GridMap map = parse_map(read_file(mp.string()));
    Scenario scen = parse_scenario(read_file(sp.string()), map);
    out.push_back(Instance{std::move(map), std::move(scen)});
  }
  return out;
}

std::size_t eval_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HPL_THREADS")) {
    char* end = nullptr;
    unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && v >= 1) n = std::min<std::size_t>(n, v);
  }
  return n;
}

RunConfig layered_config(const std::string& config_path, const RunConfig& flag_overrides) {
  RunConfig cfg;
  if (!config_path.empty()) cfg = RunConfig::parse(read_file(config_path));
  cfg.merge(flag_overrides);
  return cfg;
}

Models load_models(const std::string& transformer_ckpt, const std::string& gcn_ckpt,
                   const std::string& gan_ckpt, std::map<std::string, double>* training_s) {
  Models models;
  if (!transformer_ckpt.empty()) {
    CheckpointDoc doc = read_checkpoint(read_file(transformer_ckpt));
    models.transformer = transformer_from_checkpoint(doc);
    if (training_s) (*training_s)["transformer"] = value_or(doc.meta, "training_time_s");
  }
  if (!gcn_ckpt.empty()) {
    CheckpointDoc doc = read_checkpoint(read_file(gcn_ckpt));
    models.gcn = gcn_from_checkpoint(doc);
    if (training_s) (*training_s)["gnn"] = value_or(doc.meta, "training_time_s");
  }
  if (!gan_ckpt.empty()) {
    CheckpointDoc doc = read_checkpoint(read_file(gan_ckpt));
    models.gan = gan_from_checkpoint(doc);
    if (training_s) (*training_s)["gan"] = value_or(doc.meta, "training_time_s");
  }
  return models;
}

PipelineConfig pipeline_from(const RunConfig& cfg, const std::string& stages) {
  PipelineConfig pc;
  std::string token;
  std::istringstream ss(stages);
  while (std::getline(ss, token, ',')) {
    if (token == "transformer") pc.use_transformer = true;
    else if (token == "gnn") pc.use_gnn = true;
    else if (token == "gan") pc.use_gan = true;
    else if (!token.empty())
      throw CliError(kExitBadInput, "unknown stage '" + token + "'");
  }
  pc.lambda = cfg.get_double("lambda", 0.5);
  pc.candidates = cfg.get_u64("candidates", 8);
  return pc;
}

MetricsConfig metrics_from(const RunConfig& cfg) {
  MetricsConfig mc;
  mc.power = cfg.get_double("power", 1.0);
  mc.step_time = cfg.get_double("step_time", 1.0);
  mc.literal_time_efficiency = cfg.get_bool("literal_time_efficiency", false);
  mc.validate();
  return mc;
}

int cmd_gen_maps(const RunConfig& cfg, const std::string& out_dir) {
  std::size_t count = cfg.get_u64("count", 10);
  int width = static_cast<int>(cfg.get_u64("width", 8));
  int height = static_cast<int>(cfg.get_u64("height", 8));
  double density = cfg.get_double("density", 0.1);
  std::size_t agents = cfg.get_u64("agents", 1);
  std::uint64_t seed = cfg.get_u64("seed", 0);
  auto instances = generate_instances(count, width, height, density, agents, seed);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    std::string stem = instance_stem(i);
    write_file_atomic(out_dir + "/" + stem + ".map", render_map(instances[i].map));
    write_file_atomic(out_dir + "/" + stem + ".scen",
                      render_scenario(instances[i].scenario, stem + ".map", instances[i].map));
  }
  std::cout << "wrote " << instances.size() << " instances to " << out_dir << "\n";
  return kExitOk;
}

std::string loss_csv(const std::vector<double>& losses) {
  std::string out = "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, losses[i]);
    out += buf;
  }
  return out;
}

int cmd_train(const std::string& stage, const RunConfig& cfg, const std::string& instances_dir,
              const std::string& out_dir) {
  auto instances = load_instance_dir(instances_dir);
  std::uint64_t seed = cfg.get_u64("seed", 0);
  auto t0 = std::chrono::steady_clock::now();
  auto elapsed_s = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  if (stage == "transformer") {
    PlannerConfig pc;
    pc.d_model = cfg.get_u64("d_model", 64);
    pc.heads = cfg.get_u64("heads", 4);
    pc.n_layers = cfg.get_u64("layers", 2);
    pc.d_ff = cfg.get_u64("d_ff", 128);
    pc.max_len = cfg.get_u64("max_len", 128);
    Rng rng(seed);
    TransformerParams params(pc, rng);
    auto examples = build_imitation_set(instances);
    std::vector<double> losses;
    double final_loss =
        train_transformer(params, examples, cfg.get_u64("steps", 2000),
                          cfg.get_u64("batch", 16), cfg.get_double("lr", 1e-3), seed, &losses);
    if (std::isnan(final_loss)) return kExitDivergence;
    write_file_atomic(out_dir + "/transformer_loss.csv", loss_csv(losses));
    write_file_atomic(out_dir + "/transformer.ckpt",
                      write_checkpoint(checkpoint_of(params, elapsed_s())));
  } else if (stage == "gcn") {
    Rng rng(seed);
    GcnParams params(rng);
    std::vector<double> losses;
    double final_loss = train_gcn(params, instances, cfg.get_u64("steps", 300),
                                  cfg.get_double("lr", 1e-2), seed, &losses);
    if (std::isnan(final_loss)) return kExitDivergence;
    write_file_atomic(out_dir + "/gcn_loss.csv", loss_csv(losses));
    write_file_atomic(out_dir + "/gcn.ckpt", write_checkpoint(checkpoint_of(params, elapsed_s())));
  } else if (stage == "gan") {
    GanConfig gc;
    gc.noise_dim = cfg.get_u64("noise_dim", 32);
    gc.hidden = cfg.get_u64("hidden", 64);
    gc.batch = cfg.get_u64("gan_batch", 32);
    gc.max_len = cfg.get_u64("gan_max_len", 32);
    gc.lr = cfg.get_double("lr", 0.001);
    gc.lr_decay = cfg.get_double("lr_decay", 1.0);
    gc.decay_every = cfg.get_u64("decay_every", 100);
    gc.min_iterations = cfg.get_u64("gan_min_iterations", 1800);
    gc.validate();
    Rng rng(seed);
    GanModel gan(gc, condition_dim(instances[0].map), rng);
    auto pool = build_gan_pool(instances);
    GanTrainResult result = train_gan(gan, pool, cfg.get_u64("steps", gc.min_iterations), seed);
    std::string csv = "step,d_loss,g_loss\n";
    char buf[96];
    for (std::size_t i = 0; i < result.losses.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g\n", i, result.losses[i].first,
                    result.losses[i].second);
      csv += buf;
    }
    if (!result.losses.empty() && (std::isnan(result.losses.back().first) ||
                                   std::isnan(result.losses.back().second)))
      return kExitDivergence;
    write_file_atomic(out_dir + "/gan_loss.csv", csv);
    write_file_atomic(out_dir + "/gan.ckpt", write_checkpoint(checkpoint_of(gan, elapsed_s())));
  } else {
    throw CliError(kExitBadInput, "unknown training stage '" + stage + "'");
  }
  std::cout << "trained " << stage << " in " << elapsed_s() << " s\n";
  return kExitOk;
}

int cmd_plan(const RunConfig& cfg, const std::string& map_path, const std::string& scen_path,
             const std::string& stages, const Models& loaded_models_unused,
             const std::string& transformer_ckpt, const std::string& gcn_ckpt,
             const std::string& gan_ckpt, const std::string& out_dir) {
  (void)loaded_models_unused;
  GridMap map = parse_map(read_file(map_path));
  Scenario scen = parse_scenario(read_file(scen_path), map);
  std::map<std::string, double> training_s;
  Models models = load_models(transformer_ckpt, gcn_ckpt, gan_ckpt, &training_s);
  PipelineConfig pc = pipeline_from(cfg, stages);
  MetricsConfig mc = metrics_from(cfg);
  std::uint64_t seed = cfg.get_u64("seed", 0);

  auto t0 = std::chrono::steady_clock::now();
  JointPlan plan = prioritized_multi(map, scen, models, pc, seed);
  double inference_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  ConflictReport conflicts = simulate_joint(map, plan.paths);
  if (!conflicts.clean()) throw CliError(kExitPlanning, "internal error: plan has conflicts");

  std::size_t T = 0;
  for (const auto& p : plan.paths) T = std::max(T, p.cells.size());
  std::string plan_text;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t a = 0; a < plan.paths.size(); ++a) {
      const auto& cells = plan.paths[a].cells;
      Cell c = cells[std::min(t, cells.size() - 1)];
      if (a) plan_text += " ";
      plan_text += std::to_string(c.x) + "," + std::to_string(c.y);
    }
    plan_text += "\n";
  }
  write_file_atomic(out_dir + "/plan.txt", plan_text);

  nlohmann::json agents = nlohmann::json::array();
  for (std::size_t a = 0; a < plan.paths.size(); ++a) {
    const Path& p = plan.paths[a];
    double planned = time_planned(p, mc);
    double optimal = scen.agents[a].optimal_hint.value_or(
        astar(CostField::uniform(map), map, scen.agents[a].start, scen.agents[a].goal).cost);
    agents.push_back({{"agent", a},
                      {"provenance", plan.provenance[a]},
                      {"path_length", path_length(p)},
                      {"time_efficiency", time_efficiency(planned, optimal * mc.step_time, mc)},
                      {"energy", energy(planned, mc)},
                      {"timesteps", p.timesteps()}});
  }
  nlohmann::json report = {{"agents", agents},
                           {"timesteps", T == 0 ? 0 : T - 1},
                           {"inference_time_ms", inference_ms},
                           {"parameters", count_params(models, pc)}};
  write_file_atomic(out_dir + "/report.json", report.dump(2) + "\n");
  std::cout << "plan written to " << out_dir << " (" << plan.paths.size() << " agents, "
            << (T == 0 ? 0 : T - 1) << " timesteps)\n";
  return kExitOk;
}

int cmd_ablate(const RunConfig& cfg, const std::vector<std::string>& dataset_specs,
               const std::string& transformer_ckpt, const std::string& gcn_ckpt,
               const std::string& gan_ckpt, const std::string& out_dir) {
  std::vector<AblationDataset> datasets;
  for (const auto& spec : dataset_specs) {
    std::size_t eq = spec.find('=');
    std::string name = eq == std::string::npos ? fs::path(spec).filename().string()
                                               : spec.substr(0, eq);
    std::string dir = eq == std::string::npos ? spec : spec.substr(eq + 1);
    datasets.push_back({name, load_instance_dir(dir)});
  }
  std::map<std::string, double> training_s;
  Models models = load_models(transformer_ckpt, gcn_ckpt, gan_ckpt, &training_s);
  if (!models.gcn || !models.gan)
    throw CliError(kExitBadInput, "ablate requires --gcn and --gan checkpoints");
  MetricsConfig mc = metrics_from(cfg);
  auto configs = standard_ablation_configs(cfg.get_double("lambda", 0.5),
                                           cfg.get_u64("candidates", 8));
  auto rows = run_ablation(datasets, configs, models, mc, cfg.get_u64("seed", 0), training_s,
                           eval_threads());
  write_file_atomic(out_dir + "/ablation.csv", ablation_csv(rows));
  write_file_atomic(out_dir + "/ablation.json", ablation_json(rows));
  std::cout << "ablation report (" << rows.size() << " rows) written to " << out_dir << "\n";
  return kExitOk;
}

int cmd_fixtures(const std::string& dir, bool write, std::uint64_t seed) {
  if (write) {
    write_fixtures(dir, seed);
    std::cout << "fixtures written to " << dir << "\n";
    return kExitOk;
  }
  check_fixtures(dir, seed);
  std::cout << "fixtures match\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid neural path planning lab"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", map_path, scen_path, stages;
  std::string transformer_ckpt, gcn_ckpt, gan_ckpt, instances_dir, stage;
  std::vector<std::string> dataset_specs;
  bool fixtures_write = false;
  RunConfig flags;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value config file");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option_function<std::string>(
        "--seed", [&flags](const std::string& v) { flags.set("seed", v); }, "run seed");
  };
  auto add_metric_flags = [&](CLI::App* cmd) {
    cmd->add_option_function<std::string>(
        "--power", [&flags](const std::string& v) { flags.set("power", v); },
        "average robot power, watts");
    cmd->add_option_function<std::string>(
        "--step-time", [&flags](const std::string& v) { flags.set("step_time", v); },
        "seconds per move");
  };
  auto add_pipeline_flags = [&](CLI::App* cmd) {
    cmd->add_option("--stages", stages, "comma list of transformer,gnn,gan");
    cmd->add_option_function<std::string>(
        "--lambda", [&flags](const std::string& v) { flags.set("lambda", v); },
        "cost-bias strength");
    cmd->add_option_function<std::string>(
        "--candidates", [&flags](const std::string& v) { flags.set("candidates", v); },
        "generator candidates K");
  };

  CLI::App* gen = app.add_subcommand("gen-maps", "generate random solvable instances");
  add_common(gen);
  for (const char* key : {"count", "width", "height", "density", "agents"})
    gen->add_option_function<std::string>(
        std::string("--") + key, [&flags, key](const std::string& v) { flags.set(key, v); });

  CLI::App* train = app.add_subcommand("train", "train one pipeline stage");
  train->add_option("stage", stage, "transformer | gcn | gan")->required();
  train->add_option("--instances", instances_dir, "directory of .map/.scen pairs")->required();
  add_common(train);
  for (const char* key : {"steps", "batch", "lr", "d_model", "heads", "layers", "d_ff", "max_len",
                          "noise_dim", "hidden", "gan_batch", "gan_max_len",
                          "gan_min_iterations", "lr_decay", "decay_every"})
    train->add_option_function<std::string>(
        std::string("--") + key, [&flags, key](const std::string& v) { flags.set(key, v); });

  CLI::App* plan = app.add_subcommand("plan", "plan a scenario with the hybrid pipeline");
  plan->add_option("--map", map_path, "movingai .map file")->required();
  plan->add_option("--scen", scen_path, "movingai .scen file")->required();
  plan->add_option("--transformer", transformer_ckpt, "transformer checkpoint");
  plan->add_option("--gcn", gcn_ckpt, "graph encoder checkpoint");
  plan->add_option("--gan", gan_ckpt, "gan checkpoint");
  add_common(plan);
  add_metric_flags(plan);
  add_pipeline_flags(plan);

  CLI::App* ablate = app.add_subcommand("ablate", "module-by-module report");
  ablate->add_option("--dataset", dataset_specs, "name=dir instance set (repeatable)")
      ->required();
  ablate->add_option("--transformer", transformer_ckpt, "transformer checkpoint");
  ablate->add_option("--gcn", gcn_ckpt, "graph encoder checkpoint")->required();
  ablate->add_option("--gan", gan_ckpt, "gan checkpoint")->required();
  add_common(ablate);
  add_metric_flags(ablate);
  add_pipeline_flags(ablate);

  CLI::App* fixtures = app.add_subcommand("fixtures", "regenerate or verify fixture files");
  fixtures->add_option("--dir", instances_dir, "fixtures directory")->required();
  fixtures->add_flag("--write", fixtures_write, "rewrite instead of verify");
  add_common(fixtures);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitBadInput;
  }

  try {
    RunConfig cfg = layered_config(config_path, flags);
    if (gen->parsed()) return cmd_gen_maps(cfg, out_dir);
    if (train->parsed()) return cmd_train(stage, cfg, instances_dir, out_dir);
    if (plan->parsed())
      return cmd_plan(cfg, map_path, scen_path, stages, Models{}, transformer_ckpt, gcn_ckpt,
                      gan_ckpt, out_dir);
    if (ablate->parsed())
      return cmd_ablate(cfg, dataset_specs, transformer_ckpt, gcn_ckpt, gan_ckpt, out_dir);
    if (fixtures->parsed())
      return cmd_fixtures(instances_dir, fixtures_write, cfg.get_u64("seed", kFixtureSeed));
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const NoPath& e) {
    std::cerr << "planning failed: " << e.what() << "\n";
    return kExitPlanning;
  } catch (const NoJointPlan& e) {
    std::cerr << "planning failed: " << e.what() << "\n";
    return kExitPlanning;
  } catch (const AllRejected& e) {
    std::cerr << "planning failed: " << e.what() << "\n";
    return kExitPlanning;
  } catch (const ExhaustedRetries& e) {
    std::cerr << "generation failed: " << e.what() << "\n";
    return kExitPlanning;
  } catch (const FixtureDrift& e) {
    std::cerr << "fixture drift: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  }
  return kExitOk;
}
