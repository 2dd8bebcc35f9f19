#include <catch2/catch_amalgamated.hpp>

#include "hpl/checkpoint.hpp"
#include "hpl/mapgen.hpp"
#include "hpl/pipeline.hpp"
#include "hpl/training.hpp"

using namespace hpl;

namespace {

Models tiny_models(std::uint64_t seed, const GridMap& map) {
  Models m;
  Rng rng(seed);
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
  gc.max_len = 16;
  gc.min_iterations = 1;
  m.gan = GanModel(gc, condition_dim(map), rng);
  return m;
}

}  // namespace

TEST_CASE("pipeline config rejects the empty configuration") {
  PipelineConfig config;
  config.fallback = false;
  CHECK_THROWS(config.validate());
  config.use_gnn = true;
  CHECK_NOTHROW(config.validate());
}

TEST_CASE("all stages off falls back to classical search") {
  GridMap m = GridMap::open(6, 6);
  Models models;
  PipelineConfig config;
  PlanResult r = hybrid_plan(m, {0, 0}, {5, 5}, models, config);
  CHECK(r.provenance == "astar-fallback");
  auto oracle = astar(CostField::uniform(m), m, {0, 0}, {5, 5});
  CHECK(r.cost == oracle.cost);
  CHECK(validate_path(m, r.path, {0, 0}, {5, 5}));
}

TEST_CASE("gnn stage with lambda zero reproduces plain search costs") {
  auto instances = generate_instances(10, 8, 8, 0.2, 1, 808);
  for (const auto& inst : instances) {
    Models models = tiny_models(3, inst.map);
    PipelineConfig config;
    config.use_gnn = true;
    config.lambda = 0.0;
    const auto& agent = inst.scenario.agents[0];
    PlanResult r = hybrid_plan(inst.map, agent.start, agent.goal, models, config);
    auto oracle = astar(CostField::uniform(inst.map), inst.map, agent.start, agent.goal);
    CHECK(r.cost == oracle.cost);
  }
}

TEST_CASE("enabled stages require their models") {
  GridMap m = GridMap::open(3, 3);
  Models empty;
  PipelineConfig config;
  config.use_transformer = true;
  CHECK_THROWS_AS(hybrid_plan(m, {0, 0}, {2, 2}, empty, config), std::invalid_argument);
  config = PipelineConfig{};
  config.use_gan = true;
  CHECK_THROWS_AS(hybrid_plan(m, {0, 0}, {2, 2}, empty, config), std::invalid_argument);
}

TEST_CASE("every stage combination yields a valid path with untrained models") {
  auto instances = generate_instances(6, 8, 8, 0.15, 1, 809);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    Models models = tiny_models(100 + i, inst.map);
    const auto& agent = inst.scenario.agents[0];
    for (int bits = 0; bits < 8; ++bits) {
      PipelineConfig config;
      config.use_transformer = bits & 1;
      config.use_gnn = bits & 2;
      config.use_gan = bits & 4;
      config.candidates = 4;
      PlanResult r = hybrid_plan(inst.map, agent.start, agent.goal, models, config, 55 + bits);
      CHECK(validate_path(inst.map, r.path, agent.start, agent.goal));
    }
  }
}

TEST_CASE("gan candidates carry gan provenance when they win") {
  GridMap m = GridMap::open(5, 5);
  Models models = tiny_models(7, m);
  PipelineConfig config;
  config.use_gan = true;
  config.candidates = 6;
  PlanResult r = hybrid_plan(m, {0, 0}, {4, 4}, models, config, 11);
  // repair guarantees candidates exist on an open map, so the gan stage wins
  CHECK(r.provenance == "gan-candidate");
  CHECK(validate_path(m, r.path, {0, 0}, {4, 4}));
}

TEST_CASE("hybrid_plan reports NoPath when the goal is sealed") {
  GridMap m = parse_map("type octile\nheight 3\nwidth 3\nmap\n..@\n.@.\n@..\n");
  // goal (2,2)... wait, (2,2) is passable but walled off by (2,1)/(1,2)
  Models models;
  PipelineConfig config;
  CHECK_THROWS_AS(hybrid_plan(m, {0, 0}, {2, 2}, models, config), NoPath);
}

TEST_CASE("replan answers map updates from the current cell") {
  GridMap before = GridMap::open(5, 1);
  Models models;
  PipelineConfig config;
  PlanResult first = hybrid_plan(before, {0, 0}, {4, 0}, models, config);
  CHECK(first.cost == 4.0);

  // unchanged map: same result from the current cell
  PlanResult same = replan(before, {2, 0}, {4, 0}, models, config);
  CHECK(same.cost == hybrid_plan(before, {2, 0}, {4, 0}, models, config).cost);

  // a new wall forces a detour on the updated map
  GridMap after = parse_map("type octile\nheight 2\nwidth 5\nmap\n..@..\n.....\n");
  PlanResult detour = replan(after, {1, 0}, {4, 0}, models, config);
  CHECK(validate_path(after, detour.path, {1, 0}, {4, 0}));
  CHECK(detour.cost > 3.0);  // the straight run is gone

  GridMap sealed = parse_map("type octile\nheight 1\nwidth 5\nmap\n..@..\n");
  CHECK_THROWS_AS(replan(sealed, {0, 0}, {4, 0}, models, config), NoPath);
  CHECK_THROWS_AS(replan(sealed, {2, 0}, {4, 0}, models, config), std::invalid_argument);
}

TEST_CASE("plan results are deterministic for a fixed seed") {
  GridMap m = GridMap::open(6, 6);
  Models models = tiny_models(13, m);
  PipelineConfig config;
  config.use_transformer = true;
  config.use_gnn = true;
  config.use_gan = true;
  config.candidates = 5;
  PlanResult a = hybrid_plan(m, {0, 0}, {5, 5}, models, config, 77);
  PlanResult b = hybrid_plan(m, {0, 0}, {5, 5}, models, config, 77);
  CHECK(a.path.cells == b.path.cells);
  CHECK(a.provenance == b.provenance);
}

TEST_CASE("checkpoints round-trip all three model kinds losslessly") {
  GridMap m = GridMap::open(4, 4);
  Models models = tiny_models(21, m);

  auto t_doc = write_checkpoint(checkpoint_of(*models.transformer, 12.5));
  TransformerParams t2 = transformer_from_checkpoint(read_checkpoint(t_doc));
  CHECK(t2.env_embed.values == models.transformer->env_embed.values);
  CHECK(t2.dec[0].cross_attn.wo.values == models.transformer->dec[0].cross_attn.wo.values);
  CHECK(t2.out_w.values == models.transformer->out_w.values);
  CHECK(read_checkpoint(t_doc).meta.at("training_time_s") == 12.5);

  auto g_doc = write_checkpoint(checkpoint_of(*models.gcn, 0.5));
  GcnParams g2 = gcn_from_checkpoint(read_checkpoint(g_doc));
  CHECK(g2.layers[0].values == models.gcn->layers[0].values);
  CHECK(g2.head_w.values == models.gcn->head_w.values);

  models.gan->g.bn.run_mean[0] = 0.123456789123456789;
  auto a_doc = write_checkpoint(checkpoint_of(*models.gan, 3.25));
  GanModel a2 = gan_from_checkpoint(read_checkpoint(a_doc));
  CHECK(a2.g.w_in.values == models.gan->g.w_in.values);
  CHECK(a2.d.out_w.values == models.gan->d.out_w.values);
  CHECK(a2.g.bn.run_mean == models.gan->g.bn.run_mean);
  CHECK(a2.cond_dim == models.gan->cond_dim);

  CHECK_THROWS_AS(read_checkpoint("not a checkpoint"), CheckpointError);
  CHECK_THROWS_AS(transformer_from_checkpoint(read_checkpoint(g_doc)), CheckpointError);
}

TEST_CASE("loaded checkpoints decode identically to the source model") {
  GridMap m = GridMap::open(4, 4);
  Models models = tiny_models(22, m);
  Tensor memory = encode(tokenize_env(m, {0, 0}, {3, 3}), *models.transformer);
  auto original = greedy_decode(memory, *models.transformer, 12);

  TransformerParams reloaded =
      transformer_from_checkpoint(read_checkpoint(write_checkpoint(checkpoint_of(*models.transformer))));
  Tensor memory2 = encode(tokenize_env(m, {0, 0}, {3, 3}), reloaded);
  CHECK(memory2.values == memory.values);
  CHECK(greedy_decode(memory2, reloaded, 12) == original);
}
