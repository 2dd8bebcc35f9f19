#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "hpl/gan.hpp"
#include "hpl/search.hpp"
#include "hpl/training.hpp"

using namespace hpl;

namespace {

GanConfig tiny_gan(std::size_t hidden = 8, std::size_t max_len = 4) {
  GanConfig cfg;
  cfg.noise_dim = 10;
  cfg.hidden = hidden;
  cfg.act_embed = 4;
  cfg.max_len = max_len;
  cfg.min_iterations = 1;  // unit tests run short loops; the CLI default stays 1800
  return cfg;
}

std::vector<double> random_cond(std::size_t n, Rng& rng) {
  std::vector<double> cond(n);
  for (auto& v : cond) v = rng.uniform(-1, 1);
  return cond;
}

}  // namespace

TEST_CASE("gan config enforces the documented ranges") {
  GanConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.noise_dim = 5;
  CHECK_THROWS(cfg.validate());
  cfg.noise_dim = 32;
  cfg.batch = 48;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("generation is deterministic given z and condition") {
  Rng rng(50);
  GanModel gan(tiny_gan(16, 8), 5, rng);
  GridMap m = GridMap::open(6, 6);
  auto cond = random_cond(5, rng);
  std::vector<double> z(10);
  for (auto& v : z) v = rng.normal();
  auto a = generate(z, cond, m, {2, 3}, {5, 1}, gan.g, 8);
  auto b = generate(z, cond, m, {2, 3}, {5, 1}, gan.g, 8);
  CHECK(a == b);
  CHECK(a.size() <= 8);
}

TEST_CASE("generated sequences never exceed max_len") {
  Rng rng(51);
  GanModel gan(tiny_gan(), 3, rng);
  GridMap m = GridMap::open(4, 4);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> z(10);
    for (auto& v : z) v = rng.normal();
    CHECK(generate(z, random_cond(3, rng), m, {1, 1}, {3, 2}, gan.g, 4).size() <= 4);
  }
}

TEST_CASE("distinct noise vectors produce distinct sequences after training") {
  Rng rng(52);
  GridMap m = GridMap::open(4, 4);
  auto instances = generate_instances(8, 4, 4, 0.0, 1, 523);
  GanConfig cfg = tiny_gan(32, 12);
  cfg.noise_dim = 16;
  GanModel gan(cfg, condition_dim(instances[0].map), rng);
  auto pool = build_gan_pool(instances);
  train_gan(gan, pool, 150, 19, false);

  auto cond = pool[0].condition;
  const auto& agent0 = instances[0].scenario.agents[0];
  std::set<std::vector<Action>> distinct;
  Rng zs(99);
  for (int i = 0; i < 16; ++i) {
    std::vector<double> z(cfg.noise_dim);
    for (auto& v : z) v = zs.normal();
    distinct.insert(
        generate(z, cond, instances[0].map, agent0.start, agent0.goal, gan.g, cfg.max_len));
  }
  CHECK(distinct.size() >= 2);
}

TEST_CASE("zero-initialized discriminator scores 0.5 for any input") {
  Rng rng(53);
  GanModel gan(tiny_gan(), 4, rng);
  gan.d.w_in = Tensor(kSymCount + 4, gan.cfg.hidden);
  gan.d.w_h = Tensor(gan.cfg.hidden, gan.cfg.hidden);
  gan.d.b = Tensor(1, gan.cfg.hidden);
  gan.d.out_w = Tensor(gan.cfg.hidden, 1);
  gan.d.out_b = Tensor(1, 1);
  gan.d.mark_grads();
  GridMap m = GridMap::open(5, 5);
  for (int i = 0; i < 10; ++i) {
    std::vector<Action> acts;
    for (int k = 0; k < i % 4; ++k) acts.push_back(Action::Right);
    CHECK(discriminate(acts, random_cond(4, rng), m, {0, i % 5}, {4, 4}, gan.d) == 0.5);
  }
}

TEST_CASE("discriminator output is strictly inside (0,1)") {
  Rng rng(54);
  GanModel gan(tiny_gan(32, 8), 6, rng);
  GridMap m = GridMap::open(9, 9);
  for (int i = 0; i < 25; ++i) {
    std::vector<Action> acts;
    for (std::size_t k = 0; k < rng.uniform_int(8); ++k)
      acts.push_back(action_of_sym(static_cast<int>(rng.uniform_int(5))));
    double p = discriminate(acts, random_cond(6, rng), m, {4, 4}, {8, 8}, gan.d);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("a zero discriminator yields d_loss ln 2 on the first step") {
  Rng rng(55);
  GanModel gan(tiny_gan(8, 4), 3, rng);
  gan.d.w_in = Tensor(kSymCount + 3, 8);
  gan.d.w_h = Tensor(8, 8);
  gan.d.b = Tensor(1, 8);
  gan.d.out_w = Tensor(8, 1);
  gan.d.out_b = Tensor(1, 1);
  gan.d.mark_grads();

  std::vector<GanExample> batch;
  Rng crng(56);
  GridMap m = GridMap::open(6, 6);
  for (int i = 0; i < 32; ++i)
    batch.push_back({{Action::Right, Action::Down}, random_cond(3, crng),
                     SeqContext::of(m, {static_cast<int>(crng.uniform_int(4)),
                                        static_cast<int>(crng.uniform_int(4))},
                                    {static_cast<int>(2 + crng.uniform_int(4)),
                                     static_cast<int>(2 + crng.uniform_int(4))})});
  AdamOptimizer og(gan.g.parameters(), 1e-3), od(gan.d.parameters(), 1e-3);
  Rng zrng(57);
  auto [d_loss, g_loss] = gan_train_step(batch, gan, og, od, zrng);
  CHECK(d_loss == Catch::Approx(std::log(2.0)).margin(1e-9));
  CHECK(g_loss > 0.0);
}

TEST_CASE("the discriminator learns separable toy data with a frozen generator") {
  Rng rng(58);
  GanConfig cfg = tiny_gan(16, 6);
  GanModel gan(cfg, 4, rng);

  // separable data: real = straight runs, fake = alternating jitter, with
  // enough variety that the batch statistics are informative
  std::vector<std::vector<Action>> real_seqs, fake_seqs;
  Rng mix(580);
  for (int i = 0; i < 16; ++i) {
    Action run = mix.bernoulli(0.5) ? Action::Right : Action::Down;
    real_seqs.push_back({run, run, run});
    Action jig = mix.bernoulli(0.5) ? Action::Up : Action::Left;
    fake_seqs.push_back({jig, jig == Action::Up ? Action::Down : Action::Right, jig});
  }
  Tensor cond(16, 4, 0.25);
  auto real_steps = hpl::detail::encode_real_steps(real_seqs, cfg.max_len);
  auto fake_steps = hpl::detail::encode_real_steps(fake_seqs, cfg.max_len);

  AdamOptimizer od(gan.d.parameters(), 1e-2);
  Tensor labels(32, 1);
  for (int i = 0; i < 16; ++i) labels.values[i] = 1.0;
  GridMap toy_map = GridMap::open(8, 8);
  SeqContext ctx = SeqContext::of(toy_map, {3, 3}, {6, 3});
  Tensor pos0(32, 2), rel0(32, 2);
  for (int i = 0; i < 32; ++i) {
    pos0.at(i, 0) = ctx.x0;
    pos0.at(i, 1) = ctx.y0;
    rel0.at(i, 0) = ctx.gx - ctx.x0;
    rel0.at(i, 1) = ctx.gy - ctx.y0;
  }
  double prev = 1e18;
  int violations = 0;
  for (int step = 0; step < 100; ++step) {
    Tape tape;
    auto cv = tape.constant(cond);
    auto cond2 = tape.concat_rows({cv, cv});
    auto pv = tape.constant(pos0);
    auto rv = tape.constant(rel0);
    auto dv = tape.constant(hpl::detail::displacement_rows(ctx));
    std::vector<Tape::Var> steps;
    for (std::size_t t = 0; t < cfg.max_len; ++t)
      steps.push_back(tape.concat_rows(
          {tape.constant(real_steps[t]), tape.constant(fake_steps[t])}));
    auto scores =
        hpl::detail::discriminator_scores(tape, gan.d, steps, cond2, pv, rv, dv, true);
    auto loss = tape.bce(scores, labels);
    double v = tape.val(loss).item();
    if (v >= prev) ++violations;
    prev = v;
    tape.backward(loss);
    od.step();
  }
  CHECK(violations <= 5);
  CHECK(prev < std::log(2.0));
}

TEST_CASE("trained discriminator prefers expert paths over noise strings") {
  Rng rng(59);
  auto instances = generate_instances(6, 4, 4, 0.0, 1, 524);
  GanConfig cfg = tiny_gan(32, 10);
  GanModel gan(cfg, condition_dim(instances[0].map), rng);
  auto pool = build_gan_pool(instances);
  train_gan(gan, pool, 200, 20, false);

  Rng noise(60);
  double expert = 0.0, garbage = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& ex = pool[i];
    const auto& agent = instances[i].scenario.agents[0];
    expert += discriminate(ex.expert, ex.condition, instances[i].map, agent.start, agent.goal,
                           gan.d);
    std::vector<Action> junk;
    for (std::size_t k = 0; k < ex.expert.size(); ++k)
      junk.push_back(action_of_sym(static_cast<int>(noise.uniform_int(5))));
    garbage += discriminate(junk, ex.condition, instances[i].map, agent.start, agent.goal,
                            gan.d);
  }
  CHECK(expert > garbage);
}

TEST_CASE("generator and discriminator gradients pass finite differences") {
  Rng rng(61);
  GanConfig cfg = tiny_gan(8, 4);
  GanModel gan(cfg, 3, rng);
  const std::size_t B = 3;
  Tensor z(B, cfg.noise_dim);
  for (auto& v : z.values) v = rng.normal();
  Tensor cond(B, 3);
  for (auto& v : cond.values) v = rng.uniform(-1, 1);
  Tensor ones(B, 1, 1.0);
  GridMap m = GridMap::open(5, 5);
  SeqContext ctx = SeqContext::of(m, {2, 2}, {4, 0});
  Tensor pos0(B, 2), rel0(B, 2);
  for (std::size_t i = 0; i < B; ++i) {
    pos0.at(i, 0) = ctx.x0;
    pos0.at(i, 1) = ctx.y0;
    rel0.at(i, 0) = ctx.gx - ctx.x0;
    rel0.at(i, 1) = ctx.gy - ctx.y0;
  }

  auto g_loss = [&](bool with_grad) {
    Tape tape;
    auto zv = tape.constant(z);
    auto cv = tape.constant(cond);
    auto pv = tape.constant(pos0);
    auto rv = tape.constant(rel0);
    auto dv = tape.constant(hpl::detail::displacement_rows(ctx));
    // the smooth rollout exercises the same weights the hard path trains
    auto fake = hpl::detail::generator_rollout(tape, gan.g, zv, cv, pv, rv, dv, cfg.max_len,
                                               true, false);
    auto score = hpl::detail::discriminator_scores(tape, gan.d, fake, cv, pv, rv, dv, true);
    auto loss = tape.bce(score, ones);
    double v = tape.val(loss).item();
    if (with_grad) tape.backward(loss);
    return v;
  };

  std::vector<Tensor*> g_checked{&gan.g.w_in, &gan.g.w_h, &gan.g.out_w, &gan.g.embed_sym};
  for (Tensor* tensor : g_checked) {
    for (Tensor* t : gan.parameters()) t->zero_grad();
    g_loss(true);
    Tensor snapshot = *tensor;
    auto f = [&](const Tensor& probe) {
      std::vector<double> saved = tensor->values;
      tensor->values = probe.values;
      double v = g_loss(false);
      tensor->values = saved;
      return v;
    };
    CHECK(finite_diff_check(f, snapshot, 1e-5) < 1e-4);
  }

  std::vector<Tensor*> d_checked{&gan.d.w_in, &gan.d.w_h, &gan.d.out_w};
  for (Tensor* tensor : d_checked) {
    for (Tensor* t : gan.parameters()) t->zero_grad();
    g_loss(true);
    Tensor snapshot = *tensor;
    auto f = [&](const Tensor& probe) {
      std::vector<double> saved = tensor->values;
      tensor->values = probe.values;
      double v = g_loss(false);
      tensor->values = saved;
      return v;
    };
    CHECK(finite_diff_check(f, snapshot, 1e-5) < 1e-4);
  }
}

TEST_CASE("repair keeps already-valid sequences unchanged") {
  GridMap m = GridMap::open(4, 1);
  std::vector<Action> raw{Action::Right, Action::Right, Action::Right};
  auto res = repair(m, raw, {0, 0}, {3, 0});
  REQUIRE(res.path.has_value());
  CHECK(res.truncated_at == 3);
  CHECK(derive_actions(*res.path) == raw);
  CHECK(validate_path(m, *res.path, {0, 0}, {3, 0}));
}

TEST_CASE("repair falls back to pure search when the first move is illegal") {
  GridMap m = parse_map("type octile\nheight 2\nwidth 3\nmap\n.@.\n...\n");
  std::vector<Action> raw{Action::Right};  // walks straight into the wall
  auto res = repair(m, raw, {0, 0}, {2, 0});
  REQUIRE(res.path.has_value());
  CHECK(res.truncated_at == 0);
  auto pure = astar(CostField::uniform(m), m, {0, 0}, {2, 0});
  CHECK(res.path->cells == pure.path.cells);
}

TEST_CASE("repair rejects unreachable goals with the truncation point") {
  GridMap m = parse_map("type octile\nheight 1\nwidth 3\nmap\n.@.\n");
  auto res = repair(m, {Action::Right, Action::Left}, {0, 0}, {2, 0});
  CHECK_FALSE(res.path.has_value());
  CHECK(res.truncated_at == 0);
}

TEST_CASE("repaired output always validates") {
  Rng rng(62);
  auto instances = generate_instances(10, 6, 6, 0.25, 1, 525);
  for (const auto& inst : instances) {
    const auto& agent = inst.scenario.agents[0];
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<Action> raw;
      for (std::size_t k = 0; k < rng.uniform_int(12); ++k)
        raw.push_back(action_of_sym(static_cast<int>(rng.uniform_int(5))));
      auto res = repair(inst.map, raw, agent.start, agent.goal);
      REQUIRE(res.path.has_value());  // instances are generated solvable
      CHECK(validate_path(inst.map, *res.path, agent.start, agent.goal));
    }
  }
}

TEST_CASE("select_best prefers short paths then discriminator score then index") {
  GridMap m = GridMap::open(8, 1);
  auto mk = [&](std::size_t len, double score) {
    Candidate c;
    for (std::size_t i = 0; i < len; ++i) c.raw.push_back(Action::Right);
    c.score = score;
    auto res = repair(m, c.raw, {0, 0}, {static_cast<int>(len), 0});
    c.repaired = res.path;
    return c;
  };

  CandidateSet single;
  single.items.push_back(mk(4, 0.5));
  CHECK(select_best_index(single) == 0);

  CandidateSet by_len;
  by_len.items.push_back(mk(6, 0.9));
  by_len.items.push_back(mk(4, 0.1));
  CHECK(select_best_index(by_len) == 1);

  CandidateSet by_score;
  by_score.items.push_back(mk(4, 0.3));
  by_score.items.push_back(mk(4, 0.8));
  by_score.items.push_back(mk(4, 0.8));
  CHECK(select_best_index(by_score) == 1);

  CandidateSet none;
  none.items.push_back(Candidate{});
  CHECK_THROWS_AS(select_best(none), AllRejected);
}
