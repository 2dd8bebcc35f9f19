#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "hpl/gan.hpp"
#include "hpl/gcn.hpp"
#include "hpl/gridworld.hpp"
#include "hpl/mapgen.hpp"
#include "hpl/optim.hpp"
#include "hpl/search.hpp"
#include "hpl/transformer.hpp"

namespace hpl {

/// Imitation targets: one example per (instance, agent), expert action
/// sequence from unit-cost optimal search.
inline std::vector<TrainExample> build_imitation_set(const std::vector<Instance>& instances) {
  std::vector<TrainExample> out;
  for (const auto& inst : instances) {
    CostField unit = CostField::uniform(inst.map);
    for (const auto& agent : inst.scenario.agents) {
      SearchResult r = astar(unit, inst.map, agent.start, agent.goal);
      out.push_back(TrainExample{tokenize_env(inst.map, agent.start, agent.goal),
                                 derive_actions(r.path)});
    }
  }
  return out;
}

/// Minibatch imitation training; batches are drawn with a per-step forked
/// stream so the loss curve is a pure function of the seed. Returns the
/// final step's loss.
inline double train_transformer(TransformerParams& params,
                                const std::vector<TrainExample>& examples, std::size_t steps,
                                std::size_t batch, double lr, std::uint64_t seed,
                                std::vector<double>* loss_log = nullptr) {
  if (examples.empty()) throw std::invalid_argument("train_transformer: no examples");
  AdamOptimizer opt(params.parameters(), lr);
  double loss = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    Rng rng = Rng::fork(seed, s);
    std::vector<TrainExample> mb;
    mb.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b)
      mb.push_back(examples[rng.uniform_int(examples.size())]);
    loss = train_step(mb, params, opt);
    if (loss_log) loss_log->push_back(loss);
  }
  return loss;
}

struct ImitationEval {
  std::size_t total = 0;
  std::size_t valid = 0;        // decoded sequence executes start -> goal
  std::size_t within_bound = 0;  // valid and length <= ratio * optimal
  double valid_rate() const { return total ? static_cast<double>(valid) / total : 0.0; }
  double within_rate() const { return valid ? static_cast<double>(within_bound) / valid : 0.0; }
};

/// Decode each instance with the planner alone (no repair, no fallback) and
/// measure validity and length quality against optimal search.
inline ImitationEval evaluate_imitation(TransformerParams& params,
                                        const std::vector<Instance>& instances,
                                        double length_ratio = 1.2) {
  ImitationEval ev;
  for (const auto& inst : instances) {
    CostField unit = CostField::uniform(inst.map);
    for (const auto& agent : inst.scenario.agents) {
      ++ev.total;
      Tensor memory = encode(tokenize_env(inst.map, agent.start, agent.goal), params);
      std::size_t cap = 4 * static_cast<std::size_t>(inst.map.width + inst.map.height);
      std::vector<Action> acts = greedy_decode(memory, params, cap);
      ActionTrace trace = follow_actions(inst.map, agent.start, acts);
      if (trace.first_invalid != acts.size() || trace.cells.back() != agent.goal) continue;
      ++ev.valid;
      double optimal = astar(unit, inst.map, agent.start, agent.goal).cost;
      double length = static_cast<double>(path_move_count(Path{trace.cells}));
      if (optimal == 0.0 ? length == 0.0 : length <= length_ratio * optimal) ++ev.within_bound;
    }
  }
  return ev;
}

/// 0/1 node labels: membership in the unit-cost optimal path of any agent.
inline std::vector<double> path_membership_target(const EnvGraph& graph, const GridMap& map,
                                                  const Scenario& scenario) {
  std::vector<double> target(graph.nodes.size(), 0.0);
  CostField unit = CostField::uniform(map);
  for (const auto& agent : scenario.agents) {
    SearchResult r = astar(unit, map, agent.start, agent.goal);
    for (Cell c : r.path.cells) target[graph.node_of(map, c)] = 1.0;
  }
  return target;
}

inline double train_gcn(GcnParams& params, const std::vector<Instance>& instances,
                        std::size_t steps, double lr, std::uint64_t seed,
                        std::vector<double>* loss_log = nullptr) {
  if (instances.empty()) throw std::invalid_argument("train_gcn: no instances");
  struct Prepared {
    EnvGraph graph;
    std::vector<double> target;
  };
  std::vector<Prepared> prepared;
  prepared.reserve(instances.size());
  for (const auto& inst : instances) {
    EnvGraph g = build_graph(inst.map, inst.scenario);
    auto t = path_membership_target(g, inst.map, inst.scenario);
    prepared.push_back({std::move(g), std::move(t)});
  }
  AdamOptimizer opt(params.parameters(), lr);
  double loss = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    Rng rng = Rng::fork(seed, s);
    const Prepared& p = prepared[rng.uniform_int(prepared.size())];
    loss = gcn_train_step(p.graph, p.target, params, opt);
    if (loss_log) loss_log->push_back(loss);
  }
  return loss;
}

/// Expert pool for adversarial training: one (actions, condition) pair per
/// (instance, agent). The graph-embedding block of the condition is filled
/// when a graph encoder is supplied and zero otherwise.
inline std::vector<GanExample> build_gan_pool(const std::vector<Instance>& instances,
                                              GcnParams* gcn = nullptr) {
  std::vector<GanExample> pool;
  for (const auto& inst : instances) {
    CostField unit = CostField::uniform(inst.map);
    GraphEmbedding hg;
    if (gcn) {
      EnvGraph g = build_graph(inst.map, inst.scenario);
      hg = gcn_run(g, *gcn).embedding;
    }
    for (const auto& agent : inst.scenario.agents) {
      SearchResult r = astar(unit, inst.map, agent.start, agent.goal);
      pool.push_back(GanExample{derive_actions(r.path),
                                make_condition(gcn ? &hg : nullptr, inst.map, agent.start,
                                               agent.goal),
                                SeqContext::of(inst.map, agent.start, agent.goal)});
    }
  }
  return pool;
}

struct GanTrainResult {
  std::size_t iterations = 0;
  std::vector<std::pair<double, double>> losses;  // (d_loss, g_loss) per iteration
};

/// Alternating adversarial training over a fixed example pool. Runs at
/// least cfg.min_iterations rounds regardless of the request; the learning
/// rate decays by cfg.lr_decay every cfg.decay_every iterations.
inline GanTrainResult train_gan(GanModel& gan, const std::vector<GanExample>& pool,
                                std::size_t requested_iterations, std::uint64_t seed,
                                bool record_losses = true) {
  if (pool.empty()) throw std::invalid_argument("train_gan: empty example pool");
  const std::size_t iterations = std::max(requested_iterations, gan.cfg.min_iterations);
  AdamOptimizer opt_g(gan.g.parameters(), gan.cfg.lr);
  AdamOptimizer opt_d(gan.d.parameters(), gan.cfg.lr);
  GanTrainResult result;
  result.iterations = iterations;
  if (record_losses) result.losses.reserve(iterations);
  for (std::size_t it = 0; it < iterations; ++it) {
    if (gan.cfg.lr_decay != 1.0 && gan.cfg.decay_every > 0) {
      double alpha = gan.cfg.lr * std::pow(gan.cfg.lr_decay,
                                           static_cast<double>(it / gan.cfg.decay_every));
      opt_g.set_alpha(alpha);
      opt_d.set_alpha(alpha);
    }
    Rng rng = Rng::fork(seed, it);
    std::vector<GanExample> batch;
    batch.reserve(gan.cfg.batch);
    for (std::size_t b = 0; b < gan.cfg.batch; ++b)
      batch.push_back(pool[rng.uniform_int(pool.size())]);
    auto [d_loss, g_loss] = gan_train_step(batch, gan, opt_g, opt_d, rng);
    if (record_losses) result.losses.emplace_back(d_loss, g_loss);
  }
  return result;
}

/// Fraction of raw argmax rollouts that already execute start -> goal.
inline double gan_raw_validity(GanModel& gan, const std::vector<Instance>& instances,
                               std::uint64_t seed, GcnParams* gcn = nullptr) {
  std::size_t total = 0, valid = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    GraphEmbedding hg;
    if (gcn) {
      EnvGraph g = build_graph(inst.map, inst.scenario);
      hg = gcn_run(g, *gcn).embedding;
    }
    for (const auto& agent : inst.scenario.agents) {
      ++total;
      auto cond = make_condition(gcn ? &hg : nullptr, inst.map, agent.start, agent.goal);
      Rng rng = Rng::fork(seed, 0xe7a1 + i);
      std::vector<double> z(gan.cfg.noise_dim);
      for (double& v : z) v = rng.normal();
      auto raw = generate(z, cond, inst.map, agent.start, agent.goal, gan.g,
                          gan.cfg.max_len);
      ActionTrace trace = follow_actions(inst.map, agent.start, raw);
      if (trace.first_invalid == raw.size() && trace.cells.back() == agent.goal) ++valid;
    }
  }
  return total ? static_cast<double>(valid) / total : 0.0;
}

}  // namespace hpl
