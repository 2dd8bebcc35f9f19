#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hpl/gan.hpp"
#include "hpl/gcn.hpp"
#include "hpl/gridworld.hpp"
#include "hpl/search.hpp"
#include "hpl/transformer.hpp"

namespace hpl {

struct PipelineConfig {
  bool use_transformer = false;
  bool use_gnn = false;
  bool use_gan = false;
  double lambda = 0.5;
  std::size_t candidates = 8;
  bool fallback = true;  // classical search when no stage yields a path

  void validate() const {
    if (!use_transformer && !use_gnn && !use_gan && !fallback)
      throw std::invalid_argument("pipeline: enable at least one stage or the fallback");
    if (lambda < 0.0) throw std::invalid_argument("pipeline: lambda must be nonnegative");
  }
};

struct Models {
  std::optional<TransformerParams> transformer;
  std::optional<GcnParams> gcn;
  std::optional<GanModel> gan;
};

struct PlanResult {
  Path path;
  double cost = 0.0;                       // on the cost field used
  std::string provenance;                  // transformer | gan-candidate | astar-fallback
  std::map<std::string, double> stage_ms;  // wall-clock per stage
};

namespace detail {

class StageTimer {
 public:
  explicit StageTimer(std::map<std::string, double>& sink) : sink_(sink) {}
  template <typename F>
  auto time(const std::string& name, F&& fn) {
    auto t0 = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      sink_[name] = elapsed_ms(t0);
    } else {
      auto out = fn();
      sink_[name] = elapsed_ms(t0);
      return out;
    }
  }

 private:
  static double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  }
  std::map<std::string, double>& sink_;
};

inline double field_cost(const CostField& field, const GridMap& map, const Path& p) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < p.cells.size(); ++i)
    if (p.cells[i] != p.cells[i + 1]) total += field.at(map, p.cells[i + 1]);
  return total;
}

}  // namespace detail

/// Staged planning, composed in pipeline order:
///   1. graph encoder scores bias the cost field (unit costs otherwise)
///   2. the sequence planner proposes one candidate, kept only if valid
///   3. the generator proposes K candidates, each repaired onto the map
///   4. the best candidate wins (shortest, then discriminator score)
///   5. classical search on the cost field when no candidate survives
/// Every returned path is valid regardless of model quality.
inline PlanResult hybrid_plan(const GridMap& map, Cell start, Cell goal, Models& models,
                              const PipelineConfig& config, std::uint64_t seed = 0) {
  config.validate();
  if (config.use_transformer && !models.transformer)
    throw std::invalid_argument("hybrid_plan: transformer stage enabled without a model");
  if (config.use_gnn && !models.gcn)
    throw std::invalid_argument("hybrid_plan: gnn stage enabled without a model");
  if (config.use_gan && !models.gan)
    throw std::invalid_argument("hybrid_plan: gan stage enabled without a model");

  PlanResult result;
  detail::StageTimer timer(result.stage_ms);

  CostField field = CostField::uniform(map);
  GraphEmbedding embedding;
  if (config.use_gnn) {
    timer.time("gnn", [&] {
      EnvGraph graph = build_graph(map, Scenario{{AgentTask{start, goal, {}}}});
      GcnOutput out = gcn_run(graph, *models.gcn);
      embedding = std::move(out.embedding);
      field = bias_costs(map, out.scores, config.lambda);
    });
  }

  CandidateSet set;
  if (config.use_transformer) {
    timer.time("transformer", [&] {
      TokenSeq tokens = tokenize_env(map, start, goal);
      Tensor memory = encode(tokens, *models.transformer);
      std::size_t cap = static_cast<std::size_t>(4 * (map.width + map.height));
      std::vector<Action> acts = greedy_decode(memory, *models.transformer, cap);
      ActionTrace trace = follow_actions(map, start, acts);
      if (trace.first_invalid == acts.size() && trace.cells.back() == goal) {
        Candidate c;
        c.raw = std::move(acts);
        c.valid = true;
        c.repaired = Path{std::move(trace.cells)};
        c.provenance = "transformer";
        if (models.gan)
          c.score = discriminate(c.raw,
                                 make_condition(config.use_gnn ? &embedding : nullptr, map,
                                                start, goal),
                                 map, start, goal, models.gan->d);
        set.items.push_back(std::move(c));
      }
    });
  }

  if (config.use_gan) {
    timer.time("gan", [&] {
      GanModel& gan = *models.gan;
      auto cond = make_condition(config.use_gnn ? &embedding : nullptr, map, start, goal);
      for (std::size_t k = 0; k < config.candidates; ++k) {
        Rng rng = Rng::fork(seed, 0x6a0000 + k);  // one stream per candidate
        std::vector<double> z(gan.cfg.noise_dim);
        for (double& v : z) v = rng.normal();
        Candidate c;
        c.raw = generate(z, cond, map, start, goal, gan.g, gan.cfg.max_len);
        c.score = discriminate(c.raw, cond, map, start, goal, gan.d);
        RepairResult rep = repair(map, c.raw, start, goal);
        ActionTrace trace = follow_actions(map, start, c.raw);
        c.valid = trace.first_invalid == c.raw.size() && trace.cells.back() == goal;
        if (rep.path) {
          c.repaired = std::move(rep.path);
          c.provenance = "gan-candidate";
          set.items.push_back(std::move(c));
        }
      }
    });
  }

  if (!set.items.empty()) {
    std::size_t best = select_best_index(set);
    result.path = *set.items[best].repaired;
    result.provenance = set.items[best].provenance;
    result.cost = detail::field_cost(field, map, result.path);
    return result;
  }

  if (!config.fallback) throw NoPath("all pipeline stages failed and the fallback is disabled");
  SearchResult sr = timer.time("astar", [&] { return astar(field, map, start, goal); });
  result.path = std::move(sr.path);
  result.cost = sr.cost;
  result.provenance = "astar-fallback";
  return result;
}

/// Dynamic re-planning: discard the old plan and plan again from the
/// current cell on the updated map.
inline PlanResult replan(const GridMap& updated_map, Cell current, Cell goal, Models& models,
                         const PipelineConfig& config, std::uint64_t seed = 0) {
  if (!updated_map.is_passable(current))
    throw std::invalid_argument("replan: current cell is not passable on the updated map");
  return hybrid_plan(updated_map, current, goal, models, config, seed);
}

}  // namespace hpl
