#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "hpl/mapgen.hpp"
#include "hpl/metrics.hpp"
#include "hpl/multi_agent.hpp"
#include "hpl/pipeline.hpp"

namespace hpl {

struct AblationDataset {
  std::string name;
  std::vector<Instance> instances;
};

struct NamedPipelineConfig {
  std::string name;
  PipelineConfig config;
};

/// The four module rows, in report order.
inline std::vector<NamedPipelineConfig> standard_ablation_configs(double lambda = 0.5,
                                                                  std::size_t candidates = 8) {
  PipelineConfig base;
  base.lambda = lambda;
  base.candidates = candidates;
  std::vector<NamedPipelineConfig> out;
  PipelineConfig c = base;
  out.push_back({"baseline", c});
  c = base;
  c.use_gnn = true;
  out.push_back({"+gnn", c});
  c = base;
  c.use_gan = true;
  out.push_back({"+gan", c});
  c = base;
  c.use_gnn = true;
  c.use_gan = true;
  out.push_back({"+gnn+gan", c});
  return out;
}

struct AblationRow {
  std::string config_name;
  std::string dataset;
  double path_length = 0.0;
  double time_efficiency = 0.0;
  double energy = 0.0;
  std::size_t parameters = 0;
  double training_time_s = 0.0;
  double inference_time_ms = 0.0;
  std::size_t failures = 0;
};

namespace detail {

struct EvalTask {
  const Instance* instance;
  std::size_t agent;
  std::uint64_t seed;
};

struct EvalOutcome {
  bool failed = true;
  double length = 0.0;
  double efficiency = 0.0;
  double energy_j = 0.0;
  double inference_ms = 0.0;
};

inline EvalOutcome evaluate_one(const EvalTask& task, Models& models,
                                const PipelineConfig& config, const MetricsConfig& mcfg) {
  EvalOutcome out;
  const Instance& inst = *task.instance;
  const AgentTask& agent = inst.scenario.agents[task.agent];
  try {
    auto t0 = std::chrono::steady_clock::now();
    PlanResult r = hybrid_plan(inst.map, agent.start, agent.goal, models, config, task.seed);
    out.inference_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    double planned = time_planned(r.path, mcfg);
    double optimal =
        agent.optimal_hint.value_or(astar(CostField::uniform(inst.map), inst.map, agent.start,
                                          agent.goal)
                                        .cost) *
        mcfg.step_time;
    out.length = path_length(r.path);
    out.efficiency = time_efficiency(planned, optimal, mcfg);
    out.energy_j = energy(planned, mcfg);
    out.failed = false;
  } catch (const std::exception&) {
    out.failed = true;
  }
  return out;
}

}  // namespace detail

inline double value_or(const std::map<std::string, double>& m, const std::string& key) {
  auto it = m.find(key);
  return it == m.end() ? 0.0 : it->second;
}

/// Evaluate every (config, dataset) pair and aggregate per-row means.
/// Instances are independent, so they may be evaluated by `threads` workers;
/// results land in per-task slots, keeping every aggregate identical no
/// matter the thread count. Planner failures are counted per row, never
/// fatal. Stage training times come from checkpoint metadata, keyed
/// "transformer" / "gnn" / "gan".
inline std::vector<AblationRow> run_ablation(const std::vector<AblationDataset>& datasets,
                                             const std::vector<NamedPipelineConfig>& configs,
                                             Models& models, const MetricsConfig& mcfg,
                                             std::uint64_t seed,
                                             const std::map<std::string, double>& training_s = {},
                                             std::size_t threads = 1) {
  std::vector<AblationRow> rows;
  for (const auto& cfg : configs) {
    for (const auto& ds : datasets) {
      std::vector<detail::EvalTask> tasks;
      std::uint64_t task_id = 0;
      for (const auto& inst : ds.instances)
        for (std::size_t a = 0; a < inst.scenario.agents.size(); ++a)
          tasks.push_back({&inst, a, Rng::fork(seed, task_id++).next_u64()});

      std::vector<detail::EvalOutcome> outcomes(tasks.size());
      std::size_t workers = std::max<std::size_t>(1, std::min(threads, tasks.size()));
      if (workers == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i)
          outcomes[i] = detail::evaluate_one(tasks[i], models, cfg.config, mcfg);
      } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < workers; ++w)
          pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1))
              outcomes[i] = detail::evaluate_one(tasks[i], models, cfg.config, mcfg);
          });
        for (auto& t : pool) t.join();
      }

      AblationRow row;
      row.config_name = cfg.name;
      row.dataset = ds.name;
      row.parameters = count_params(models, cfg.config);
      if (cfg.config.use_transformer) row.training_time_s += value_or(training_s, "transformer");
      if (cfg.config.use_gnn) row.training_time_s += value_or(training_s, "gnn");
      if (cfg.config.use_gan) row.training_time_s += value_or(training_s, "gan");
      std::size_t ok = 0;
      for (const auto& o : outcomes) {
        if (o.failed) {
          ++row.failures;
          continue;
        }
        ++ok;
        row.path_length += o.length;
        row.time_efficiency += o.efficiency;
        row.energy += o.energy_j;
        row.inference_time_ms += o.inference_ms;
      }
      if (ok > 0) {
        row.path_length /= ok;
        row.time_efficiency /= ok;
        row.energy /= ok;
        row.inference_time_ms /= ok;
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

constexpr const char* kAblationCsvHeader =
    "config,dataset,path_length,time_efficiency,energy,parameters,training_time_s,"
    "inference_time_ms,failures";

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = kAblationCsvHeader;
  out += "\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f,%zu,%.3f,%.3f,%zu\n",
                  r.config_name.c_str(), r.dataset.c_str(), r.path_length, r.time_efficiency,
                  r.energy, r.parameters, r.training_time_s, r.inference_time_ms, r.failures);
    out += buf;
  }
  return out;
}

inline std::string ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"config", r.config_name},
                   {"dataset", r.dataset},
                   {"path_length", r.path_length},
                   {"time_efficiency", r.time_efficiency},
                   {"energy", r.energy},
                   {"parameters", r.parameters},
                   {"training_time_s", r.training_time_s},
                   {"inference_time_ms", r.inference_time_ms},
                   {"failures", r.failures}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace hpl
