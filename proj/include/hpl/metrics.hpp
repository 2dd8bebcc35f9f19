#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>

#include "hpl/gridworld.hpp"
#include "hpl/pipeline.hpp"

namespace hpl {

struct ZeroOptimal : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MetricsConfig {
  double power = 1.0;      // average robot power, watts
  double step_time = 1.0;  // seconds per timestep; a Wait takes one step_time
  // Literal ratio planned/optimal instead of the bounded optimal/planned
  // form; see docs/design-notes.md.
  bool literal_time_efficiency = false;

  void validate() const {
    if (power <= 0.0 || step_time <= 0.0)
      throw std::invalid_argument("metrics: power and step_time must be positive");
  }
};

struct MetricsReport {
  double path_length = 0.0;      // cells moved
  double time_efficiency = 0.0;  // percent
  double energy = 0.0;           // joules
  std::size_t parameters = 0;
  double training_time_s = 0.0;
  double inference_time_ms = 0.0;
};

/// Sum of per-step distances: a move contributes 1, a Wait contributes 0.
inline double path_length(const Path& p) {
  if (p.cells.empty()) throw std::invalid_argument("path_length: empty path");
  return static_cast<double>(path_move_count(p));
}

/// Traversal time under the unit-speed model: every timestep (moves and
/// Waits alike) takes step_time seconds.
inline double time_planned(const Path& p, const MetricsConfig& cfg) {
  cfg.validate();
  return static_cast<double>(p.timesteps()) * cfg.step_time;
}

/// (optimal / planned) × 100, clamped to 100 so that 100% means optimal.
inline double time_efficiency(double planned_time, double optimal_time,
                              const MetricsConfig& cfg = {}) {
  if (planned_time < 0.0 || optimal_time < 0.0)
    throw std::invalid_argument("time_efficiency: negative time");
  if (optimal_time == 0.0) {
    if (planned_time > 0.0) throw ZeroOptimal("optimal time is zero but planned time is not");
    return 100.0;
  }
  if (cfg.literal_time_efficiency) return planned_time / optimal_time * 100.0;
  return std::min(100.0, optimal_time / planned_time * 100.0);
}

inline double energy(double planned_time, const MetricsConfig& cfg) {
  cfg.validate();
  return cfg.power * planned_time;
}

/// Total learnable scalars across the stages enabled by the pipeline config.
inline std::size_t count_params(Models& models, const PipelineConfig& config) {
  std::size_t n = 0;
  if (config.use_transformer && models.transformer) n += models.transformer->param_count();
  if (config.use_gnn && models.gcn) n += models.gcn->param_count();
  if (config.use_gan && models.gan) n += models.gan->param_count();
  return n;
}

}  // namespace hpl
