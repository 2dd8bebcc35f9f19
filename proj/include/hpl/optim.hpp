#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "hpl/tensor.hpp"

namespace hpl {

/// Adam moment estimates for one parameter tensor:
///   m_t = b1·m_{t-1} + (1-b1)·g_t
///   v_t = b2·v_{t-1} + (1-b2)·g_t²
///   m̂ = m_t/(1-b1^t),  v̂ = v_t/(1-b2^t)
///   θ ← θ - α·m̂/(√v̂ + δ)
/// The smoothing term is added outside the square root; see
/// docs/design-notes.md.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double delta = 1e-8;
};

inline void adam_step(AdamState& state, Tensor& param, std::span<const double> grad) {
  if (grad.size() != param.size()) throw ShapeMismatch("adam_step: grad/param sizes differ");
  if (state.m.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  if (state.m.size() != param.size()) throw ShapeMismatch("adam_step: state/param sizes differ");
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    double g = grad[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    param.values[i] -= state.alpha * mhat / (std::sqrt(vhat) + state.delta);
  }
}

inline void adam_step(AdamState& state, Tensor& param, const Tensor& grad) {
  if (!param.same_shape(grad)) throw ShapeMismatch("adam_step: grad shape differs");
  adam_step(state, param, std::span<const double>(grad.values));
}

/// One AdamState per parameter tensor, stepped together. Parameters are
/// bound at construction; gradients are read from Tensor::grad and cleared
/// after the step.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor*> params, double alpha = 0.001, double beta1 = 0.9,
                double beta2 = 0.999, double delta = 1e-8)
      : params_(std::move(params)) {
    states_.resize(params_.size());
    for (auto& s : states_) {
      s.alpha = alpha;
      s.beta1 = beta1;
      s.beta2 = beta2;
      s.delta = delta;
    }
  }

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = *params_[i];
      p.ensure_grad();
      adam_step(states_[i], p, std::span<const double>(p.grad));
      p.zero_grad();
    }
  }

  void set_alpha(double alpha) {
    for (auto& s : states_) s.alpha = alpha;
  }
  double alpha() const { return states_.empty() ? 0.0 : states_[0].alpha; }
  long step_count() const { return states_.empty() ? 0 : states_[0].t; }

 private:
  std::vector<Tensor*> params_;
  std::vector<AdamState> states_;
};

}  // namespace hpl
