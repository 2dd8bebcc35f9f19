#pragma once

#include <stdexcept>
#include <vector>

#include "hpl/graph_env.hpp"
#include "hpl/optim.hpp"
#include "hpl/search.hpp"
#include "hpl/tensor.hpp"

namespace hpl {

struct LengthMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr std::size_t kGcnHidden = 32;

/// Per-node desirability in [0,1], aligned with EnvGraph::nodes.
using NodeScores = std::vector<double>;

/// Global graph summary vector (width kGcnHidden).
using GraphEmbedding = std::vector<double>;

struct GcnParams {
  std::vector<Tensor> layers;  // 6→32, 32→32
  Tensor readout_w;            // 32 × 32
  Tensor head_w;               // 64 × 1  (node state ++ graph embedding)
  Tensor head_b;               // 1 × 1

  GcnParams() = default;

  explicit GcnParams(Rng& rng, std::size_t depth = 2) {
    std::size_t in = kNodeFeatureDim;
    for (std::size_t k = 0; k < depth; ++k) {
      Tensor w(in, kGcnHidden);
      init_uniform(w, in, kGcnHidden, rng);
      layers.push_back(std::move(w));
      in = kGcnHidden;
    }
    readout_w = Tensor(kGcnHidden, kGcnHidden);
    init_uniform(readout_w, kGcnHidden, kGcnHidden, rng);
    head_w = Tensor(2 * kGcnHidden, 1);
    init_uniform(head_w, 2 * kGcnHidden, 1, rng);
    head_b = Tensor(1, 1);
    mark_grads();
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (auto& w : layers) out.push_back(&w);
    out.push_back(&readout_w);
    out.push_back(&head_w);
    out.push_back(&head_b);
    return out;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (Tensor* t : parameters()) n += t->size();
    return n;
  }

  void mark_grads() {
    for (Tensor* t : parameters()) t->requires_grad = true;
  }
};

/// One propagation step: ReLU(Â · H · W). Aggregation is the weighted
/// neighbor sum through Â; the update is the linear map plus ReLU.
inline Tape::Var gcn_layer_t(Tape& tape, Tape::Var h, Tape::Var a_hat, Tape::Var w) {
  const Tensor& A = tape.val(a_hat);
  const Tensor& H = tape.val(h);
  if (A.rows != A.cols || A.cols != H.rows) throw ShapeMismatch("gcn_layer: A/H shapes disagree");
  return tape.relu(tape.matmul(tape.matmul(a_hat, h), w));
}

inline Tensor gcn_layer(const Tensor& h, const Tensor& a_hat, const Tensor& w) {
  Tape tape;
  Tensor hh = h, aa = a_hat, ww = w;
  return tape.val(gcn_layer_t(tape, tape.constant(std::move(hh)), tape.constant(std::move(aa)),
                              tape.constant(std::move(ww))));
}

namespace detail {

struct GcnGraphVars {
  Tape::Var node_states;  // N × 32
  Tape::Var embedding;    // 1 × 32
  Tape::Var scores;       // N × 1
};

inline GcnGraphVars gcn_forward_t(Tape& tape, const EnvGraph& graph, GcnParams& params) {
  Tensor feats = graph.features;
  Tensor adj = graph.norm_adjacency;
  Tape::Var a_hat = tape.constant(std::move(adj));
  Tape::Var h = tape.constant(std::move(feats));
  for (auto& w : params.layers) h = gcn_layer_t(tape, h, a_hat, tape.leaf(w));
  Tape::Var embedding = tape.matmul(tape.mean_rows(h), tape.leaf(params.readout_w));
  Tape::Var joined = tape.concat_cols({h, tape.tile_rows(embedding, tape.val(h).rows)});
  Tape::Var scores = tape.sigmoid(
      tape.add_row(tape.matmul(joined, tape.leaf(params.head_w)), tape.leaf(params.head_b)));
  return {h, embedding, scores};
}

}  // namespace detail

/// Mean over node states followed by the readout projection.
inline GraphEmbedding readout(const Tensor& node_states, GcnParams& params) {
  Tape tape;
  Tensor h = node_states;
  Tape::Var emb =
      tape.matmul(tape.mean_rows(tape.constant(std::move(h))), tape.leaf(params.readout_w));
  return tape.val(emb).values;
}

struct GcnOutput {
  NodeScores scores;
  GraphEmbedding embedding;
};

inline GcnOutput gcn_run(const EnvGraph& graph, GcnParams& params) {
  Tape tape;
  auto vars = detail::gcn_forward_t(tape, graph, params);
  GcnOutput out;
  out.scores = tape.val(vars.scores).values;
  out.embedding = tape.val(vars.embedding).values;
  return out;
}

inline NodeScores score_nodes(const EnvGraph& graph, GcnParams& params) {
  return gcn_run(graph, params).scores;
}

/// MSE against 0/1 path-membership targets; one optimizer update. Returns
/// the pre-step loss.
inline double gcn_train_step(const EnvGraph& graph, const std::vector<double>& target,
                             GcnParams& params, AdamOptimizer& opt) {
  if (target.size() != graph.nodes.size())
    throw LengthMismatch("gcn_train_step: target length != node count");
  Tape tape;
  auto vars = detail::gcn_forward_t(tape, graph, params);
  Tensor t(target.size(), 1);
  t.values = target;
  Tape::Var loss = tape.mse(vars.scores, std::move(t));
  double value = tape.val(loss).item();
  tape.backward(loss);
  opt.step();
  return value;
}

/// cost(cell) = 1 + lambda * (1 - score(cell)); the floor of 1 preserves
/// heuristic admissibility for any lambda >= 0.
inline CostField bias_costs(const GridMap& map, const NodeScores& scores, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("bias_costs: lambda must be nonnegative");
  CostField field = CostField::uniform(map);
  std::size_t v = 0;
  for (std::size_t idx = 0; idx < map.cell_count(); ++idx) {
    if (!map.passable[idx]) continue;
    if (v >= scores.size()) throw LengthMismatch("bias_costs: scores shorter than node list");
    field.cost[idx] = 1.0 + lambda * (1.0 - scores[v]);
    ++v;
  }
  if (v != scores.size()) throw LengthMismatch("bias_costs: scores longer than node list");
  return field;
}

}  // namespace hpl
