#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hpl/gcn.hpp"
#include "hpl/gridworld.hpp"
#include "hpl/optim.hpp"
#include "hpl/rng.hpp"
#include "hpl/search.hpp"
#include "hpl/tensor.hpp"

namespace hpl {

struct AllRejected : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Generator/discriminator sequence symbols: the five actions plus EOS.
enum : int {
  kSymUp = 0,
  kSymDown = 1,
  kSymLeft = 2,
  kSymRight = 3,
  kSymWait = 4,
  kSymEos = 5,
};
constexpr std::size_t kSymCount = 6;

inline int sym_of_action(Action a) {
  switch (a) {
    case Action::Up: return kSymUp;
    case Action::Down: return kSymDown;
    case Action::Left: return kSymLeft;
    case Action::Right: return kSymRight;
    case Action::Wait: return kSymWait;
  }
  return kSymWait;
}

inline Action action_of_sym(int s) {
  switch (s) {
    case kSymUp: return Action::Up;
    case kSymDown: return Action::Down;
    case kSymLeft: return Action::Left;
    case kSymRight: return Action::Right;
    default: return Action::Wait;
  }
}

struct GanConfig {
  std::size_t noise_dim = 32;      // paper range [10, 100]
  std::size_t hidden = 64;
  std::size_t act_embed = 8;
  std::size_t batch = 32;          // 32 or 64
  std::size_t max_len = 32;        // training/rollout horizon T
  double lr = 0.001;
  double lr_decay = 1.0;           // exponential factor applied per epoch
  std::size_t decay_every = 100;   // iterations per epoch for the decay
  std::size_t min_iterations = 1800;
  double temperature = 1.5;        // softens the straight-through gradient

  void validate() const {
    if (noise_dim < 10 || noise_dim > 100)
      throw std::invalid_argument("noise_dim must be in [10, 100]");
    if (batch != 32 && batch != 64) throw std::invalid_argument("batch must be 32 or 64");
    if (hidden == 0 || max_len == 0) throw std::invalid_argument("gan dims must be positive");
  }
};

/// Conditioning vector: graph embedding block (zeros when no graph encoder
/// feeds the pipeline) followed by start/goal coordinate one-hots.
inline std::size_t condition_dim(const GridMap& map) {
  return kGcnHidden + 2 * static_cast<std::size_t>(map.width + map.height);
}

inline std::vector<double> make_condition(const GraphEmbedding* hg, const GridMap& map,
                                          Cell start, Cell goal) {
  std::vector<double> cond(condition_dim(map), 0.0);
  if (hg) {
    if (hg->size() != kGcnHidden) throw ShapeMismatch("condition: bad embedding width");
    std::copy(hg->begin(), hg->end(), cond.begin());
  }
  std::size_t off = kGcnHidden;
  cond[off + start.x] = 1.0;
  off += map.width;
  cond[off + start.y] = 1.0;
  off += map.height;
  cond[off + goal.x] = 1.0;
  off += map.width;
  cond[off + goal.y] = 1.0;
  return cond;
}

/// Normalized kinematic frame for one rollout: where the agent starts and
/// how far one move steps, both in map-relative units. The dead-reckoned
/// position derived from it is fed to both networks at every step.
struct SeqContext {
  double x0 = 0.0, y0 = 0.0;          // start position / map extent
  double gx = 0.0, gy = 0.0;          // goal position / map extent
  double step_x = 0.0, step_y = 0.0;  // 1/width, 1/height

  static SeqContext of(const GridMap& map, Cell start, Cell goal) {
    return {static_cast<double>(start.x) / map.width,
            static_cast<double>(start.y) / map.height,
            static_cast<double>(goal.x) / map.width,
            static_cast<double>(goal.y) / map.height,
            1.0 / map.width,
            1.0 / map.height};
  }
  friend bool operator==(const SeqContext& a, const SeqContext& b) {
    return a.step_x == b.step_x && a.step_y == b.step_y;
  }
};

namespace detail {

/// Per-symbol displacement rows in normalized units (EOS and Wait do not
/// move).
inline Tensor displacement_rows(const SeqContext& ctx) {
  Tensor d(kSymCount, 2);
  d.at(kSymUp, 1) = -ctx.step_y;
  d.at(kSymDown, 1) = ctx.step_y;
  d.at(kSymLeft, 0) = -ctx.step_x;
  d.at(kSymRight, 0) = ctx.step_x;
  return d;
}

}  // namespace detail

/// Recurrent generator: cell input is previous-action embedding ++ current
/// dead-reckoned position and offset-to-goal ++ noise ++ condition; a
/// batch-norm sits between the recurrent cell and the output head.
struct GeneratorParams {
  GanConfig cfg;
  std::size_t cond_dim = 0;
  Tensor embed_bos;  // 1 × act_embed
  Tensor embed_sym;  // kSymCount × act_embed
  Tensor w_in;       // (act_embed + noise + cond) × hidden
  Tensor w_h;        // hidden × hidden
  Tensor b;          // 1 × hidden
  BatchNorm bn;
  Tensor out_w;  // hidden × kSymCount
  Tensor out_b;  // 1 × kSymCount

  GeneratorParams() = default;

  GeneratorParams(const GanConfig& config, std::size_t condition_width, Rng& rng)
      : cfg(config), cond_dim(condition_width), bn(config.hidden) {
    cfg.validate();
    std::size_t in = cfg.act_embed + 4 + cfg.noise_dim + cond_dim;
    embed_bos = Tensor(1, cfg.act_embed);
    embed_sym = Tensor(kSymCount, cfg.act_embed);
    w_in = Tensor(in, cfg.hidden);
    w_h = Tensor(cfg.hidden, cfg.hidden);
    b = Tensor(1, cfg.hidden);
    out_w = Tensor(cfg.hidden, kSymCount);
    out_b = Tensor(1, kSymCount);
    init_uniform(embed_bos, 1, cfg.act_embed, rng);
    init_uniform(embed_sym, kSymCount, cfg.act_embed, rng);
    init_uniform(w_in, in, cfg.hidden, rng);
    init_uniform(w_h, cfg.hidden, cfg.hidden, rng);
    init_uniform(out_w, cfg.hidden, kSymCount, rng);
    mark_grads();
  }

  std::vector<Tensor*> parameters() {
    return {&embed_bos, &embed_sym, &w_in, &w_h, &b, &out_w, &out_b};
  }
  void mark_grads() {
    for (Tensor* t : parameters()) t->requires_grad = true;
  }
  void zero_grads() {
    for (Tensor* t : parameters()) t->zero_grad();
  }
};

/// Recurrent encoder over (soft) action sequences, conditioned like the
/// generator; batch-norm then affine + sigmoid on the final hidden state.
struct DiscriminatorParams {
  GanConfig cfg;
  std::size_t cond_dim = 0;
  Tensor w_in;  // (kSymCount + cond) × hidden
  Tensor w_h;
  Tensor b;
  BatchNorm bn;
  Tensor out_w;  // hidden × 1
  Tensor out_b;  // 1 × 1

  DiscriminatorParams() = default;

  DiscriminatorParams(const GanConfig& config, std::size_t condition_width, Rng& rng)
      : cfg(config), cond_dim(condition_width), bn(config.hidden) {
    std::size_t in = kSymCount + 4 + cond_dim;
    w_in = Tensor(in, cfg.hidden);
    w_h = Tensor(cfg.hidden, cfg.hidden);
    b = Tensor(1, cfg.hidden);
    out_w = Tensor(cfg.hidden, 1);
    out_b = Tensor(1, 1);
    init_uniform(w_in, in, cfg.hidden, rng);
    init_uniform(w_h, cfg.hidden, cfg.hidden, rng);
    init_uniform(out_w, cfg.hidden, 1, rng);
    mark_grads();
  }

  std::vector<Tensor*> parameters() { return {&w_in, &w_h, &b, &out_w, &out_b}; }
  void mark_grads() {
    for (Tensor* t : parameters()) t->requires_grad = true;
  }
  void zero_grads() {
    for (Tensor* t : parameters()) t->zero_grad();
  }
};

struct GanModel {
  GanConfig cfg;
  std::size_t cond_dim = 0;
  GeneratorParams g;
  DiscriminatorParams d;

  GanModel() = default;
  GanModel(const GanConfig& config, std::size_t condition_width, Rng& rng)
      : cfg(config),
        cond_dim(condition_width),
        g(config, condition_width, rng),
        d(config, condition_width, rng) {}

  std::vector<Tensor*> parameters() {
    auto out = g.parameters();
    for (Tensor* t : d.parameters()) out.push_back(t);
    return out;
  }
  std::size_t param_count() {
    std::size_t n = 0;
    for (Tensor* t : parameters()) n += t->size();
    return n;
  }
};

namespace detail {

/// Unrolled generator over a batch: one B×kSymCount row distribution per
/// timestep, differentiable end to end (the next-step input is the
/// probability-weighted symbol embedding). With `hard` the forward pass
/// discretizes each step to the argmax one-hot (straight-through gradient),
/// matching what argmax rollouts produce at inference. Steps after a
/// sampled EOS are gated to zero rows, mirroring the encoding of real
/// sequences.
inline std::vector<Tape::Var> generator_rollout(Tape& tape, GeneratorParams& g, Tape::Var z,
                                                Tape::Var cond, Tape::Var pos0, Tape::Var rel0,
                                                Tape::Var delta, std::size_t steps, bool training,
                                                bool hard = true) {
  const std::size_t batch = tape.val(z).rows;
  Tape::Var h = tape.constant(Tensor(batch, g.cfg.hidden));
  Tape::Var prev = tape.embed_rows(tape.leaf(g.embed_bos), std::vector<int>(batch, 0));
  Tape::Var alive = tape.constant(Tensor(batch, 1, 1.0));
  Tape::Var ones = tape.constant(Tensor(batch, 1, 1.0));
  Tape::Var pos = pos0;
  Tape::Var rel = rel0;  // offset to goal; EOS is legitimate exactly at zero
  const double inv_temp = 1.0 / g.cfg.temperature;
  std::vector<Tape::Var> out_steps;
  out_steps.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Tape::Var x = tape.concat_cols({prev, pos, rel, z, cond});
    Tape::Var pre = tape.add(tape.matmul(x, tape.leaf(g.w_in)), tape.matmul(h, tape.leaf(g.w_h)));
    h = tape.tanh_op(tape.add_row(pre, tape.leaf(g.b)));
    Tape::Var hb = tape.batch_norm(h, g.bn, training);
    Tape::Var logits = tape.add_row(tape.matmul(hb, tape.leaf(g.out_w)), tape.leaf(g.out_b));
    if (inv_temp != 1.0) logits = tape.scale(logits, inv_temp);
    Tape::Var p = hard ? tape.hard_softmax_st(logits) : tape.softmax(logits);
    Tape::Var gated = tape.mul_col(p, alive);
    out_steps.push_back(gated);
    alive = tape.mul(alive, tape.sub(ones, tape.col_slice(gated, kSymEos)));
    Tape::Var moved = tape.matmul(gated, delta);
    pos = tape.add(pos, moved);
    rel = tape.sub(rel, moved);
    prev = tape.matmul(gated, tape.leaf(g.embed_sym));
  }
  return out_steps;
}

/// Discriminator over per-step symbol distributions (soft or one-hot),
/// tracking the same dead-reckoned position the generator sees.
inline Tape::Var discriminator_scores(Tape& tape, DiscriminatorParams& d,
                                      const std::vector<Tape::Var>& steps, Tape::Var cond,
                                      Tape::Var pos0, Tape::Var rel0, Tape::Var delta,
                                      bool training) {
  const std::size_t batch = tape.val(cond).rows;
  Tape::Var h = tape.constant(Tensor(batch, d.cfg.hidden));
  Tape::Var pos = pos0;
  Tape::Var rel = rel0;
  for (Tape::Var s : steps) {
    Tape::Var x = tape.concat_cols({s, pos, rel, cond});
    Tape::Var pre = tape.add(tape.matmul(x, tape.leaf(d.w_in)), tape.matmul(h, tape.leaf(d.w_h)));
    h = tape.tanh_op(tape.add_row(pre, tape.leaf(d.b)));
    Tape::Var moved = tape.matmul(s, delta);
    pos = tape.add(pos, moved);
    rel = tape.sub(rel, moved);
  }
  Tape::Var hb = tape.batch_norm(h, d.bn, training);
  return tape.sigmoid(tape.add_row(tape.matmul(hb, tape.leaf(d.out_w)), tape.leaf(d.out_b)));
}

/// One-hot step matrices for a batch of real action sequences: actions,
/// then EOS, then all-zero rows.
inline std::vector<Tensor> encode_real_steps(const std::vector<std::vector<Action>>& seqs,
                                             std::size_t steps) {
  std::vector<Tensor> out(steps, Tensor(seqs.size(), kSymCount));
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& seq = seqs[i];
    for (std::size_t t = 0; t < steps; ++t) {
      if (t < seq.size() && t + 1 < steps)
        out[t].at(i, sym_of_action(seq[t])) = 1.0;
      else if (t == std::min(seq.size(), steps - 1))
        out[t].at(i, kSymEos) = 1.0;
    }
  }
  return out;
}

}  // namespace detail

/// Deterministic rollout for one noise vector: argmax at each step, stops
/// at EOS or max_len.
inline std::vector<Action> generate(const std::vector<double>& z, const std::vector<double>& cond,
                                    const GridMap& map, Cell start, Cell goal,
                                    GeneratorParams& g, std::size_t max_len) {
  if (z.size() != g.cfg.noise_dim) throw ShapeMismatch("generate: bad noise width");
  if (cond.size() != g.cond_dim) throw ShapeMismatch("generate: bad condition width");
  SeqContext ctx = SeqContext::of(map, start, goal);
  Tape tape;
  Tensor zt(1, z.size());
  zt.values = z;
  Tensor ct(1, cond.size());
  ct.values = cond;
  Tape::Var zv = tape.constant(std::move(zt));
  Tape::Var cv = tape.constant(std::move(ct));
  Tape::Var h = tape.constant(Tensor(1, g.cfg.hidden));
  Tape::Var prev = tape.embed_rows(tape.leaf(g.embed_bos), {0});
  double px = ctx.x0, py = ctx.y0;
  std::vector<Action> actions;
  for (std::size_t t = 0; t < max_len; ++t) {
    Tensor feats(1, 4);
    feats.values = {px, py, ctx.gx - px, ctx.gy - py};
    Tape::Var x = tape.concat_cols({prev, tape.constant(std::move(feats)), zv, cv});
    Tape::Var pre = tape.add(tape.matmul(x, tape.leaf(g.w_in)), tape.matmul(h, tape.leaf(g.w_h)));
    h = tape.tanh_op(tape.add_row(pre, tape.leaf(g.b)));
    Tape::Var hb = tape.batch_norm(h, g.bn, false);
    Tape::Var logits = tape.add_row(tape.matmul(hb, tape.leaf(g.out_w)), tape.leaf(g.out_b));
    const Tensor& row = tape.val(logits);
    int best = 0;
    for (std::size_t j = 1; j < kSymCount; ++j)
      if (row.values[j] > row.values[best]) best = static_cast<int>(j);
    if (best == kSymEos) break;
    Action act = action_of_sym(best);
    actions.push_back(act);
    Cell d = step({0, 0}, act);
    px += d.x * ctx.step_x;
    py += d.y * ctx.step_y;
    prev = tape.embed_rows(tape.leaf(g.embed_sym), {best});
  }
  return actions;
}

/// Probability that a sequence is a real (expert) path for this condition.
inline double discriminate(const std::vector<Action>& actions, const std::vector<double>& cond,
                           const GridMap& map, Cell start, Cell goal, DiscriminatorParams& d) {
  if (actions.size() > d.cfg.max_len)
    throw std::invalid_argument("discriminate: sequence longer than max_len");
  if (cond.size() != d.cond_dim) throw ShapeMismatch("discriminate: bad condition width");
  SeqContext ctx = SeqContext::of(map, start, goal);
  Tape tape;
  Tensor ct(1, cond.size());
  ct.values = cond;
  Tape::Var cv = tape.constant(std::move(ct));
  auto steps = detail::encode_real_steps({actions}, d.cfg.max_len);
  std::vector<Tape::Var> vars;
  vars.reserve(steps.size());
  for (auto& s : steps) vars.push_back(tape.constant(std::move(s)));
  Tensor pos0(1, 2), rel0(1, 2);
  pos0.values = {ctx.x0, ctx.y0};
  rel0.values = {ctx.gx - ctx.x0, ctx.gy - ctx.y0};
  Tape::Var pv = tape.constant(std::move(pos0));
  Tape::Var rv = tape.constant(std::move(rel0));
  Tape::Var dv = tape.constant(detail::displacement_rows(ctx));
  return tape.val(detail::discriminator_scores(tape, d, vars, cv, pv, rv, dv, false)).item();
}

struct GanExample {
  std::vector<Action> expert;
  std::vector<double> condition;
  SeqContext ctx;
};

/// One adversarial round: a discriminator BCE step on (real→1, fake→0),
/// then a generator step toward BCE(D(G(z)), 1) against the updated
/// discriminator (non-saturating form). Returns (d_loss, g_loss), both
/// measured before their respective updates.
inline std::pair<double, double> gan_train_step(const std::vector<GanExample>& batch,
                                                GanModel& gan, AdamOptimizer& opt_g,
                                                AdamOptimizer& opt_d, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("gan_train_step: empty batch");
  const std::size_t B = batch.size();
  const std::size_t T = gan.cfg.max_len;

  Tensor z(B, gan.cfg.noise_dim);
  for (double& v : z.values) v = rng.normal();
  Tensor cond(B, gan.cond_dim);
  std::vector<std::vector<Action>> seqs(B);
  for (std::size_t i = 0; i < B; ++i) {
    if (batch[i].condition.size() != gan.cond_dim)
      throw ShapeMismatch("gan_train_step: bad condition width");
    std::copy(batch[i].condition.begin(), batch[i].condition.end(),
              cond.values.begin() + i * gan.cond_dim);
    seqs[i] = batch[i].expert;
    if (seqs[i].size() + 1 > T) seqs[i].resize(T - 1);
  }
  auto real_steps = detail::encode_real_steps(seqs, T);
  Tensor ones(B, 1, 1.0);
  Tensor pos0(B, 2), rel0(B, 2);
  for (std::size_t i = 0; i < B; ++i) {
    if (!(batch[i].ctx == batch[0].ctx))
      throw std::invalid_argument("gan_train_step: batch mixes map dimensions");
    pos0.at(i, 0) = batch[i].ctx.x0;
    pos0.at(i, 1) = batch[i].ctx.y0;
    rel0.at(i, 0) = batch[i].ctx.gx - batch[i].ctx.x0;
    rel0.at(i, 1) = batch[i].ctx.gy - batch[i].ctx.y0;
  }
  Tensor delta = detail::displacement_rows(batch[0].ctx);

  // discriminator step; generator outputs detached. Real and fake rows go
  // through one combined forward so batch normalization keeps their
  // contrast instead of standardizing it away per sub-batch.
  double d_loss;
  {
    Tape tape;
    Tape::Var zv = tape.constant(z);
    Tape::Var cv = tape.constant(cond);
    Tape::Var pv = tape.constant(pos0);
    Tape::Var rv = tape.constant(rel0);
    Tape::Var dv = tape.constant(delta);
    auto fake = detail::generator_rollout(tape, gan.g, zv, cv, pv, rv, dv, T, true);
    std::vector<Tape::Var> combined;
    combined.reserve(T);
    for (std::size_t t = 0; t < T; ++t)
      combined.push_back(
          tape.concat_rows({tape.constant(real_steps[t]), tape.detach(fake[t])}));
    Tape::Var cond2 = tape.concat_rows({cv, cv});
    Tape::Var pos2 = tape.concat_rows({pv, pv});
    Tape::Var rel2 = tape.concat_rows({rv, rv});
    Tape::Var scores =
        detail::discriminator_scores(tape, gan.d, combined, cond2, pos2, rel2, dv, true);
    Tensor labels(2 * B, 1);
    for (std::size_t i = 0; i < B; ++i) labels.values[i] = 1.0;
    Tape::Var loss = tape.bce(scores, std::move(labels));
    d_loss = tape.val(loss).item();
    tape.backward(loss);
    opt_d.step();
    gan.g.zero_grads();  // rollout leaves picked up no gradient, but stay clean
  }

  // generator step against the updated discriminator; the discriminator
  // normalizes with its running statistics here so the generator sees the
  // same view the combined batches trained
  double g_loss;
  {
    Tape tape;
    Tape::Var zv = tape.constant(std::move(z));
    Tape::Var cv = tape.constant(std::move(cond));
    Tape::Var pv = tape.constant(std::move(pos0));
    Tape::Var rv = tape.constant(std::move(rel0));
    Tape::Var dv = tape.constant(std::move(delta));
    auto fake = detail::generator_rollout(tape, gan.g, zv, cv, pv, rv, dv, T, true);
    Tape::Var d_fake = detail::discriminator_scores(tape, gan.d, fake, cv, pv, rv, dv, false);
    Tape::Var loss = tape.bce(d_fake, ones);
    g_loss = tape.val(loss).item();
    tape.backward(loss);
    opt_g.step();
    gan.d.zero_grads();  // discard discriminator gradients from this pass
  }
  return {d_loss, g_loss};
}

/// Execute a raw action string from start, truncate at the first invalid
/// move, and complete the remainder with a unit-cost A* path to the goal.
struct RepairResult {
  std::optional<Path> path;      // empty => Reject
  std::size_t truncated_at = 0;  // index of the first invalid raw action
};

inline RepairResult repair(const GridMap& map, const std::vector<Action>& raw, Cell start,
                           Cell goal) {
  RepairResult res;
  ActionTrace trace = follow_actions(map, start, raw);
  res.truncated_at = trace.first_invalid;
  Cell last = trace.cells.back();
  if (last == goal) {
    res.path = Path{std::move(trace.cells)};
    return res;
  }
  try {
    SearchResult tail = astar(CostField::uniform(map), map, last, goal);
    auto cells = std::move(trace.cells);
    cells.insert(cells.end(), tail.path.cells.begin() + 1, tail.path.cells.end());
    res.path = Path{std::move(cells)};
  } catch (const NoPath&) {
    // unreachable goal: Reject
  }
  return res;
}

struct Candidate {
  std::vector<Action> raw;
  double score = 0.5;  // discriminator probability
  bool valid = false;  // raw already executes start -> goal
  std::optional<Path> repaired;
  std::string provenance;
};

struct CandidateSet {
  std::vector<Candidate> items;
};

/// Index of the repaired candidate with minimal move count; ties go to the
/// higher discriminator score, then the lower index.
inline std::size_t select_best_index(const CandidateSet& set) {
  std::size_t best = set.items.size();
  for (std::size_t i = 0; i < set.items.size(); ++i) {
    const auto& c = set.items[i];
    if (!c.repaired) continue;
    if (best == set.items.size()) {
      best = i;
      continue;
    }
    const auto& b = set.items[best];
    std::size_t lc = path_move_count(*c.repaired), lb = path_move_count(*b.repaired);
    if (lc < lb || (lc == lb && c.score > b.score)) best = i;
  }
  if (best == set.items.size()) throw AllRejected("no candidate could be repaired");
  return best;
}

inline Path select_best(const CandidateSet& set) {
  return *set.items[select_best_index(set)].repaired;
}

}  // namespace hpl
