#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hpl/gridworld.hpp"
#include "hpl/optim.hpp"
#include "hpl/tensor.hpp"

namespace hpl {

struct VocabOverflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Environment token ids.
enum : int {
  kEnvFree = 0,
  kEnvBlocked = 1,
  kEnvStart = 2,
  kEnvGoal = 3,
  kEnvBegin = 4,
  kEnvEnd = 5,
};
constexpr std::size_t kEnvVocab = 6;

// Action-side token ids for the decoder.
enum : int {
  kTokPad = 0,
  kTokBos = 1,
  kTokUp = 2,
  kTokDown = 3,
  kTokLeft = 4,
  kTokRight = 5,
  kTokWait = 6,
  kTokEos = 7,
};
constexpr std::size_t kActionVocab = 8;

inline int action_token(Action a) {
  switch (a) {
    case Action::Up: return kTokUp;
    case Action::Down: return kTokDown;
    case Action::Left: return kTokLeft;
    case Action::Right: return kTokRight;
    case Action::Wait: return kTokWait;
  }
  return kTokPad;
}

inline std::optional<Action> token_action(int tok) {
  switch (tok) {
    case kTokUp: return Action::Up;
    case kTokDown: return Action::Down;
    case kTokLeft: return Action::Left;
    case kTokRight: return Action::Right;
    case kTokWait: return Action::Wait;
    default: return std::nullopt;
  }
}

struct PlannerConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 128;
  std::size_t max_len = 128;  // positional table size; caps both sequences
  std::size_t env_vocab = kEnvVocab;
  std::size_t action_vocab = kActionVocab;

  std::size_t d_k() const { return d_model / heads; }

  void validate() const {
    if (d_model == 0 || heads == 0 || n_layers == 0 || d_ff == 0 || max_len == 0)
      throw std::invalid_argument("planner config dimensions must be positive");
    if (d_model % heads != 0)
      throw std::invalid_argument("d_model must be divisible by head count");
  }
};

/// Fixed sinusoidal table: (p, 2i) = sin(p / 10000^(2i/d)),
/// (p, 2i+1) = cos(p / 10000^(2i/d)).
inline Tensor positional_encoding(std::size_t len, std::size_t d_model) {
  Tensor pe(len, d_model);
  for (std::size_t p = 0; p < len; ++p)
    for (std::size_t i = 0; i < d_model; i += 2) {
      double freq = std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
      double angle = static_cast<double>(p) / freq;
      pe.at(p, i) = std::sin(angle);
      if (i + 1 < d_model) pe.at(p, i + 1) = std::cos(angle);
    }
  return pe;
}

/// Flattened environment sequence for the encoder.
struct TokenSeq {
  std::vector<int> env;
};

/// Row-major map flattening framed by begin/end markers, with the start and
/// goal cells substituted. When start == goal the goal marker wins.
inline TokenSeq tokenize_env(const GridMap& map, Cell start, Cell goal) {
  if (!map.is_passable(start) || !map.is_passable(goal))
    throw std::invalid_argument("tokenize_env: start/goal must be passable");
  TokenSeq seq;
  seq.env.reserve(map.cell_count() + 2);
  seq.env.push_back(kEnvBegin);
  for (std::size_t idx = 0; idx < map.cell_count(); ++idx) {
    Cell c = map.cell_at(idx);
    int tok = map.passable[idx] ? kEnvFree : kEnvBlocked;
    if (c == start) tok = kEnvStart;
    if (c == goal) tok = kEnvGoal;
    seq.env.push_back(tok);
  }
  seq.env.push_back(kEnvEnd);
  return seq;
}

struct MultiHeadParams {
  struct Head {
    Tensor wq, wk, wv;  // d_model × d_k
  };
  std::vector<Head> heads;
  Tensor wo;  // (h·d_k) × d_model

  MultiHeadParams() = default;
  MultiHeadParams(std::size_t d_model, std::size_t h, Rng& rng) {
    std::size_t dk = d_model / h;
    heads.resize(h);
    for (auto& head : heads) {
      head.wq = Tensor(d_model, dk);
      head.wk = Tensor(d_model, dk);
      head.wv = Tensor(d_model, dk);
      init_uniform(head.wq, d_model, dk, rng);
      init_uniform(head.wk, d_model, dk, rng);
      init_uniform(head.wv, d_model, dk, rng);
    }
    wo = Tensor(h * dk, d_model);
    init_uniform(wo, h * dk, d_model, rng);
  }

  void collect(std::vector<Tensor*>& out) {
    for (auto& h : heads) {
      out.push_back(&h.wq);
      out.push_back(&h.wk);
      out.push_back(&h.wv);
    }
    out.push_back(&wo);
  }
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;

  FeedForwardParams() = default;
  FeedForwardParams(std::size_t d_model, std::size_t d_ff, Rng& rng) {
    w1 = Tensor(d_model, d_ff);
    b1 = Tensor(1, d_ff);
    w2 = Tensor(d_ff, d_model);
    b2 = Tensor(1, d_model);
    init_uniform(w1, d_model, d_ff, rng);
    init_uniform(w2, d_ff, d_model, rng);
  }

  void collect(std::vector<Tensor*>& out) {
    out.push_back(&w1);
    out.push_back(&b1);
    out.push_back(&w2);
    out.push_back(&b2);
  }
};

struct EncoderLayerParams {
  MultiHeadParams attn;
  FeedForwardParams ff;
};

struct DecoderLayerParams {
  MultiHeadParams self_attn;
  MultiHeadParams cross_attn;
  FeedForwardParams ff;
};

struct TransformerParams {
  PlannerConfig cfg;
  Tensor env_embed;  // env_vocab × d_model
  Tensor act_embed;  // action_vocab × d_model
  Tensor pos;        // max_len × d_model, fixed (not learned)
  std::vector<EncoderLayerParams> enc;
  std::vector<DecoderLayerParams> dec;
  Tensor out_w, out_b;  // d_model × action_vocab, 1 × action_vocab

  TransformerParams() = default;

  TransformerParams(const PlannerConfig& config, Rng& rng) : cfg(config) {
    cfg.validate();
    env_embed = Tensor(cfg.env_vocab, cfg.d_model);
    act_embed = Tensor(cfg.action_vocab, cfg.d_model);
    init_uniform(env_embed, cfg.env_vocab, cfg.d_model, rng);
    init_uniform(act_embed, cfg.action_vocab, cfg.d_model, rng);
    pos = positional_encoding(cfg.max_len, cfg.d_model);
    enc.resize(cfg.n_layers);
    dec.resize(cfg.n_layers);
    for (auto& layer : enc) {
      layer.attn = MultiHeadParams(cfg.d_model, cfg.heads, rng);
      layer.ff = FeedForwardParams(cfg.d_model, cfg.d_ff, rng);
    }
    for (auto& layer : dec) {
      layer.self_attn = MultiHeadParams(cfg.d_model, cfg.heads, rng);
      layer.cross_attn = MultiHeadParams(cfg.d_model, cfg.heads, rng);
      layer.ff = FeedForwardParams(cfg.d_model, cfg.d_ff, rng);
    }
    out_w = Tensor(cfg.d_model, cfg.action_vocab);
    out_b = Tensor(1, cfg.action_vocab);
    init_uniform(out_w, cfg.d_model, cfg.action_vocab, rng);
    mark_grads();
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    out.push_back(&env_embed);
    out.push_back(&act_embed);
    for (auto& layer : enc) {
      layer.attn.collect(out);
      layer.ff.collect(out);
    }
    for (auto& layer : dec) {
      layer.self_attn.collect(out);
      layer.cross_attn.collect(out);
      layer.ff.collect(out);
    }
    out.push_back(&out_w);
    out.push_back(&out_b);
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

/// 0 at and below the diagonal, -1e9 above: position t may attend to
/// positions <= t only.
inline Tensor causal_mask(std::size_t t) {
  Tensor m(t, t);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = i + 1; j < t; ++j) m.at(i, j) = -1e9;
  return m;
}

/// softmax(Q Kᵀ / √d_k + mask) V on the tape.
inline Tape::Var scaled_dot_attention_t(Tape& tape, Tape::Var q, Tape::Var k, Tape::Var v,
                                        const Tensor* mask = nullptr) {
  const Tensor& Q = tape.val(q);
  const Tensor& K = tape.val(k);
  const Tensor& V = tape.val(v);
  if (Q.cols != K.cols) throw ShapeMismatch("attention: Q/K widths differ");
  if (K.rows != V.rows) throw ShapeMismatch("attention: K/V lengths differ");
  if (mask && (mask->rows != Q.rows || mask->cols != K.rows))
    throw ShapeMismatch("attention: mask shape");
  Tape::Var scores = tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(Q.cols)));
  if (mask) scores = tape.add_mask(scores, *mask);
  return tape.matmul(tape.softmax(scores), v);
}

inline Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                   const Tensor* mask = nullptr) {
  Tape tape;
  Tensor qq = q, kk = k, vv = v;
  return tape.val(scaled_dot_attention_t(tape, tape.constant(qq), tape.constant(kk),
                                         tape.constant(vv), mask));
}

/// Concat(head_1..head_h) W^O with head_i = Attention(x_q W_i^Q, x_kv W_i^K,
/// x_kv W_i^V).
inline Tape::Var multi_head_t(Tape& tape, Tape::Var xq, Tape::Var xkv, MultiHeadParams& p,
                              const Tensor* mask = nullptr) {
  std::vector<Tape::Var> heads;
  heads.reserve(p.heads.size());
  for (auto& h : p.heads) {
    Tape::Var q = tape.matmul(xq, tape.leaf(h.wq));
    Tape::Var k = tape.matmul(xkv, tape.leaf(h.wk));
    Tape::Var v = tape.matmul(xkv, tape.leaf(h.wv));
    heads.push_back(scaled_dot_attention_t(tape, q, k, v, mask));
  }
  return tape.matmul(tape.concat_cols(heads), tape.leaf(p.wo));
}

inline Tensor multi_head(const Tensor& xq, const Tensor& xkv, MultiHeadParams& p,
                         const Tensor* mask = nullptr) {
  Tape tape;
  Tensor q = xq, kv = xkv;
  return tape.val(multi_head_t(tape, tape.constant(q), tape.constant(kv), p, mask));
}

namespace detail {

inline Tape::Var feed_forward_t(Tape& tape, Tape::Var x, FeedForwardParams& p) {
  Tape::Var h = tape.relu(tape.add_row(tape.matmul(x, tape.leaf(p.w1)), tape.leaf(p.b1)));
  return tape.add_row(tape.matmul(h, tape.leaf(p.w2)), tape.leaf(p.b2));
}

inline Tape::Var embed_with_positions(Tape& tape, Tensor& table, const Tensor& pos,
                                      const std::vector<int>& ids, std::size_t vocab) {
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw VocabOverflow("token id " + std::to_string(id) + " outside vocabulary");
  if (ids.size() > pos.rows)
    throw std::invalid_argument("sequence longer than the positional table");
  Tensor pe(ids.size(), pos.cols);
  std::copy(pos.values.begin(), pos.values.begin() + ids.size() * pos.cols, pe.values.begin());
  // embeddings are scaled by sqrt(d_model) so the token signal is not
  // drowned by the unit-amplitude positional table
  Tape::Var emb = tape.scale(tape.embed_rows(tape.leaf(table), ids),
                             std::sqrt(static_cast<double>(pos.cols)));
  return tape.add(emb, tape.constant(std::move(pe)));
}

}  // namespace detail

/// Encoder stack: per layer, self-attention then feed-forward, each with a
/// residual connection followed by row layer normalization.
inline Tape::Var encode_t(Tape& tape, const TokenSeq& tokens, TransformerParams& params) {
  Tape::Var x = detail::embed_with_positions(tape, params.env_embed, params.pos, tokens.env,
                                             params.cfg.env_vocab);
  for (auto& layer : params.enc) {
    Tape::Var a = multi_head_t(tape, x, x, layer.attn);
    x = tape.layer_norm_rows(tape.add(x, a));
    Tape::Var f = detail::feed_forward_t(tape, x, layer.ff);
    x = tape.layer_norm_rows(tape.add(x, f));
  }
  return x;
}

inline Tensor encode(const TokenSeq& tokens, TransformerParams& params) {
  Tape tape;
  return tape.val(encode_t(tape, tokens, params));
}

/// Decoder stack over a teacher-forced (or partially decoded) token prefix:
/// causal self-attention, cross-attention to the encoder memory,
/// feed-forward; post-residual layer norm throughout. Returns per-position
/// action logits.
inline Tape::Var decoder_logits_t(Tape& tape, Tape::Var memory, const std::vector<int>& dec_tokens,
                                  TransformerParams& params) {
  Tape::Var x = detail::embed_with_positions(tape, params.act_embed, params.pos, dec_tokens,
                                             params.cfg.action_vocab);
  Tensor mask = causal_mask(dec_tokens.size());
  for (auto& layer : params.dec) {
    Tape::Var a = multi_head_t(tape, x, x, layer.self_attn, &mask);
    x = tape.layer_norm_rows(tape.add(x, a));
    Tape::Var c = multi_head_t(tape, x, memory, layer.cross_attn);
    x = tape.layer_norm_rows(tape.add(x, c));
    Tape::Var f = detail::feed_forward_t(tape, x, layer.ff);
    x = tape.layer_norm_rows(tape.add(x, f));
  }
  return tape.add_row(tape.matmul(x, tape.leaf(params.out_w)), tape.leaf(params.out_b));
}

inline Tensor decoder_logits(const Tensor& memory, const std::vector<int>& dec_tokens,
                             TransformerParams& params) {
  Tape tape;
  Tensor mem = memory;
  return tape.val(decoder_logits_t(tape, tape.constant(std::move(mem)), dec_tokens, params));
}

/// Deterministic argmax decoding from BOS. Stops at EOS (or any
/// non-movement token) or after max_len actions.
inline std::vector<Action> greedy_decode(const Tensor& memory, TransformerParams& params,
                                         std::size_t max_len) {
  std::vector<int> tokens{kTokBos};
  std::vector<Action> actions;
  max_len = std::min(max_len, params.cfg.max_len - 1);
  while (actions.size() < max_len) {
    Tensor logits = decoder_logits(memory, tokens, params);
    const double* row = logits.values.data() + (logits.rows - 1) * logits.cols;
    int best = 0;
    for (std::size_t j = 1; j < logits.cols; ++j)
      if (row[j] > row[best]) best = static_cast<int>(j);
    auto act = token_action(best);
    if (!act) break;  // EOS / PAD / BOS all terminate
    actions.push_back(*act);
    tokens.push_back(best);
  }
  return actions;
}

struct TrainExample {
  TokenSeq env;
  std::vector<Action> expert;
};

/// One teacher-forced batch step: mean cross-entropy over the batch, one
/// optimizer update. Returns the pre-step loss.
inline double train_step(const std::vector<TrainExample>& batch, TransformerParams& params,
                         AdamOptimizer& opt) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  double total = 0.0;
  Tape tape;
  for (const auto& ex : batch) {
    Tape::Var mem = encode_t(tape, ex.env, params);
    std::vector<int> dec_in{kTokBos};
    for (Action a : ex.expert) dec_in.push_back(action_token(a));
    Tensor onehot(dec_in.size(), params.cfg.action_vocab);
    for (std::size_t i = 0; i + 1 < dec_in.size(); ++i) onehot.at(i, dec_in[i + 1]) = 1.0;
    onehot.at(dec_in.size() - 1, kTokEos) = 1.0;
    Tape::Var logits = decoder_logits_t(tape, mem, dec_in, params);
    Tape::Var loss = tape.cross_entropy(tape.softmax(logits), std::move(onehot));
    total += tape.val(loss).item();
    tape.backward(tape.scale(loss, 1.0 / static_cast<double>(batch.size())));
  }
  opt.step();
  return total / static_cast<double>(batch.size());
}

}  // namespace hpl
