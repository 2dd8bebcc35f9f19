#pragma once

#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hpl/gan.hpp"
#include "hpl/gcn.hpp"
#include "hpl/tensor.hpp"
#include "hpl/transformer.hpp"

namespace hpl {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Versioned plain-text tensor container. Values are written as C hexfloats
/// so save/load round-trips are bit-exact. Grammar (one record per line):
///   hpl-checkpoint v1
///   kind <stage>
///   meta <key> <hexfloat>
///   cfg <key> <unsigned>
///   tensor <name> <rows> <cols>
///   <cols hexfloats per row line>
struct CheckpointDoc {
  std::string kind;
  std::map<std::string, double> meta;
  std::map<std::string, std::uint64_t> config;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw CheckpointError("checkpoint is missing tensor '" + name + "'");
  }
  std::uint64_t cfg_value(const std::string& key) const {
    auto it = config.find(key);
    if (it == config.end()) throw CheckpointError("checkpoint is missing cfg '" + key + "'");
    return it->second;
  }
};

namespace detail {

inline std::string hexfloat(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw CheckpointError("bad numeric literal '" + s + "'");
  return v;
}

}  // namespace detail

inline std::string write_checkpoint(const CheckpointDoc& doc) {
  std::string out = "hpl-checkpoint v1\nkind " + doc.kind + "\n";
  for (const auto& [k, v] : doc.meta) out += "meta " + k + " " + detail::hexfloat(v) + "\n";
  for (const auto& [k, v] : doc.config) out += "cfg " + k + " " + std::to_string(v) + "\n";
  for (const auto& [name, t] : doc.tensors) {
    out += "tensor " + name + " " + std::to_string(t.rows) + " " + std::to_string(t.cols) + "\n";
    for (std::size_t r = 0; r < t.rows; ++r) {
      for (std::size_t c = 0; c < t.cols; ++c) {
        if (c) out += " ";
        out += detail::hexfloat(t.at(r, c));
      }
      out += "\n";
    }
  }
  return out;
}

inline CheckpointDoc read_checkpoint(const std::string& text) {
  CheckpointDoc doc;
  std::istringstream ss(text);
  std::string line;
  if (!std::getline(ss, line) || line != "hpl-checkpoint v1")
    throw CheckpointError("not an hpl checkpoint (bad magic line)");
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "kind") {
      ls >> doc.kind;
    } else if (tag == "meta") {
      std::string key, val;
      ls >> key >> val;
      doc.meta[key] = detail::parse_double(val);
    } else if (tag == "cfg") {
      std::string key;
      std::uint64_t val;
      ls >> key >> val;
      doc.config[key] = val;
    } else if (tag == "tensor") {
      std::string name;
      std::size_t rows, cols;
      if (!(ls >> name >> rows >> cols)) throw CheckpointError("malformed tensor header");
      Tensor t(rows, cols);
      for (std::size_t r = 0; r < rows; ++r) {
        if (!std::getline(ss, line)) throw CheckpointError("tensor '" + name + "' truncated");
        std::istringstream row(line);
        std::string tok;
        for (std::size_t c = 0; c < cols; ++c) {
          if (!(row >> tok)) throw CheckpointError("tensor '" + name + "' row too short");
          t.at(r, c) = detail::parse_double(tok);
        }
      }
      doc.tensors.emplace_back(name, std::move(t));
    } else {
      throw CheckpointError("unknown checkpoint record '" + tag + "'");
    }
  }
  return doc;
}

// --- transformer ---

inline CheckpointDoc checkpoint_of(TransformerParams& p, double training_time_s = 0.0) {
  CheckpointDoc doc;
  doc.kind = "transformer";
  doc.meta["training_time_s"] = training_time_s;
  doc.config = {{"d_model", p.cfg.d_model},   {"heads", p.cfg.heads},
                {"n_layers", p.cfg.n_layers}, {"d_ff", p.cfg.d_ff},
                {"max_len", p.cfg.max_len},   {"env_vocab", p.cfg.env_vocab},
                {"action_vocab", p.cfg.action_vocab}};
  doc.tensors.emplace_back("env_embed", p.env_embed);
  doc.tensors.emplace_back("act_embed", p.act_embed);
  auto add_mh = [&doc](const std::string& prefix, MultiHeadParams& mh) {
    for (std::size_t h = 0; h < mh.heads.size(); ++h) {
      doc.tensors.emplace_back(prefix + ".h" + std::to_string(h) + ".wq", mh.heads[h].wq);
      doc.tensors.emplace_back(prefix + ".h" + std::to_string(h) + ".wk", mh.heads[h].wk);
      doc.tensors.emplace_back(prefix + ".h" + std::to_string(h) + ".wv", mh.heads[h].wv);
    }
    doc.tensors.emplace_back(prefix + ".wo", mh.wo);
  };
  auto add_ff = [&doc](const std::string& prefix, FeedForwardParams& ff) {
    doc.tensors.emplace_back(prefix + ".w1", ff.w1);
    doc.tensors.emplace_back(prefix + ".b1", ff.b1);
    doc.tensors.emplace_back(prefix + ".w2", ff.w2);
    doc.tensors.emplace_back(prefix + ".b2", ff.b2);
  };
  for (std::size_t l = 0; l < p.enc.size(); ++l) {
    add_mh("enc" + std::to_string(l) + ".attn", p.enc[l].attn);
    add_ff("enc" + std::to_string(l) + ".ff", p.enc[l].ff);
  }
  for (std::size_t l = 0; l < p.dec.size(); ++l) {
    add_mh("dec" + std::to_string(l) + ".self", p.dec[l].self_attn);
    add_mh("dec" + std::to_string(l) + ".cross", p.dec[l].cross_attn);
    add_ff("dec" + std::to_string(l) + ".ff", p.dec[l].ff);
  }
  doc.tensors.emplace_back("out_w", p.out_w);
  doc.tensors.emplace_back("out_b", p.out_b);
  return doc;
}

inline TransformerParams transformer_from_checkpoint(const CheckpointDoc& doc) {
  if (doc.kind != "transformer") throw CheckpointError("expected a transformer checkpoint");
  PlannerConfig cfg;
  cfg.d_model = doc.cfg_value("d_model");
  cfg.heads = doc.cfg_value("heads");
  cfg.n_layers = doc.cfg_value("n_layers");
  cfg.d_ff = doc.cfg_value("d_ff");
  cfg.max_len = doc.cfg_value("max_len");
  cfg.env_vocab = doc.cfg_value("env_vocab");
  cfg.action_vocab = doc.cfg_value("action_vocab");
  Rng rng(0);
  TransformerParams p(cfg, rng);
  p.env_embed = doc.tensor("env_embed");
  p.act_embed = doc.tensor("act_embed");
  auto load_mh = [&doc](const std::string& prefix, MultiHeadParams& mh) {
    for (std::size_t h = 0; h < mh.heads.size(); ++h) {
      mh.heads[h].wq = doc.tensor(prefix + ".h" + std::to_string(h) + ".wq");
      mh.heads[h].wk = doc.tensor(prefix + ".h" + std::to_string(h) + ".wk");
      mh.heads[h].wv = doc.tensor(prefix + ".h" + std::to_string(h) + ".wv");
    }
    mh.wo = doc.tensor(prefix + ".wo");
  };
  auto load_ff = [&doc](const std::string& prefix, FeedForwardParams& ff) {
    ff.w1 = doc.tensor(prefix + ".w1");
    ff.b1 = doc.tensor(prefix + ".b1");
    ff.w2 = doc.tensor(prefix + ".w2");
    ff.b2 = doc.tensor(prefix + ".b2");
  };
  for (std::size_t l = 0; l < p.enc.size(); ++l) {
    load_mh("enc" + std::to_string(l) + ".attn", p.enc[l].attn);
    load_ff("enc" + std::to_string(l) + ".ff", p.enc[l].ff);
  }
  for (std::size_t l = 0; l < p.dec.size(); ++l) {
    load_mh("dec" + std::to_string(l) + ".self", p.dec[l].self_attn);
    load_mh("dec" + std::to_string(l) + ".cross", p.dec[l].cross_attn);
    load_ff("dec" + std::to_string(l) + ".ff", p.dec[l].ff);
  }
  p.out_w = doc.tensor("out_w");
  p.out_b = doc.tensor("out_b");
  p.mark_grads();
  return p;
}

// --- graph encoder ---

inline CheckpointDoc checkpoint_of(GcnParams& p, double training_time_s = 0.0) {
  CheckpointDoc doc;
  doc.kind = "gcn";
  doc.meta["training_time_s"] = training_time_s;
  doc.config = {{"depth", p.layers.size()}};
  for (std::size_t k = 0; k < p.layers.size(); ++k)
    doc.tensors.emplace_back("layer" + std::to_string(k), p.layers[k]);
  doc.tensors.emplace_back("readout_w", p.readout_w);
  doc.tensors.emplace_back("head_w", p.head_w);
  doc.tensors.emplace_back("head_b", p.head_b);
  return doc;
}

inline GcnParams gcn_from_checkpoint(const CheckpointDoc& doc) {
  if (doc.kind != "gcn") throw CheckpointError("expected a gcn checkpoint");
  Rng rng(0);
  GcnParams p(rng, doc.cfg_value("depth"));
  for (std::size_t k = 0; k < p.layers.size(); ++k)
    p.layers[k] = doc.tensor("layer" + std::to_string(k));
  p.readout_w = doc.tensor("readout_w");
  p.head_w = doc.tensor("head_w");
  p.head_b = doc.tensor("head_b");
  p.mark_grads();
  return p;
}

// --- gan ---

namespace detail {

inline Tensor buffer_tensor(const std::vector<double>& v) {
  Tensor t(1, v.size());
  t.values = v;
  return t;
}

}  // namespace detail

inline CheckpointDoc checkpoint_of(GanModel& m, double training_time_s = 0.0) {
  CheckpointDoc doc;
  doc.kind = "gan";
  doc.meta["training_time_s"] = training_time_s;
  doc.meta["lr"] = m.cfg.lr;
  doc.meta["lr_decay"] = m.cfg.lr_decay;
  doc.config = {{"noise_dim", m.cfg.noise_dim},
                {"hidden", m.cfg.hidden},
                {"act_embed", m.cfg.act_embed},
                {"batch", m.cfg.batch},
                {"max_len", m.cfg.max_len},
                {"decay_every", m.cfg.decay_every},
                {"min_iterations", m.cfg.min_iterations},
                {"cond_dim", m.cond_dim}};
  doc.tensors.emplace_back("g.embed_bos", m.g.embed_bos);
  doc.tensors.emplace_back("g.embed_sym", m.g.embed_sym);
  doc.tensors.emplace_back("g.w_in", m.g.w_in);
  doc.tensors.emplace_back("g.w_h", m.g.w_h);
  doc.tensors.emplace_back("g.b", m.g.b);
  doc.tensors.emplace_back("g.bn_mean", detail::buffer_tensor(m.g.bn.run_mean));
  doc.tensors.emplace_back("g.bn_var", detail::buffer_tensor(m.g.bn.run_var));
  doc.tensors.emplace_back("g.out_w", m.g.out_w);
  doc.tensors.emplace_back("g.out_b", m.g.out_b);
  doc.tensors.emplace_back("d.w_in", m.d.w_in);
  doc.tensors.emplace_back("d.w_h", m.d.w_h);
  doc.tensors.emplace_back("d.b", m.d.b);
  doc.tensors.emplace_back("d.bn_mean", detail::buffer_tensor(m.d.bn.run_mean));
  doc.tensors.emplace_back("d.bn_var", detail::buffer_tensor(m.d.bn.run_var));
  doc.tensors.emplace_back("d.out_w", m.d.out_w);
  doc.tensors.emplace_back("d.out_b", m.d.out_b);
  return doc;
}

inline GanModel gan_from_checkpoint(const CheckpointDoc& doc) {
  if (doc.kind != "gan") throw CheckpointError("expected a gan checkpoint");
  GanConfig cfg;
  cfg.noise_dim = doc.cfg_value("noise_dim");
  cfg.hidden = doc.cfg_value("hidden");
  cfg.act_embed = doc.cfg_value("act_embed");
  cfg.batch = doc.cfg_value("batch");
  cfg.max_len = doc.cfg_value("max_len");
  cfg.decay_every = doc.cfg_value("decay_every");
  cfg.min_iterations = doc.cfg_value("min_iterations");
  if (auto it = doc.meta.find("lr"); it != doc.meta.end()) cfg.lr = it->second;
  if (auto it = doc.meta.find("lr_decay"); it != doc.meta.end()) cfg.lr_decay = it->second;
  Rng rng(0);
  GanModel m(cfg, doc.cfg_value("cond_dim"), rng);
  m.g.embed_bos = doc.tensor("g.embed_bos");
  m.g.embed_sym = doc.tensor("g.embed_sym");
  m.g.w_in = doc.tensor("g.w_in");
  m.g.w_h = doc.tensor("g.w_h");
  m.g.b = doc.tensor("g.b");
  m.g.bn.run_mean = doc.tensor("g.bn_mean").values;
  m.g.bn.run_var = doc.tensor("g.bn_var").values;
  m.g.out_w = doc.tensor("g.out_w");
  m.g.out_b = doc.tensor("g.out_b");
  m.d.w_in = doc.tensor("d.w_in");
  m.d.w_h = doc.tensor("d.w_h");
  m.d.b = doc.tensor("d.b");
  m.d.bn.run_mean = doc.tensor("d.bn_mean").values;
  m.d.bn.run_var = doc.tensor("d.bn_var").values;
  m.d.out_w = doc.tensor("d.out_w");
  m.d.out_b = doc.tensor("d.out_b");
  m.g.mark_grads();
  m.d.mark_grads();
  return m;
}

}  // namespace hpl
