#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hpl/rng.hpp"

namespace hpl {

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotScalar : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense rank-2 tensor of 64-bit reals, row-major. Vectors are 1×n,
/// scalars 1×1. `grad` is filled by Tape::backward for tensors that
/// require gradients.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}

  static Tensor row(std::initializer_list<double> v) {
    Tensor t(1, v.size());
    std::size_t i = 0;
    for (double x : v) t.values[i++] = x;
    return t;
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> v) {
    Tensor t(v.size(), v.begin()->size());
    std::size_t i = 0;
    for (const auto& r : v) {
      if (r.size() != t.cols) throw ShapeMismatch("ragged matrix literal");
      for (double x : r) t.values[i++] = x;
    }
    return t;
  }

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.values[0] = v;
    return t;
  }

  std::size_t size() const { return values.size(); }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double item() const {
    if (size() != 1) throw NotScalar("tensor is not 1x1");
    return values[0];
  }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
  void zero_grad() { grad.assign(values.size(), 0.0); }
};

/// Uniform init over [-a, a] with a = sqrt(6 / (fan_in + fan_out)).
inline void init_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.values) v = rng.uniform(-a, a);
}

enum class LossKind { CrossEntropy, MSE, BCE };

namespace detail {

// c += a(n×k) · b(k×m)
inline void mm_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                   std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      double aip = arow[p];
      if (aip == 0.0) continue;
      const double* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
}

// c += a(n×k) · b(m×k)^T
inline void mm_nt_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                      std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// c(k×m) += a(n×k)^T · b(n×m)
inline void mm_tn_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                      std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      double aip = arow[p];
      if (aip == 0.0) continue;
      double* crow = c + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
}

inline double clamp_prob(double p) { return p < 1e-300 ? 1e-300 : p; }

}  // namespace detail

/// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& x) {
  Tensor out(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* in = x.values.data() + r * x.cols;
    double* o = out.values.data() + r * x.cols;
    double mx = in[0];
    for (std::size_t j = 1; j < x.cols; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < x.cols; ++j) o[j] /= sum;
  }
  return out;
}

/// Mean-per-sample losses on plain tensors. CrossEntropy expects probability
/// rows with one-hot targets; BCE expects every prediction strictly inside
/// (0, 1).
inline Tensor loss_value(LossKind kind, const Tensor& prediction, const Tensor& target) {
  if (!prediction.same_shape(target)) throw ShapeMismatch("loss: prediction/target shapes differ");
  double total = 0.0;
  switch (kind) {
    case LossKind::CrossEntropy: {
      for (std::size_t r = 0; r < prediction.rows; ++r)
        for (std::size_t c = 0; c < prediction.cols; ++c) {
          double t = target.at(r, c);
          if (t != 0.0) total -= t * std::log(detail::clamp_prob(prediction.at(r, c)));
        }
      total /= static_cast<double>(prediction.rows);
      break;
    }
    case LossKind::MSE: {
      for (std::size_t i = 0; i < prediction.size(); ++i) {
        double d = prediction.values[i] - target.values[i];
        total += d * d;
      }
      total /= static_cast<double>(prediction.size());
      break;
    }
    case LossKind::BCE: {
      for (std::size_t i = 0; i < prediction.size(); ++i) {
        double p = prediction.values[i];
        if (!(p > 0.0 && p < 1.0)) throw DomainError("BCE prediction outside (0,1)");
        double t = target.values[i];
        total -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
      }
      total /= static_cast<double>(prediction.size());
      break;
    }
  }
  return Tensor::scalar(total);
}

/// Batch-normalization buffers for one feature width. Running statistics
/// are updated in training mode and used verbatim in eval mode.
struct BatchNorm {
  std::vector<double> run_mean;
  std::vector<double> run_var;
  double eps = 1e-5;
  double momentum = 0.9;

  explicit BatchNorm(std::size_t width = 0)
      : run_mean(width, 0.0), run_var(width, 1.0) {}
  std::size_t width() const { return run_mean.size(); }
};

/// Reverse-mode tape. Build a computation with the op methods, then call
/// backward on a scalar node; gradients accumulate into the `grad` of every
/// leaf tensor with requires_grad. The tape is single-use: backward clears it.
class Tape {
 public:
  using Var = int;

  Var leaf(Tensor& t) {
    auto it = leaf_cache_.find(&t);
    if (it != leaf_cache_.end()) return it->second;
    Node n;
    n.op = Op::Leaf;
    n.out = t;  // copy of current values
    n.external = &t;
    Var v = push(std::move(n));
    leaf_cache_.emplace(&t, v);
    return v;
  }

  Var constant(Tensor t) {
    Node n;
    n.op = Op::Constant;
    n.out = std::move(t);
    return push(std::move(n));
  }

  const Tensor& val(Var v) const { return nodes_[v].out; }

  Var matmul(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.cols != B.rows) throw ShapeMismatch("matmul: inner dimensions disagree");
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.out = Tensor(A.rows, B.cols);
    detail::mm_acc(A.values.data(), B.values.data(), n.out.values.data(), A.rows, A.cols, B.cols);
    return push(std::move(n));
  }

  /// a(n×k) times b(m×k) transposed -> n×m
  Var matmul_nt(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.cols != B.cols) throw ShapeMismatch("matmul_nt: inner dimensions disagree");
    Node n;
    n.op = Op::MatMulNT;
    n.a = a;
    n.b = b;
    n.out = Tensor(A.rows, B.rows);
    detail::mm_nt_acc(A.values.data(), B.values.data(), n.out.values.data(), A.rows, A.cols,
                      B.rows);
    return push(std::move(n));
  }

  Var add(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw ShapeMismatch("add: shapes differ");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.out = A;
    for (std::size_t i = 0; i < n.out.size(); ++i) n.out.values[i] += B.values[i];
    return push(std::move(n));
  }

  /// (n×d) plus a 1×d bias row added to every row.
  Var add_row(Var a, Var bias) {
    const Tensor& A = val(a);
    const Tensor& B = val(bias);
    if (B.rows != 1 || B.cols != A.cols) throw ShapeMismatch("add_row: bias must be 1×cols");
    Node n;
    n.op = Op::AddRow;
    n.a = a;
    n.b = bias;
    n.out = A;
    for (std::size_t r = 0; r < A.rows; ++r)
      for (std::size_t c = 0; c < A.cols; ++c) n.out.at(r, c) += B.values[c];
    return push(std::move(n));
  }

  Var sub(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw ShapeMismatch("sub: shapes differ");
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.out = A;
    for (std::size_t i = 0; i < n.out.size(); ++i) n.out.values[i] -= B.values[i];
    return push(std::move(n));
  }

  Var mul(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw ShapeMismatch("mul: shapes differ");
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.out = A;
    for (std::size_t i = 0; i < n.out.size(); ++i) n.out.values[i] *= B.values[i];
    return push(std::move(n));
  }

  Var scale(Var a, double c) {
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.c0 = c;
    n.out = val(a);
    for (double& v : n.out.values) v *= c;
    return push(std::move(n));
  }

  /// Elementwise addition of a constant tensor (attention masks).
  Var add_mask(Var a, const Tensor& mask) {
    const Tensor& A = val(a);
    if (!A.same_shape(mask)) throw ShapeMismatch("add_mask: shapes differ");
    Node n;
    n.op = Op::AddMask;
    n.a = a;
    n.out = A;
    for (std::size_t i = 0; i < n.out.size(); ++i) n.out.values[i] += mask.values[i];
    return push(std::move(n));
  }

  /// Copy a value out of the gradient flow.
  Var detach(Var a) {
    Node n;
    n.op = Op::Constant;
    n.out = val(a);
    return push(std::move(n));
  }

  Var relu(Var a) {
    Node n;
    n.op = Op::Relu;
    n.a = a;
    n.out = val(a);
    for (double& v : n.out.values) v = v > 0.0 ? v : 0.0;
    return push(std::move(n));
  }

  Var tanh_op(Var a) {
    Node n;
    n.op = Op::Tanh;
    n.a = a;
    n.out = val(a);
    for (double& v : n.out.values) v = std::tanh(v);
    return push(std::move(n));
  }

  /// Sigmoid, clamped into the open interval (0,1) so downstream BCE stays
  /// finite even when the input saturates.
  Var sigmoid(Var a) {
    Node n;
    n.op = Op::Sigmoid;
    n.a = a;
    n.out = val(a);
    for (double& v : n.out.values) {
      v = 1.0 / (1.0 + std::exp(-v));
      if (v < 1e-12) v = 1e-12;
      if (v > 1.0 - 1e-12) v = 1.0 - 1e-12;
    }
    return push(std::move(n));
  }

  Var softmax(Var a) {
    Node n;
    n.op = Op::Softmax;
    n.a = a;
    n.out = softmax_rows(val(a));
    return push(std::move(n));
  }

  /// Row-wise hard argmax one-hot with a straight-through gradient: the
  /// forward pass emits the one-hot of the softmax argmax, the backward
  /// pass uses the softmax Jacobian.
  Var hard_softmax_st(Var a) {
    Node n;
    n.op = Op::HardSoftmaxST;
    n.a = a;
    n.aux = softmax_rows(val(a));  // soft values drive the backward pass
    n.out = Tensor(n.aux.rows, n.aux.cols);
    for (std::size_t r = 0; r < n.aux.rows; ++r) {
      const double* s = n.aux.values.data() + r * n.aux.cols;
      std::size_t best = 0;
      for (std::size_t j = 1; j < n.aux.cols; ++j)
        if (s[j] > s[best]) best = j;
      n.out.at(r, best) = 1.0;
    }
    return push(std::move(n));
  }

  /// Column j of a as an N×1 tensor.
  Var col_slice(Var a, std::size_t j) {
    const Tensor& A = val(a);
    if (j >= A.cols) throw ShapeMismatch("col_slice: column out of range");
    Node n;
    n.op = Op::ColSlice;
    n.a = a;
    n.c0 = static_cast<double>(j);
    n.out = Tensor(A.rows, 1);
    for (std::size_t r = 0; r < A.rows; ++r) n.out.values[r] = A.at(r, j);
    return push(std::move(n));
  }

  /// Scale every row of a (N×D) by the matching entry of an N×1 column.
  Var mul_col(Var a, Var column) {
    const Tensor& A = val(a);
    const Tensor& C = val(column);
    if (C.cols != 1 || C.rows != A.rows) throw ShapeMismatch("mul_col: column must be N×1");
    Node n;
    n.op = Op::MulCol;
    n.a = a;
    n.b = column;
    n.out = A;
    for (std::size_t r = 0; r < A.rows; ++r)
      for (std::size_t c = 0; c < A.cols; ++c) n.out.at(r, c) *= C.values[r];
    return push(std::move(n));
  }

  Var layer_norm_rows(Var a, double eps = 1e-9) {
    const Tensor& A = val(a);
    Node n;
    n.op = Op::LayerNorm;
    n.a = a;
    n.c0 = eps;
    n.out = Tensor(A.rows, A.cols);
    n.aux2.resize(A.rows);  // inverse std per row
    for (std::size_t r = 0; r < A.rows; ++r) {
      const double* in = A.values.data() + r * A.cols;
      double* o = n.out.values.data() + r * A.cols;
      double mean = 0.0;
      for (std::size_t j = 0; j < A.cols; ++j) mean += in[j];
      mean /= static_cast<double>(A.cols);
      double var = 0.0;
      for (std::size_t j = 0; j < A.cols; ++j) {
        double d = in[j] - mean;
        var += d * d;
      }
      var /= static_cast<double>(A.cols);
      double inv = 1.0 / std::sqrt(var + eps);
      n.aux2[r] = inv;
      for (std::size_t j = 0; j < A.cols; ++j) o[j] = (in[j] - mean) * inv;
    }
    return push(std::move(n));
  }

  /// Per-feature (column) batch normalization. Training mode normalizes by
  /// batch statistics and folds them into the running averages; eval mode
  /// uses the running averages.
  Var batch_norm(Var a, BatchNorm& bn, bool training) {
    const Tensor& A = val(a);
    if (bn.width() != A.cols) throw ShapeMismatch("batch_norm: state width mismatch");
    Node n;
    n.op = Op::BatchNorm;
    n.a = a;
    n.c0 = bn.eps;
    n.training = training;
    n.out = Tensor(A.rows, A.cols);
    n.aux2.resize(A.cols);  // inverse std per column
    const double N = static_cast<double>(A.rows);
    for (std::size_t c = 0; c < A.cols; ++c) {
      double mean, var;
      if (training) {
        mean = 0.0;
        for (std::size_t r = 0; r < A.rows; ++r) mean += A.at(r, c);
        mean /= N;
        var = 0.0;
        for (std::size_t r = 0; r < A.rows; ++r) {
          double d = A.at(r, c) - mean;
          var += d * d;
        }
        var /= N;
        bn.run_mean[c] = bn.momentum * bn.run_mean[c] + (1.0 - bn.momentum) * mean;
        bn.run_var[c] = bn.momentum * bn.run_var[c] + (1.0 - bn.momentum) * var;
      } else {
        mean = bn.run_mean[c];
        var = bn.run_var[c];
      }
      double inv = 1.0 / std::sqrt(var + bn.eps);
      n.aux2[c] = inv;
      for (std::size_t r = 0; r < A.rows; ++r) n.out.at(r, c) = (A.at(r, c) - mean) * inv;
    }
    return push(std::move(n));
  }

  /// Gather rows of an embedding table: out[i] = table[ids[i]].
  Var embed_rows(Var table, std::vector<int> ids) {
    const Tensor& T = val(table);
    Node n;
    n.op = Op::Embed;
    n.a = table;
    n.out = Tensor(ids.size(), T.cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= T.rows)
        throw ShapeMismatch("embed_rows: id out of table range");
      for (std::size_t c = 0; c < T.cols; ++c) n.out.at(i, c) = T.at(ids[i], c);
    }
    n.ids = std::move(ids);
    return push(std::move(n));
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_cols: no parts");
    std::size_t rows = val(parts[0]).rows;
    std::size_t cols = 0;
    for (Var p : parts) {
      if (val(p).rows != rows) throw ShapeMismatch("concat_cols: row counts differ");
      cols += val(p).cols;
    }
    Node n;
    n.op = Op::ConcatCols;
    n.srcs = parts;
    n.out = Tensor(rows, cols);
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor& P = val(p);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < P.cols; ++c) n.out.at(r, off + c) = P.at(r, c);
      off += P.cols;
    }
    return push(std::move(n));
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_rows: no parts");
    std::size_t cols = val(parts[0]).cols;
    std::size_t rows = 0;
    for (Var p : parts) {
      if (val(p).cols != cols) throw ShapeMismatch("concat_rows: column counts differ");
      rows += val(p).rows;
    }
    Node n;
    n.op = Op::ConcatRows;
    n.srcs = parts;
    n.out = Tensor(rows, cols);
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor& P = val(p);
      std::copy(P.values.begin(), P.values.end(), n.out.values.begin() + off * cols);
      off += P.rows;
    }
    return push(std::move(n));
  }

  /// Repeat a 1×d row n times.
  Var tile_rows(Var a, std::size_t count) {
    const Tensor& A = val(a);
    if (A.rows != 1) throw ShapeMismatch("tile_rows: input must be 1×d");
    Node n;
    n.op = Op::TileRows;
    n.a = a;
    n.out = Tensor(count, A.cols);
    for (std::size_t r = 0; r < count; ++r)
      for (std::size_t c = 0; c < A.cols; ++c) n.out.at(r, c) = A.values[c];
    return push(std::move(n));
  }

  Var mean_rows(Var a) {
    const Tensor& A = val(a);
    Node n;
    n.op = Op::MeanRows;
    n.a = a;
    n.out = Tensor(1, A.cols);
    for (std::size_t r = 0; r < A.rows; ++r)
      for (std::size_t c = 0; c < A.cols; ++c) n.out.values[c] += A.at(r, c);
    for (double& v : n.out.values) v /= static_cast<double>(A.rows);
    return push(std::move(n));
  }

  Var sum_all(Var a) {
    Node n;
    n.op = Op::SumAll;
    n.a = a;
    double s = 0.0;
    for (double v : val(a).values) s += v;
    n.out = Tensor::scalar(s);
    return push(std::move(n));
  }

  /// Mean cross-entropy of probability rows against one-hot target rows.
  /// Optional nonnegative per-row weights select/weight rows; the loss is
  /// divided by the weight sum.
  Var cross_entropy(Var probs, Tensor onehot, std::vector<double> row_weights = {}) {
    const Tensor& P = val(probs);
    if (!P.same_shape(onehot)) throw ShapeMismatch("cross_entropy: shapes differ");
    if (row_weights.empty()) row_weights.assign(P.rows, 1.0);
    if (row_weights.size() != P.rows) throw ShapeMismatch("cross_entropy: weight count");
    double wsum = 0.0;
    for (double w : row_weights) wsum += w;
    if (wsum <= 0.0) throw DomainError("cross_entropy: weight sum must be positive");
    double total = 0.0;
    for (std::size_t r = 0; r < P.rows; ++r)
      for (std::size_t c = 0; c < P.cols; ++c) {
        double t = onehot.at(r, c);
        if (t != 0.0) total -= row_weights[r] * t * std::log(detail::clamp_prob(P.at(r, c)));
      }
    Node n;
    n.op = Op::CrossEntropy;
    n.a = probs;
    n.aux = std::move(onehot);
    n.aux2 = std::move(row_weights);
    n.c0 = wsum;
    n.out = Tensor::scalar(total / wsum);
    return push(std::move(n));
  }

  Var mse(Var pred, Tensor target) {
    const Tensor& P = val(pred);
    if (!P.same_shape(target)) throw ShapeMismatch("mse: shapes differ");
    double total = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
      double d = P.values[i] - target.values[i];
      total += d * d;
    }
    Node n;
    n.op = Op::Mse;
    n.a = pred;
    n.aux = std::move(target);
    n.out = Tensor::scalar(total / static_cast<double>(P.size()));
    return push(std::move(n));
  }

  Var bce(Var pred, Tensor target) {
    const Tensor& P = val(pred);
    if (!P.same_shape(target)) throw ShapeMismatch("bce: shapes differ");
    double total = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
      double p = P.values[i];
      if (!(p > 0.0 && p < 1.0)) throw DomainError("BCE prediction outside (0,1)");
      double t = target.values[i];
      total -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }
    Node n;
    n.op = Op::Bce;
    n.a = pred;
    n.aux = std::move(target);
    n.out = Tensor::scalar(total / static_cast<double>(P.size()));
    return push(std::move(n));
  }

  /// Reverse sweep from a scalar node. Gradients of every requires_grad
  /// leaf accumulate into its Tensor::grad. The tape is cleared afterwards.
  void backward(Var loss) {
    if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size())
      throw std::invalid_argument("backward: bad node handle");
    if (nodes_[loss].out.size() != 1) throw NotScalar("backward target is not a scalar");

    for (auto& n : nodes_) n.g.assign(n.out.size(), 0.0);
    nodes_[loss].g[0] = 1.0;

    for (int i = loss; i >= 0; --i) {
      Node& n = nodes_[i];
      bool any = false;
      for (double v : n.g)
        if (v != 0.0) {
          any = true;
          break;
        }
      if (!any) continue;
      backprop_node(n);
    }

    for (auto& n : nodes_)
      if (n.op == Op::Leaf && n.external && n.external->requires_grad) {
        n.external->ensure_grad();
        for (std::size_t i = 0; i < n.g.size(); ++i) n.external->grad[i] += n.g[i];
      }
    clear();
  }

  void clear() {
    nodes_.clear();
    leaf_cache_.clear();
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    Leaf,
    Constant,
    MatMul,
    MatMulNT,
    Add,
    AddRow,
    Sub,
    Mul,
    Scale,
    AddMask,
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    HardSoftmaxST,
    ColSlice,
    MulCol,
    LayerNorm,
    BatchNorm,
    Embed,
    ConcatCols,
    ConcatRows,
    TileRows,
    MeanRows,
    SumAll,
    CrossEntropy,
    Mse,
    Bce,
  };

  struct Node {
    Op op;
    int a = -1, b = -1;
    std::vector<int> srcs;
    Tensor out;
    std::vector<double> g;
    double c0 = 0.0;
    std::vector<int> ids;
    Tensor aux;
    std::vector<double> aux2;
    Tensor* external = nullptr;
    bool training = false;
  };

  Var push(Node&& n) {
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  void backprop_node(Node& n) {
    switch (n.op) {
      case Op::Leaf:
      case Op::Constant:
        break;
      case Op::MatMul: {
        Node& A = nodes_[n.a];
        Node& B = nodes_[n.b];
        // gA += g · B^T ; gB += A^T · g
        detail::mm_nt_acc(n.g.data(), B.out.values.data(), A.g.data(), A.out.rows, B.out.cols,
                          B.out.rows);
        detail::mm_tn_acc(A.out.values.data(), n.g.data(), B.g.data(), A.out.rows, A.out.cols,
                          B.out.cols);
        break;
      }
      case Op::MatMulNT: {
        Node& A = nodes_[n.a];
        Node& B = nodes_[n.b];
        // out = A · B^T : gA += g · B ; gB += g^T · A
        detail::mm_acc(n.g.data(), B.out.values.data(), A.g.data(), A.out.rows, B.out.rows,
                       B.out.cols);
        detail::mm_tn_acc(n.g.data(), A.out.values.data(), B.g.data(), A.out.rows, B.out.rows,
                          A.out.cols);
        break;
      }
      case Op::Add: {
        Node& A = nodes_[n.a];
        Node& B = nodes_[n.b];
        for (std::size_t i = 0; i < n.g.size(); ++i) {
          A.g[i] += n.g[i];
          B.g[i] += n.g[i];
        }
        break;
      }
      case Op::AddRow: {
        Node& A = nodes_[n.a];
        Node& B = nodes_[n.b];
        for (std::size_t i = 0; i < n.g.size(); ++i) A.g[i] += n.g[i];
        for (std::size_t r = 0; r < n.out.rows; ++r)
          for (std::size_t c = 0; c < n.out.cols; ++c) B.g[c] += n.g[r * n.out.cols + c];
        break;
      }
      case Op::Sub: {
        Node& A = nodes_[n.a];
        Node& B = nodes_[n.b];
        for (std::size_t i = 0; i < n.g.size(); ++i) {
          A.g[i] += n.g[i];
          B.g[i] -= n.g[i];
        }
        break;
      }
      case Op::Mul: {
        Node& A = nodes_[n.a];
        Node& B = nodes_[n.b];
        for (std::size_t i = 0; i < n.g.size(); ++i) {
          A.g[i] += n.g[i] * B.out.values[i];
          B.g[i] += n.g[i] * A.out.values[i];
        }
        break;
      }
      case Op::Scale: {
        Node& A = nodes_[n.a];
        for (std::size_t i = 0; i < n.g.size(); ++i) A.g[i] += n.g[i] * n.c0;
        break;
      }
      case Op::AddMask: {
        Node& A = nodes_[n.a];
        for (std::size_t i = 0; i < n.g.size(); ++i) A.g[i] += n.g[i];
        break;
      }
      case Op::Relu: {
        Node& A = nodes_[n.a];
        for (std::size_t i = 0; i < n.g.size(); ++i)
          if (n.out.values[i] > 0.0) A.g[i] += n.g[i];
        break;
      }
      case Op::Tanh: {
        Node& A = nodes_[n.a];
        for (std::size_t i = 0; i < n.g.size(); ++i) {
          double y = n.out.values[i];
          A.g[i] += n.g[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::Sigmoid: {
        Node& A = nodes_[n.a];
        for (std::size_t i = 0; i < n.g.size(); ++i) {
          double y = n.out.values[i];
          A.g[i] += n.g[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::Softmax: {
        Node& A = nodes_[n.a];
        for (std::size_t r = 0; r < n.out.rows; ++r) {
          const double* s = n.out.values.data() + r * n.out.cols;
          const double* g = n.g.data() + r * n.out.cols;
          double dot = 0.0;
          for (std::size_t j = 0; j < n.out.cols; ++j) dot += g[j] * s[j];
          double* ga = A.g.data() + r * n.out.cols;
          for (std::size_t j = 0; j < n.out.cols; ++j) ga[j] += s[j] * (g[j] - dot);
        }
        break;
      }
      case Op::HardSoftmaxST: {
        Node& A = nodes_[n.a];
        for (std::size_t r = 0; r < n.out.rows; ++r) {
          const double* s = n.aux.values.data() + r * n.out.cols;
          const double* g = n.g.data() + r * n.out.cols;
          double dot = 0.0;
          for (std::size_t j = 0; j < n.out.cols; ++j) dot += g[j] * s[j];
          double* ga = A.g.data() + r * n.out.cols;
          for (std::size_t j = 0; j < n.out.cols; ++j) ga[j] += s[j] * (g[j] - dot);
        }
        break;
      }
      case Op::ColSlice: {
        Node& A = nodes_[n.a];
        std::size_t j = static_cast<std::size_t>(n.c0);
        for (std::size_t r = 0; r < n.out.rows; ++r)
          A.g[r * A.out.cols + j] += n.g[r];
        break;
      }
      case Op::MulCol: {
        Node& A = nodes_[n.a];
        Node& B = nodes_[n.b];
        for (std::size_t r = 0; r < n.out.rows; ++r) {
          double acc = 0.0;
          for (std::size_t c = 0; c < n.out.cols; ++c) {
            A.g[r * n.out.cols + c] += n.g[r * n.out.cols + c] * B.out.values[r];
            acc += n.g[r * n.out.cols + c] * A.out.values[r * n.out.cols + c];
          }
          B.g[r] += acc;
        }
        break;
      }
      case Op::LayerNorm: {
        Node& A = nodes_[n.a];
        const std::size_t d = n.out.cols;
        for (std::size_t r = 0; r < n.out.rows; ++r) {
          const double* y = n.out.values.data() + r * d;
          const double* g = n.g.data() + r * d;
          double inv = n.aux2[r];
          double gmean = 0.0, gymean = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            gmean += g[j];
            gymean += g[j] * y[j];
          }
          gmean /= static_cast<double>(d);
          gymean /= static_cast<double>(d);
          double* ga = A.g.data() + r * d;
          for (std::size_t j = 0; j < d; ++j) ga[j] += inv * (g[j] - gmean - y[j] * gymean);
        }
        break;
      }
      case Op::BatchNorm: {
        Node& A = nodes_[n.a];
        const std::size_t rows = n.out.rows, cols = n.out.cols;
        if (n.training) {
          for (std::size_t c = 0; c < cols; ++c) {
            double inv = n.aux2[c];
            double gmean = 0.0, gymean = 0.0;
            for (std::size_t r = 0; r < rows; ++r) {
              gmean += n.g[r * cols + c];
              gymean += n.g[r * cols + c] * n.out.values[r * cols + c];
            }
            gmean /= static_cast<double>(rows);
            gymean /= static_cast<double>(rows);
            for (std::size_t r = 0; r < rows; ++r)
              A.g[r * cols + c] += inv * (n.g[r * cols + c] - gmean -
                                          n.out.values[r * cols + c] * gymean);
          }
        } else {
          for (std::size_t c = 0; c < cols; ++c) {
            double inv = n.aux2[c];
            for (std::size_t r = 0; r < rows; ++r) A.g[r * cols + c] += inv * n.g[r * cols + c];
          }
        }
        break;
      }
      case Op::Embed: {
        Node& A = nodes_[n.a];
        for (std::size_t i = 0; i < n.ids.size(); ++i)
          for (std::size_t c = 0; c < n.out.cols; ++c)
            A.g[n.ids[i] * n.out.cols + c] += n.g[i * n.out.cols + c];
        break;
      }
      case Op::ConcatCols: {
        std::size_t off = 0;
        for (int src : n.srcs) {
          Node& S = nodes_[src];
          for (std::size_t r = 0; r < n.out.rows; ++r)
            for (std::size_t c = 0; c < S.out.cols; ++c)
              S.g[r * S.out.cols + c] += n.g[r * n.out.cols + off + c];
          off += S.out.cols;
        }
        break;
      }
      case Op::ConcatRows: {
        std::size_t off = 0;
        for (int src : n.srcs) {
          Node& S = nodes_[src];
          for (std::size_t i = 0; i < S.out.size(); ++i)
            S.g[i] += n.g[off * n.out.cols + i];
          off += S.out.rows;
        }
        break;
      }
      case Op::TileRows: {
        Node& A = nodes_[n.a];
        for (std::size_t r = 0; r < n.out.rows; ++r)
          for (std::size_t c = 0; c < n.out.cols; ++c) A.g[c] += n.g[r * n.out.cols + c];
        break;
      }
      case Op::MeanRows: {
        Node& A = nodes_[n.a];
        double inv = 1.0 / static_cast<double>(A.out.rows);
        for (std::size_t r = 0; r < A.out.rows; ++r)
          for (std::size_t c = 0; c < n.out.cols; ++c)
            A.g[r * n.out.cols + c] += n.g[c] * inv;
        break;
      }
      case Op::SumAll: {
        Node& A = nodes_[n.a];
        for (double& v : A.g) v += n.g[0];
        break;
      }
      case Op::CrossEntropy: {
        Node& A = nodes_[n.a];
        double gl = n.g[0] / n.c0;  // / weight sum
        for (std::size_t r = 0; r < A.out.rows; ++r) {
          double w = n.aux2[r];
          if (w == 0.0) continue;
          for (std::size_t c = 0; c < A.out.cols; ++c) {
            double t = n.aux.at(r, c);
            if (t != 0.0)
              A.g[r * A.out.cols + c] -=
                  gl * w * t / detail::clamp_prob(A.out.values[r * A.out.cols + c]);
          }
        }
        break;
      }
      case Op::Mse: {
        Node& A = nodes_[n.a];
        double gl = n.g[0] * 2.0 / static_cast<double>(A.out.size());
        for (std::size_t i = 0; i < A.out.size(); ++i)
          A.g[i] += gl * (A.out.values[i] - n.aux.values[i]);
        break;
      }
      case Op::Bce: {
        Node& A = nodes_[n.a];
        double gl = n.g[0] / static_cast<double>(A.out.size());
        for (std::size_t i = 0; i < A.out.size(); ++i) {
          double p = A.out.values[i];
          double t = n.aux.values[i];
          A.g[i] += gl * (-t / p + (1.0 - t) / (1.0 - p));
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, Var> leaf_cache_;
};

/// Compare an analytic gradient (already stored in theta.grad) against
/// central differences of f around theta. Returns the max over coordinates
/// of |analytic - numeric| / max(1, |analytic|).
inline double finite_diff_check(const std::function<double(const Tensor&)>& f,
                                const Tensor& theta, double eps) {
  if (theta.grad.size() != theta.values.size())
    throw std::invalid_argument("finite_diff_check: theta.grad not populated");
  Tensor probe = theta;
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    double orig = theta.values[i];
    probe.values[i] = orig + eps;
    double fp = f(probe);
    probe.values[i] = orig - eps;
    double fm = f(probe);
    probe.values[i] = orig;
    double numeric = (fp - fm) / (2.0 * eps);
    double analytic = theta.grad[i];
    double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace hpl
