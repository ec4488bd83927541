#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gcopt/diffusion.hpp"
#include "gcopt/errors.hpp"
#include "gcopt/matrix.hpp"
#include "gcopt/rng.hpp"

namespace gcopt {

class Tape;

/// Value plus an optional handle into a gradient tape. id < 0 marks a
/// constant that does not participate in differentiation.
struct Tensor {
  Matrix v;
  int id = -1;

  int rows() const { return v.rows; }
  int cols() const { return v.cols; }
  double scalar() const {
    if (v.rows != 1 || v.cols != 1) throw shape_error("Tensor::scalar: not a 1x1 tensor");
    return v.a[0];
  }
};

/// Reverse-mode gradient tape.
///
/// Ops append nodes in evaluation order, which is a topological order of the
/// compute graph, so the backward sweep visits each node exactly once in
/// reverse. Node output values are owned by the tape and referenced by the
/// backward closures of their consumers; both values and gradients are
/// released as the sweep passes them to bound peak memory.
class Tape {
 public:
  struct Node {
    int rows = 0, cols = 0;
    // Receives the gradient at this node's output, pushes into parents.
    std::function<void(const Matrix& grad, Tape& tape)> backward;
  };

  int record(Matrix value, std::function<void(const Matrix&, Tape&)> backward) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{value.rows, value.cols, std::move(backward)});
    values_.push_back(std::move(value));
    return id;
  }

  /// Leaf node (parameter or differentiable input). No backward rule; its
  /// gradient is simply collected.
  Tensor leaf(Matrix value) {
    Tensor t;
    t.v = value;
    t.id = record(std::move(value), nullptr);
    return t;
  }

  const Matrix& value(int id) const { return values_[id]; }
  std::size_t num_nodes() const { return nodes_.size(); }

  void accumulate(int id, const Matrix& g) {
    if (id < 0) return;
    Matrix& slot = grads_[id];
    if (slot.size() == 0) {
      slot = g;
    } else {
      check_same_shape(slot, g, "grad accumulate");
      for (std::size_t i = 0; i < slot.a.size(); ++i) slot.a[i] += g.a[i];
    }
  }

  /// Runs the reverse sweep from a scalar loss. Returns gradients for the
  /// requested leaf ids; ids never reached by the sweep yield zero matrices
  /// of the leaf's shape.
  std::vector<Matrix> backward(const Tensor& loss, const std::vector<int>& wanted) {
    if (loss.id < 0) throw param_error("backward: loss is a constant");
    if (nodes_[loss.id].rows != 1 || nodes_[loss.id].cols != 1)
      throw param_error("backward: loss must be scalar");
    grads_.assign(nodes_.size(), Matrix());
    grads_[loss.id] = Matrix::scalar(1.0);
    std::vector<char> keep(nodes_.size(), 0);
    for (int id : wanted) keep[id] = 1;
    for (int id = loss.id; id >= 0; --id) {
      if (grads_[id].size() == 0) continue;  // not reached from the loss
      if (nodes_[id].backward) nodes_[id].backward(grads_[id], *this);
      if (!keep[id]) {
        grads_[id] = Matrix();
        values_[id] = Matrix();
      }
    }
    std::vector<Matrix> out;
    out.reserve(wanted.size());
    for (int id : wanted) {
      if (grads_[id].size() == 0) grads_[id] = Matrix(nodes_[id].rows, nodes_[id].cols);
      out.push_back(std::move(grads_[id]));
    }
    grads_.clear();
    return out;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<Matrix> values_;
  std::vector<Matrix> grads_;
};

// ---------------------------------------------------------------------------
// Primitive kernels. Every op validates shapes, computes the value, and when
// any input is tracked records the backward rule on the tape.
// ---------------------------------------------------------------------------
namespace ops {

constexpr double kLogClamp = 1e-7;  // global floor for log arguments

inline Tensor constant(Matrix v) { return Tensor{std::move(v), -1}; }

inline Tensor matmul(Tape& tape, const Tensor& x, const Tensor& y) {
  Matrix out = gcopt::matmul(x.v, y.v);
  const int xid = x.id, yid = y.id;
  if (xid < 0 && yid < 0) return constant(std::move(out));
  // Copies of constant operands are captured; tracked operands are read back
  // from the tape by id.
  Matrix xc = xid < 0 ? x.v : Matrix();
  Matrix yc = yid < 0 ? y.v : Matrix();
  Tensor t;
  t.v = out;
  t.id = tape.record(std::move(out), [xid, yid, xc, yc](const Matrix& g, Tape& tp) {
    const Matrix& xv = xid < 0 ? xc : tp.value(xid);
    const Matrix& yv = yid < 0 ? yc : tp.value(yid);
    if (xid >= 0) tp.accumulate(xid, gcopt::matmul(g, transpose(yv)));
    if (yid >= 0) tp.accumulate(yid, gcopt::matmul(transpose(xv), g));
  });
  return t;
}

/// y = S x for a constant sparse linear map S; backward applies the adjoint.
inline Tensor sparse_apply(Tape& tape, const SparseMap& map, const Tensor& x) {
  Matrix out = map.apply(x.v);
  if (x.id < 0) return constant(std::move(out));
  const SparseMap* m = &map;
  const int xid = x.id;
  Tensor t;
  t.v = out;
  t.id = tape.record(std::move(out), [m, xid](const Matrix& g, Tape& tp) {
    tp.accumulate(xid, m->apply_transpose(g));
  });
  return t;
}

namespace detail {

template <typename Fwd, typename Bwd>
Tensor unary(Tape& tape, const Tensor& x, Fwd&& fwd, Bwd&& bwd) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.v.a.size(); ++i) out.a[i] = fwd(x.v.a[i]);
  if (x.id < 0) return constant(std::move(out));
  const int xid = x.id;
  const int oid_shape_rows = out.rows, oid_shape_cols = out.cols;
  Tensor t;
  t.v = out;
  int oid = -1;
  oid = tape.record(std::move(out), [xid, bwd, oid_shape_rows, oid_shape_cols, &tape, oid](
                        const Matrix&, Tape&) { (void)oid_shape_rows; (void)oid_shape_cols; });
  (void)oid;
  // placeholder replaced below; see unary_with_ids
  t.id = -1;
  return t;
}

}  // namespace detail

// Elementwise helper: backward receives (input value, output value, gradient).
template <typename Fwd, typename Bwd>
inline Tensor elementwise(Tape& tape, const Tensor& x, Fwd fwd, Bwd bwd) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.v.a.size(); ++i) out.a[i] = fwd(x.v.a[i]);
  if (x.id < 0) return Tensor{std::move(out), -1};
  const int xid = x.id;
  Tensor t;
  t.v = out;
  t.id = tape.record(out, [xid, bwd, yv = std::move(out)](const Matrix& g, Tape& tp) {
    const Matrix& xv = tp.value(xid);
    Matrix gx(g.rows, g.cols);
    for (std::size_t i = 0; i < g.a.size(); ++i) gx.a[i] = bwd(xv.a[i], yv.a[i]) * g.a[i];
    tp.accumulate(xid, gx);
  });
  return t;
}

inline Tensor add(Tape& tape, const Tensor& x, const Tensor& y) {
  check_same_shape(x.v, y.v, "add");
  Matrix out = x.v;
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] += y.v.a[i];
  if (x.id < 0 && y.id < 0) return Tensor{std::move(out), -1};
  const int xid = x.id, yid = y.id;
  Tensor t;
  t.v = out;
  t.id = tape.record(std::move(out), [xid, yid](const Matrix& g, Tape& tp) {
    tp.accumulate(xid, g);
    tp.accumulate(yid, g);
  });
  return t;
}

inline Tensor sub(Tape& tape, const Tensor& x, const Tensor& y) {
  check_same_shape(x.v, y.v, "sub");
  Matrix out = x.v;
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] -= y.v.a[i];
  if (x.id < 0 && y.id < 0) return Tensor{std::move(out), -1};
  const int xid = x.id, yid = y.id;
  Tensor t;
  t.v = out;
  t.id = tape.record(std::move(out), [xid, yid](const Matrix& g, Tape& tp) {
    tp.accumulate(xid, g);
    if (yid >= 0) {
      Matrix ng(g.rows, g.cols);
      for (std::size_t i = 0; i < g.a.size(); ++i) ng.a[i] = -g.a[i];
      tp.accumulate(yid, ng);
    }
  });
  return t;
}

inline Tensor mul(Tape& tape, const Tensor& x, const Tensor& y) {
  check_same_shape(x.v, y.v, "mul");
  Matrix out = x.v;
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] *= y.v.a[i];
  if (x.id < 0 && y.id < 0) return Tensor{std::move(out), -1};
  const int xid = x.id, yid = y.id;
  Matrix xc = xid < 0 ? x.v : Matrix();
  Matrix yc = yid < 0 ? y.v : Matrix();
  Tensor t;
  t.v = out;
  t.id = tape.record(std::move(out), [xid, yid, xc, yc](const Matrix& g, Tape& tp) {
    const Matrix& xv = xid < 0 ? xc : tp.value(xid);
    const Matrix& yv = yid < 0 ? yc : tp.value(yid);
    if (xid >= 0) {
      Matrix gx(g.rows, g.cols);
      for (std::size_t i = 0; i < g.a.size(); ++i) gx.a[i] = g.a[i] * yv.a[i];
      tp.accumulate(xid, gx);
    }
    if (yid >= 0) {
      Matrix gy(g.rows, g.cols);
      for (std::size_t i = 0; i < g.a.size(); ++i) gy.a[i] = g.a[i] * xv.a[i];
      tp.accumulate(yid, gy);
    }
  });
  return t;
}

/// y = a*x + b with scalar constants.
inline Tensor affine(Tape& tape, const Tensor& x, double a, double b) {
  return elementwise(
      tape, x, [a, b](double v) { return a * v + b; }, [a](double, double) { return a; });
}

inline Tensor scale(Tape& tape, const Tensor& x, double a) { return affine(tape, x, a, 0.0); }

/// Broadcast add of a 1 x d bias row to every row of x.
inline Tensor bias_add(Tape& tape, const Tensor& x, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != x.cols()) throw shape_error("bias_add: bias must be 1 x cols");
  Matrix out = x.v;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out(i, j) += b.v.a[j];
  if (x.id < 0 && b.id < 0) return Tensor{std::move(out), -1};
  const int xid = x.id, bid = b.id;
  Tensor t;
  t.v = out;
  t.id = tape.record(std::move(out), [xid, bid](const Matrix& g, Tape& tp) {
    tp.accumulate(xid, g);
    if (bid >= 0) {
      Matrix gb(1, g.cols);
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j) gb.a[j] += g(i, j);
      tp.accumulate(bid, gb);
    }
  });
  return t;
}

/// Concatenation along columns.
inline Tensor concat_cols(Tape& tape, const std::vector<Tensor>& xs) {
  if (xs.empty()) throw param_error("concat_cols: nothing to concatenate");
  const int rows = xs.front().rows();
  int cols = 0;
  for (const auto& x : xs) {
    if (x.rows() != rows) throw shape_error("concat_cols: row counts differ");
    cols += x.cols();
  }
  Matrix out(rows, cols);
  int at = 0;
  bool tracked = false;
  std::vector<int> ids;
  std::vector<int> widths;
  for (const auto& x : xs) {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < x.cols(); ++j) out(i, at + j) = x.v(i, j);
    at += x.cols();
    ids.push_back(x.id);
    widths.push_back(x.cols());
    tracked = tracked || x.id >= 0;
  }
  if (!tracked) return Tensor{std::move(out), -1};
  Tensor t;
  t.v = out;
  t.id = tape.record(std::move(out), [ids, widths](const Matrix& g, Tape& tp) {
    int from = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (ids[k] >= 0) {
        Matrix gk(g.rows, widths[k]);
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < widths[k]; ++j) gk(i, j) = g(i, from + j);
        tp.accumulate(ids[k], gk);
      }
      from += widths[k];
    }
  });
  return t;
}

/// Extracts column j as an n x 1 tensor.
inline Tensor col(Tape& tape, const Tensor& x, int j) {
  if (j < 0 || j >= x.cols()) throw shape_error("col: index out of range");
  Matrix out(x.rows(), 1);
  for (int i = 0; i < x.rows(); ++i) out(i, 0) = x.v(i, j);
  if (x.id < 0) return Tensor{std::move(out), -1};
  const int xid = x.id, cols = x.cols();
  Tensor t;
  t.v = out;
  t.id = tape.record(std::move(out), [xid, j, cols](const Matrix& g, Tape& tp) {
    Matrix gx(g.rows, cols);
    for (int i = 0; i < g.rows; ++i) gx(i, j) = g(i, 0);
    tp.accumulate(xid, gx);
  });
  return t;
}

inline Tensor sigmoid(Tape& tape, const Tensor& x) {
  return elementwise(
      tape, x,
      [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor elu(Tape& tape, const Tensor& x) {
  return elementwise(
      tape, x, [](double v) { return v > 0 ? v : std::expm1(v); },
      [](double v, double y) { return v > 0 ? 1.0 : y + 1.0; });
}

inline Tensor leaky_relu(Tape& tape, const Tensor& x, double slope) {
  return elementwise(
      tape, x, [slope](double v) { return v >= 0 ? v : slope * v; },
      [slope](double v, double) { return v >= 0 ? 1.0 : slope; });
}

inline Tensor relu(Tape& tape, const Tensor& x) { return leaky_relu(tape, x, 0.0); }

inline Tensor gelu(Tape& tape, const Tensor& x) {
  constexpr double inv_sqrt2 = 0.7071067811865476;
  constexpr double inv_sqrt2pi = 0.3989422804014327;
  return elementwise(
      tape, x, [=](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [=](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        return cdf + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
      });
}

/// log(max(x, 1e-7)); flat (zero gradient) below the clamp.
inline Tensor log(Tape& tape, const Tensor& x) {
  return elementwise(
      tape, x, [](double v) { return std::log(std::max(v, kLogClamp)); },
      [](double v, double) { return v > kLogClamp ? 1.0 / v : 0.0; });
}

inline Tensor exp(Tape& tape, const Tensor& x) {
  return elementwise(
      tape, x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi) {
  return elementwise(
      tape, x, [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

inline Tensor sum_all(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.v.a) s += v;
  if (x.id < 0) return Tensor{Matrix::scalar(s), -1};
  const int xid = x.id, rows = x.rows(), cols = x.cols();
  Tensor t;
  t.v = Matrix::scalar(s);
  t.id = tape.record(Matrix::scalar(s), [xid, rows, cols](const Matrix& g, Tape& tp) {
    tp.accumulate(xid, Matrix(rows, cols, g.a[0]));
  });
  return t;
}

inline Tensor mean_all(Tape& tape, const Tensor& x) {
  return scale(tape, sum_all(tape, x), 1.0 / static_cast<double>(x.v.size()));
}

/// L1 norm: sum of absolute values (subgradient 0 at zero entries).
inline Tensor l1_norm(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.v.a) s += std::fabs(v);
  if (x.id < 0) return Tensor{Matrix::scalar(s), -1};
  const int xid = x.id;
  Tensor t;
  t.v = Matrix::scalar(s);
  t.id = tape.record(Matrix::scalar(s), [xid](const Matrix& g, Tape& tp) {
    const Matrix& xv = tp.value(xid);
    Matrix gx(xv.rows, xv.cols);
    for (std::size_t i = 0; i < xv.a.size(); ++i)
      gx.a[i] = g.a[0] * (xv.a[i] > 0 ? 1.0 : (xv.a[i] < 0 ? -1.0 : 0.0));
    tp.accumulate(xid, gx);
  });
  return t;
}

/// Rows rescaled to unit L2 norm, smoothed as x / sqrt(|x|^2 + 1e-12).
inline Tensor l2_row_normalize(Tape& tape, const Tensor& x) {
  constexpr double eps2 = 1e-12;
  Matrix out(x.rows(), x.cols());
  std::vector<double> inv_norm(x.rows());
  for (int i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < x.cols(); ++j) s += x.v(i, j) * x.v(i, j);
    inv_norm[i] = 1.0 / std::sqrt(s + eps2);
    for (int j = 0; j < x.cols(); ++j) out(i, j) = x.v(i, j) * inv_norm[i];
  }
  if (x.id < 0) return Tensor{std::move(out), -1};
  const int xid = x.id;
  Tensor t;
  t.v = out;
  t.id = tape.record(std::move(out), [xid, inv_norm](const Matrix& g, Tape& tp) {
    const Matrix& xv = tp.value(xid);
    Matrix gx(g.rows, g.cols);
    for (int i = 0; i < g.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < g.cols; ++j) dot += g(i, j) * xv(i, j);
      const double r = inv_norm[i];
      for (int j = 0; j < g.cols; ++j) gx(i, j) = r * g(i, j) - r * r * r * dot * xv(i, j);
    }
    tp.accumulate(xid, gx);
  });
  return t;
}

/// Softmax across the columns of every row.
inline Tensor softmax_rows(Tape& tape, const Tensor& x) {
  Matrix out(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    double mx = -1e308;
    for (int j = 0; j < x.cols(); ++j) mx = std::max(mx, x.v(i, j));
    double z = 0.0;
    for (int j = 0; j < x.cols(); ++j) z += std::exp(x.v(i, j) - mx);
    for (int j = 0; j < x.cols(); ++j) out(i, j) = std::exp(x.v(i, j) - mx) / z;
  }
  if (x.id < 0) return Tensor{std::move(out), -1};
  const int xid = x.id;
  Tensor t;
  t.v = out;
  t.id = tape.record(out, [xid, yv = std::move(out)](const Matrix& g, Tape& tp) {
    Matrix gx(g.rows, g.cols);
    for (int i = 0; i < g.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < g.cols; ++j) dot += g(i, j) * yv(i, j);
      for (int j = 0; j < g.cols; ++j) gx(i, j) = yv(i, j) * (g(i, j) - dot);
    }
    tp.accumulate(xid, gx);
  });
  return t;
}

/// Rescales row i of x by s(i, 0); gradient flows into both operands.
inline Tensor row_scale(Tape& tape, const Tensor& x, const Tensor& s) {
  if (s.cols() != 1 || s.rows() != x.rows()) throw shape_error("row_scale: scale must be n x 1");
  Matrix out = x.v;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out(i, j) *= s.v(i, 0);
  if (x.id < 0 && s.id < 0) return Tensor{std::move(out), -1};
  const int xid = x.id, sid = s.id;
  Matrix xc = xid < 0 ? x.v : Matrix();
  Matrix sc = sid < 0 ? s.v : Matrix();
  Tensor t;
  t.v = out;
  t.id = tape.record(std::move(out), [xid, sid, xc, sc](const Matrix& g, Tape& tp) {
    const Matrix& xv = xid < 0 ? xc : tp.value(xid);
    const Matrix& sv = sid < 0 ? sc : tp.value(sid);
    if (xid >= 0) {
      Matrix gx(g.rows, g.cols);
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j) gx(i, j) = g(i, j) * sv(i, 0);
      tp.accumulate(xid, gx);
    }
    if (sid >= 0) {
      Matrix gs(g.rows, 1);
      for (int i = 0; i < g.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < g.cols; ++j) dot += g(i, j) * xv(i, j);
        gs(i, 0) = dot;
      }
      tp.accumulate(sid, gs);
    }
  });
  return t;
}

/// Rescales rows by a constant per-row factor (e.g. graph-size normalization).
inline Tensor row_scale_const(Tape& tape, const Tensor& x, std::vector<double> factor) {
  if (static_cast<int>(factor.size()) != x.rows())
    throw shape_error("row_scale_const: factor length must equal rows");
  Matrix out = x.v;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out(i, j) *= factor[i];
  if (x.id < 0) return Tensor{std::move(out), -1};
  const int xid = x.id;
  Tensor t;
  t.v = out;
  t.id = tape.record(std::move(out), [xid, factor = std::move(factor)](const Matrix& g, Tape& tp) {
    Matrix gx(g.rows, g.cols);
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) gx(i, j) = g(i, j) * factor[i];
    tp.accumulate(xid, gx);
  });
  return t;
}

/// Running statistics owned by a batch-norm module, updated in train mode.
struct BatchNormState {
  Matrix running_mean;  // 1 x d
  Matrix running_var;   // 1 x d
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-feature batch normalization over rows. Train mode normalizes with
/// batch statistics and updates the running estimates (unbiased variance);
/// eval mode is the fixed affine map through the running statistics.
inline Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         BatchNormState& state, bool training) {
  const int n = x.rows(), d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d)
    throw shape_error("batch_norm: gamma/beta must be 1 x d");
  if (state.running_mean.size() == 0) {
    state.running_mean = Matrix(1, d, 0.0);
    state.running_var = Matrix(1, d, 1.0);
  }
  std::vector<double> mean(d), var(d);
  if (training) {
    for (int j = 0; j < d; ++j) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += x.v(i, j);
      mean[j] = s / n;
      double q = 0.0;
      for (int i = 0; i < n; ++i) {
        const double c = x.v(i, j) - mean[j];
        q += c * c;
      }
      var[j] = q / n;
      const double unbiased = n > 1 ? q / (n - 1) : q;
      state.running_mean.a[j] = (1 - state.momentum) * state.running_mean.a[j] + state.momentum * mean[j];
      state.running_var.a[j] = (1 - state.momentum) * state.running_var.a[j] + state.momentum * unbiased;
    }
  } else {
    for (int j = 0; j < d; ++j) {
      mean[j] = state.running_mean.a[j];
      var[j] = state.running_var.a[j];
    }
  }
  std::vector<double> inv_std(d);
  for (int j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);
  Matrix xhat(n, d), out(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      xhat(i, j) = (x.v(i, j) - mean[j]) * inv_std[j];
      out(i, j) = gamma.v.a[j] * xhat(i, j) + beta.v.a[j];
    }
  if (x.id < 0 && gamma.id < 0 && beta.id < 0) return Tensor{std::move(out), -1};
  const int xid = x.id, gid = gamma.id, bid = beta.id;
  Matrix gc = gid < 0 ? gamma.v : Matrix();
  Tensor t;
  t.v = out;
  t.id = tape.record(
      std::move(out), [xid, gid, bid, gc, training, inv_std, xhat = std::move(xhat)](
                          const Matrix& g, Tape& tp) {
        const int n = g.rows, d = g.cols;
        const Matrix& gammav = gid < 0 ? gc : tp.value(gid);
        if (bid >= 0) {
          Matrix gb(1, d);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) gb.a[j] += g(i, j);
          tp.accumulate(bid, gb);
        }
        if (gid >= 0) {
          Matrix gg(1, d);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) gg.a[j] += g(i, j) * xhat(i, j);
          tp.accumulate(gid, gg);
        }
        if (xid >= 0) {
          Matrix gx(n, d);
          if (training) {
            // d/dx of batch statistics included
            for (int j = 0; j < d; ++j) {
              double gsum = 0.0, gxhat = 0.0;
              for (int i = 0; i < n; ++i) {
                gsum += g(i, j);
                gxhat += g(i, j) * xhat(i, j);
              }
              const double a = gammav.a[j] * inv_std[j];
              for (int i = 0; i < n; ++i)
                gx(i, j) = a * (g(i, j) - gsum / n - xhat(i, j) * gxhat / n);
            }
          } else {
            for (int i = 0; i < n; ++i)
              for (int j = 0; j < d; ++j) gx(i, j) = g(i, j) * gammav.a[j] * inv_std[j];
          }
          tp.accumulate(xid, gx);
        }
      });
  return t;
}

/// Inverted dropout: train mode masks entries with probability p and scales
/// survivors by 1/(1-p); eval mode is the identity.
inline Tensor dropout(Tape& tape, const Tensor& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw param_error("dropout: probability must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 - p;
  for (auto& mv : mask.a) mv = rng.uniform() < p ? 0.0 : 1.0 / keep;
  Matrix out = x.v;
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] *= mask.a[i];
  if (x.id < 0) return Tensor{std::move(out), -1};
  const int xid = x.id;
  Tensor t;
  t.v = out;
  t.id = tape.record(std::move(out), [xid, mask = std::move(mask)](const Matrix& g, Tape& tp) {
    Matrix gx(g.rows, g.cols);
    for (std::size_t i = 0; i < g.a.size(); ++i) gx.a[i] = g.a[i] * mask.a[i];
    tp.accumulate(xid, gx);
  });
  return t;
}

}  // namespace ops

}  // namespace gcopt
