#pragma once

#include <vector>

#include "gcopt/graph.hpp"
#include "gcopt/matrix.hpp"

namespace gcopt {

/// Abstract sparse linear map used as a constant inside the autodiff tape.
/// `apply_transpose` is the adjoint needed by the backward pass.
class SparseMap {
 public:
  virtual ~SparseMap() = default;
  virtual Matrix apply(const Matrix& x) const = 0;
  virtual Matrix apply_transpose(const Matrix& x) const = 0;
  virtual int dim() const = 0;

  void check(const Matrix& x, const char* op) const {
    if (x.rows != dim())
      throw shape_error(std::string(op) + ": operand has " + std::to_string(x.rows) +
                        " rows, graph has " + std::to_string(dim()) + " vertices");
  }
};

/// Plain adjacency product A x (symmetric, self-adjoint).
class AdjacencyMap final : public SparseMap {
 public:
  explicit AdjacencyMap(const Graph& g) : g_(&g) {}

  Matrix apply(const Matrix& x) const override {
    check(x, "adjacency_apply");
    Matrix out(x.rows, x.cols);
    for (int v = 0; v < g_->num_vertices(); ++v) {
      double* ov = &out.a[static_cast<std::size_t>(v) * x.cols];
      for (int u : g_->neighbors(v)) {
        const double* xu = &x.a[static_cast<std::size_t>(u) * x.cols];
        for (int j = 0; j < x.cols; ++j) ov[j] += xu[j];
      }
    }
    return out;
  }

  Matrix apply_transpose(const Matrix& x) const override { return apply(x); }
  int dim() const override { return g_->num_vertices(); }

 private:
  const Graph* g_;
};

/// Lazy random walk operator P = (I + A D^-1) / 2.
///
/// Column-stochastic: every column sums to one and P[v][v] = 1/2. Powers are
/// never materialized; P^k x is k successive applications. An isolated
/// vertex keeps its mass (its column is the unit vector).
class DiffusionOperator final : public SparseMap {
 public:
  explicit DiffusionOperator(const Graph& g) : g_(&g) {
    inv_deg_.resize(g.num_vertices());
    for (int v = 0; v < g.num_vertices(); ++v)
      inv_deg_[v] = g.degree(v) > 0 ? 1.0 / g.degree(v) : 0.0;
  }

  const Graph& graph() const { return *g_; }

  // (P x)_v = x_v / 2 + sum_{u ~ v} x_u / (2 d_u), isolated vertices pass through.
  Matrix apply(const Matrix& x) const override {
    check(x, "apply_diffusion");
    Matrix out(x.rows, x.cols);
    for (int v = 0; v < g_->num_vertices(); ++v) {
      const double self = g_->degree(v) > 0 ? 0.5 : 1.0;
      double* ov = &out.a[static_cast<std::size_t>(v) * x.cols];
      const double* xv = &x.a[static_cast<std::size_t>(v) * x.cols];
      for (int j = 0; j < x.cols; ++j) ov[j] = self * xv[j];
      for (int u : g_->neighbors(v)) {
        const double w = 0.5 * inv_deg_[u];
        const double* xu = &x.a[static_cast<std::size_t>(u) * x.cols];
        for (int j = 0; j < x.cols; ++j) ov[j] += w * xu[j];
      }
    }
    return out;
  }

  // (P^T x)_v = x_v / 2 + (1 / 2 d_v) sum_{u ~ v} x_u
  Matrix apply_transpose(const Matrix& x) const override {
    check(x, "apply_diffusion_transpose");
    Matrix out(x.rows, x.cols);
    for (int v = 0; v < g_->num_vertices(); ++v) {
      const double self = g_->degree(v) > 0 ? 0.5 : 1.0;
      const double w = 0.5 * inv_deg_[v];
      double* ov = &out.a[static_cast<std::size_t>(v) * x.cols];
      const double* xv = &x.a[static_cast<std::size_t>(v) * x.cols];
      for (int j = 0; j < x.cols; ++j) ov[j] = self * xv[j];
      for (int u : g_->neighbors(v)) {
        const double* xu = &x.a[static_cast<std::size_t>(u) * x.cols];
        for (int j = 0; j < x.cols; ++j) ov[j] += w * xu[j];
      }
    }
    return out;
  }

  Matrix apply_power(Matrix x, int k) const {
    if (k < 1) throw param_error("apply_diffusion: power must be >= 1");
    for (int i = 0; i < k; ++i) x = apply(x);
    return x;
  }

  int dim() const override { return g_->num_vertices(); }

 private:
  const Graph* g_;
  std::vector<double> inv_deg_;
};

/// Complement-adjacency product computed without materializing the
/// complement: within each batch segment, (A_bar x)_v = colsum(x) - x_v - (A x)_v.
class ComplementMap final : public SparseMap {
 public:
  explicit ComplementMap(const Graph& g) : g_(&g), adj_(g) {}

  Matrix apply(const Matrix& x) const override {
    check(x, "complement_adjacency_apply");
    Matrix out = adj_.apply(x);
    const auto& off = g_->segment_offsets();
    std::vector<double> colsum(x.cols);
    for (int s = 0; s + 1 < static_cast<int>(off.size()); ++s) {
      std::fill(colsum.begin(), colsum.end(), 0.0);
      for (int v = off[s]; v < off[s + 1]; ++v)
        for (int j = 0; j < x.cols; ++j) colsum[j] += x(v, j);
      for (int v = off[s]; v < off[s + 1]; ++v)
        for (int j = 0; j < x.cols; ++j) out(v, j) = colsum[j] - x(v, j) - out(v, j);
    }
    return out;
  }

  Matrix apply_transpose(const Matrix& x) const override { return apply(x); }
  int dim() const override { return g_->num_vertices(); }

 private:
  const Graph* g_;
  AdjacencyMap adj_;
};

inline Matrix apply_diffusion(const DiffusionOperator& op, const Matrix& x, int k) {
  return op.apply_power(x, k);
}

inline Matrix complement_adjacency_apply(const Graph& g, const Matrix& x) {
  return ComplementMap(g).apply(x);
}

}  // namespace gcopt
