#pragma once

#include <algorithm>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gcopt/errors.hpp"
#include "gcopt/matrix.hpp"

namespace gcopt {

/// Immutable simple undirected graph in compressed sparse row form.
///
/// The adjacency is stored symmetrically (each edge appears twice), sorted
/// within each row, with no self-loops. A Graph may also represent a
/// block-diagonal batch of graphs; `offsets` marks the vertex ranges of the
/// members and per-member quantities (complement products, size
/// normalization) respect those boundaries.
class Graph {
 public:
  Graph() = default;

  /// Builds from an undirected edge list. Rejects self-loops, duplicate
  /// edges and out-of-range endpoints.
  static Graph from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
    if (n <= 0) throw param_error("graph: vertex count must be positive");
    std::vector<std::vector<int>> adj(n);
    for (auto [u, v] : edges) {
      if (u < 0 || v < 0 || u >= n || v >= n)
        throw param_error("graph: edge endpoint out of range");
      if (u == v) throw param_error("graph: self-loops are not allowed");
      adj[u].push_back(v);
      adj[v].push_back(u);
    }
    Graph g;
    g.n_ = n;
    g.row_ptr_.assign(n + 1, 0);
    for (int v = 0; v < n; ++v) {
      std::sort(adj[v].begin(), adj[v].end());
      if (std::adjacent_find(adj[v].begin(), adj[v].end()) != adj[v].end())
        throw param_error("graph: duplicate edge at vertex " + std::to_string(v));
      g.row_ptr_[v + 1] = g.row_ptr_[v] + static_cast<int>(adj[v].size());
    }
    g.col_idx_.reserve(g.row_ptr_[n]);
    for (int v = 0; v < n; ++v)
      g.col_idx_.insert(g.col_idx_.end(), adj[v].begin(), adj[v].end());
    g.offsets_ = {0, n};
    return g;
  }

  int num_vertices() const { return n_; }
  long long num_edges() const { return static_cast<long long>(col_idx_.size()) / 2; }

  int degree(int v) const { return row_ptr_[v + 1] - row_ptr_[v]; }

  std::span<const int> neighbors(int v) const {
    return {col_idx_.data() + row_ptr_[v], col_idx_.data() + row_ptr_[v + 1]};
  }

  bool has_edge(int u, int v) const {
    auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }

  /// All edges as (u, v) with u < v.
  std::vector<std::pair<int, int>> edge_list() const {
    std::vector<std::pair<int, int>> out;
    out.reserve(col_idx_.size() / 2);
    for (int u = 0; u < n_; ++u)
      for (int v : neighbors(u))
        if (u < v) out.emplace_back(u, v);
    return out;
  }

  bool connected() const {
    if (n_ == 0) return false;
    std::vector<char> seen(n_, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int count = 1;
    while (!q.empty()) {
      int v = q.front();
      q.pop();
      for (int u : neighbors(v))
        if (!seen[u]) {
          seen[u] = 1;
          ++count;
          q.push(u);
        }
    }
    return count == n_;
  }

  // --- batch support -------------------------------------------------------

  int num_segments() const { return static_cast<int>(offsets_.size()) - 1; }
  const std::vector<int>& segment_offsets() const { return offsets_; }
  int segment_of(int v) const {
    auto it = std::upper_bound(offsets_.begin(), offsets_.end(), v);
    return static_cast<int>(it - offsets_.begin()) - 1;
  }

  /// Disjoint union with vertex ranges recorded as segments.
  static Graph block_diagonal(const std::vector<const Graph*>& parts) {
    if (parts.empty()) throw param_error("block_diagonal: empty batch");
    Graph g;
    g.offsets_ = {0};
    for (const Graph* p : parts) {
      for (int s = 0; s < p->num_segments(); ++s)
        g.offsets_.push_back(g.offsets_.back() + p->offsets_[s + 1] - p->offsets_[s]);
    }
    g.n_ = g.offsets_.back();
    g.row_ptr_.assign(g.n_ + 1, 0);
    g.col_idx_.reserve([&] {
      std::size_t m = 0;
      for (const Graph* p : parts) m += p->col_idx_.size();
      return m;
    }());
    int base = 0;
    for (const Graph* p : parts) {
      for (int v = 0; v < p->n_; ++v) {
        g.row_ptr_[base + v + 1] = g.row_ptr_[base + v] + p->degree(v);
        for (int u : p->neighbors(v)) g.col_idx_.push_back(base + u);
      }
      base += p->n_;
    }
    return g;
  }

  /// Relabels vertices: vertex v of this graph becomes perm[v].
  Graph permuted(const std::vector<int>& perm) const {
    std::vector<std::pair<int, int>> edges;
    edges.reserve(col_idx_.size() / 2);
    for (auto [u, v] : edge_list()) edges.emplace_back(perm[u], perm[v]);
    return from_edges(n_, edges);
  }

  /// Per-vertex triangle count via sorted-adjacency intersection.
  std::vector<long long> triangle_counts() const {
    std::vector<long long> tri(n_, 0);
    for (int u = 0; u < n_; ++u) {
      for (int v : neighbors(u)) {
        if (v <= u) continue;
        // common neighbors w > v keep each triangle counted once per corner
        auto nu = neighbors(u), nv = neighbors(v);
        auto iu = nu.begin(), iv = nv.begin();
        while (iu != nu.end() && iv != nv.end()) {
          if (*iu < *iv) {
            ++iu;
          } else if (*iv < *iu) {
            ++iv;
          } else {
            if (*iu > v) {
              ++tri[u];
              ++tri[v];
              ++tri[*iu];
            }
            ++iu;
            ++iv;
          }
        }
      }
    }
    return tri;
  }

  /// BFS eccentricity of every vertex (within its connected component).
  std::vector<int> eccentricities() const {
    std::vector<int> ecc(n_, 0), dist(n_);
    for (int s = 0; s < n_; ++s) {
      std::fill(dist.begin(), dist.end(), -1);
      std::queue<int> q;
      q.push(s);
      dist[s] = 0;
      int far = 0;
      while (!q.empty()) {
        int v = q.front();
        q.pop();
        far = std::max(far, dist[v]);
        for (int u : neighbors(v))
          if (dist[u] < 0) {
            dist[u] = dist[v] + 1;
            q.push(u);
          }
      }
      ecc[s] = far;
    }
    return ecc;
  }

 private:
  int n_ = 0;
  std::vector<int> row_ptr_;
  std::vector<int> col_idx_;
  std::vector<int> offsets_;
};

/// Node feature matrix with ordered column labels.
struct FeatureMatrix {
  Matrix values;
  std::vector<std::string> names;
};

/// Structural node statistics. Allowed names: degree, eccentricity,
/// clustering, triangles. Clustering coefficient is 2*tri/(d*(d-1)), zero
/// for vertices of degree < 2.
inline FeatureMatrix extract_features(const Graph& g, const std::vector<std::string>& spec) {
  const int n = g.num_vertices();
  FeatureMatrix fm;
  fm.names = spec;
  fm.values = Matrix(n, static_cast<int>(spec.size()));
  std::vector<long long> tri;
  std::vector<int> ecc;
  for (int j = 0; j < static_cast<int>(spec.size()); ++j) {
    const std::string& name = spec[j];
    if (name == "degree") {
      for (int v = 0; v < n; ++v) fm.values(v, j) = g.degree(v);
    } else if (name == "eccentricity") {
      if (ecc.empty()) ecc = g.eccentricities();
      for (int v = 0; v < n; ++v) fm.values(v, j) = ecc[v];
    } else if (name == "triangles") {
      if (tri.empty()) tri = g.triangle_counts();
      for (int v = 0; v < n; ++v) fm.values(v, j) = static_cast<double>(tri[v]);
    } else if (name == "clustering") {
      if (tri.empty()) tri = g.triangle_counts();
      for (int v = 0; v < n; ++v) {
        const double d = g.degree(v);
        fm.values(v, j) = d < 2 ? 0.0 : 2.0 * static_cast<double>(tri[v]) / (d * (d - 1.0));
      }
    } else {
      throw param_error("extract_features: unknown feature '" + name + "'");
    }
  }
  return fm;
}

}  // namespace gcopt
