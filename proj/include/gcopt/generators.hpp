#pragma once

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "gcopt/graph.hpp"
#include "gcopt/rng.hpp"

namespace gcopt {

namespace detail {

inline Graph ba_attempt(int n, int m, Rng& rng) {
  // Preferential attachment from m isolated seed vertices: every newcomer
  // picks m distinct targets weighted by current degree (uniform while no
  // edges exist). Emits exactly m*(n-m) edges.
  std::vector<std::pair<int, int>> edges;
  edges.reserve(static_cast<std::size_t>(m) * (n - m));
  std::vector<int> repeated;  // one entry per edge endpoint, degree-weighted pool
  std::vector<int> targets(m);
  for (int i = 0; i < m; ++i) targets[i] = i;
  for (int source = m; source < n; ++source) {
    for (int t : targets) {
      edges.emplace_back(t, source);
      repeated.push_back(t);
      repeated.push_back(source);
    }
    if (source + 1 == n) break;
    std::set<int> next;
    while (static_cast<int>(next.size()) < m)
      next.insert(repeated[rng.next() % repeated.size()]);
    targets.assign(next.begin(), next.end());
  }
  return Graph::from_edges(n, edges);
}

}  // namespace detail

/// Barabási–Albert preferential-attachment graph, deterministic per seed.
///
/// Regenerates with a derived sub-seed until the result is connected and the
/// minimum degree reaches min(m, n-1). Connectivity always holds by
/// construction; the degree floor can fail when early seed vertices stay
/// unpopular, and is unattainable at degenerate sizes (n <= m+1), where the
/// last attempt is returned as-is with attachments clamped to the available
/// targets.
inline Graph generate_ba(int n, int m, std::uint64_t seed) {
  if (m < 1 || m >= n) throw param_error("generate_ba: need 1 <= m < n");
  const int want_min_degree = std::min(m, n - 1);
  Graph g;
  for (int attempt = 0; attempt < 200; ++attempt) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(attempt));
    g = detail::ba_attempt(n, m, rng);
    if (!g.connected()) continue;
    int dmin = n;
    for (int v = 0; v < n; ++v) dmin = std::min(dmin, g.degree(v));
    if (dmin >= want_min_degree) return g;
  }
  return g;
}

/// Forced-satisfiable RB-style instance for the maximum-clique task.
struct RbParams {
  int num_blocks = 8;    // planted clique size in the returned complement
  int block_size = 6;    // vertices per block
  double tightness = 0.25;  // fraction of cross-block pairs kept as constraints
};

namespace detail {

inline Graph rb_attempt(const RbParams& params, Rng& rng) {
  const int k = params.num_blocks, s = params.block_size;
  const int n = k * s;
  // Constraint-side graph: blocks are cliques, plus `tightness` of the cross
  // pairs chosen at random. One planted vertex per block is kept mutually
  // unconstrained so the complement contains a clique across all blocks.
  std::vector<int> planted(k);
  for (int b = 0; b < k; ++b) planted[b] = b * s + rng.uniform_int(0, s - 1);
  std::vector<std::pair<int, int>> edges;
  for (int b = 0; b < k; ++b)
    for (int i = b * s; i < (b + 1) * s; ++i)
      for (int j = i + 1; j < (b + 1) * s; ++j) edges.emplace_back(i, j);
  const int cross_per_pair =
      static_cast<int>(params.tightness * static_cast<double>(s) * static_cast<double>(s));
  for (int b1 = 0; b1 < k; ++b1)
    for (int b2 = b1 + 1; b2 < k; ++b2) {
      std::set<std::pair<int, int>> chosen;
      int guard = 0;
      while (static_cast<int>(chosen.size()) < cross_per_pair && guard++ < 100 * s * s) {
        int u = b1 * s + rng.uniform_int(0, s - 1);
        int v = b2 * s + rng.uniform_int(0, s - 1);
        if (u == planted[b1] && v == planted[b2]) continue;
        chosen.insert({u, v});
      }
      for (auto& e : chosen) edges.push_back(e);
    }
  // Return the complement: intra-block pairs vanish, unconstrained cross pairs
  // become edges.
  Graph constraint = Graph::from_edges(n, edges);
  std::vector<std::pair<int, int>> comp_edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (!constraint.has_edge(u, v)) comp_edges.emplace_back(u, v);
  return Graph::from_edges(n, comp_edges);
}

}  // namespace detail

/// RB-model graph (complement form) with a planted clique of size
/// `num_blocks`. Deterministic per seed; regenerates on disconnection.
inline Graph generate_rb(const RbParams& params, std::uint64_t seed) {
  if (params.num_blocks < 1 || params.block_size < 1)
    throw param_error("generate_rb: blocks and block size must be positive");
  if (params.tightness < 0.0 || params.tightness >= 1.0)
    throw param_error("generate_rb: tightness must lie in [0, 1)");
  if (params.num_blocks * params.block_size < 2)
    throw param_error("generate_rb: instance needs at least two vertices");
  Graph g;
  for (int attempt = 0; attempt < 200; ++attempt) {
    Rng rng = Rng::derive(seed, 0x5b00000000ULL + static_cast<std::uint64_t>(attempt));
    g = detail::rb_attempt(params, rng);
    if (g.connected()) return g;
  }
  return g;
}

}  // namespace gcopt
