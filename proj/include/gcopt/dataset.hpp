#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcopt/graph.hpp"

namespace gcopt {

/// Writes one graph as an edge list: header "n m", then one "u v" line per
/// edge, 0-indexed, u < v.
inline void write_edgelist(const Graph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << g.num_vertices() << ' ' << g.num_edges() << '\n';
  for (auto [u, v] : g.edge_list()) out << u << ' ' << v << '\n';
}

/// Reads an edge-list file and validates the header, index bounds, edge
/// orientation (u < v) and connectivity.
inline Graph read_edgelist(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  int n = 0;
  long long m = 0;
  if (!(in >> n >> m)) throw param_error("edge list " + path.string() + ": bad header");
  std::vector<std::pair<int, int>> edges;
  edges.reserve(static_cast<std::size_t>(m));
  int u, v;
  while (in >> u >> v) {
    if (u >= v) throw param_error("edge list " + path.string() + ": edges must satisfy u < v");
    edges.emplace_back(u, v);
  }
  if (static_cast<long long>(edges.size()) != m)
    throw param_error("edge list " + path.string() + ": header promises " + std::to_string(m) +
                      " edges, found " + std::to_string(edges.size()));
  Graph g = Graph::from_edges(n, edges);
  if (!g.connected())
    throw param_error("edge list " + path.string() + ": graph is not connected");
  return g;
}

struct SplitSizes {
  int train = 0;
  int val = 0;
  int test = 0;
  int total() const { return train + val + test; }
};

/// Dataset manifest: generator provenance plus the split layout. Stored as
/// manifest.json next to the per-graph edge-list files.
struct Manifest {
  std::string name;
  std::string generator;
  nlohmann::json params;
  std::uint64_t seed = 0;
  SplitSizes splits;
  std::vector<std::string> files;

  nlohmann::json to_json() const {
    return {{"name", name},
            {"generator", generator},
            {"params", params},
            {"seed", seed},
            {"splits", {{"train", splits.train}, {"val", splits.val}, {"test", splits.test}}},
            {"files", files}};
  }

  static Manifest from_json(const nlohmann::json& j) {
    Manifest m;
    m.name = j.at("name").get<std::string>();
    m.generator = j.at("generator").get<std::string>();
    m.params = j.at("params");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.splits.train = j.at("splits").at("train").get<int>();
    m.splits.val = j.at("splits").at("val").get<int>();
    m.splits.test = j.at("splits").at("test").get<int>();
    m.files = j.at("files").get<std::vector<std::string>>();
    return m;
  }
};

/// An on-disk dataset loaded into memory. Graph order follows the manifest
/// file list; splits are contiguous ranges train | val | test.
struct Dataset {
  Manifest manifest;
  std::vector<Graph> graphs;

  std::vector<const Graph*> split(const std::string& which) const {
    int begin = 0, end = 0;
    if (which == "train") {
      begin = 0;
      end = manifest.splits.train;
    } else if (which == "val") {
      begin = manifest.splits.train;
      end = begin + manifest.splits.val;
    } else if (which == "test") {
      begin = manifest.splits.train + manifest.splits.val;
      end = begin + manifest.splits.test;
    } else if (which == "all") {
      end = static_cast<int>(graphs.size());
    } else {
      throw param_error("unknown split '" + which + "'");
    }
    std::vector<const Graph*> out;
    for (int i = begin; i < end && i < static_cast<int>(graphs.size()); ++i)
      out.push_back(&graphs[i]);
    return out;
  }

  static Dataset load(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("no manifest.json in " + dir.string());
    nlohmann::json j;
    in >> j;
    Dataset ds;
    ds.manifest = Manifest::from_json(j);
    ds.graphs.reserve(ds.manifest.files.size());
    for (const auto& f : ds.manifest.files) ds.graphs.push_back(read_edgelist(dir / f));
    return ds;
  }

  static void save(const Manifest& manifest, const std::vector<Graph>& graphs,
                   const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "graphs");
    Manifest m = manifest;
    m.files.clear();
    for (std::size_t i = 0; i < graphs.size(); ++i) {
      std::ostringstream name;
      name << "graphs/g" << std::setw(4) << std::setfill('0') << i << ".txt";
      m.files.push_back(name.str());
      write_edgelist(graphs[i], dir / m.files.back());
    }
    std::ofstream out(dir / "manifest.json");
    out << m.to_json().dump(2) << '\n';
  }
};

}  // namespace gcopt
