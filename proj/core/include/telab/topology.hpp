#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace telab {

struct Edge {
  int src = 0;
  int dst = 0;
  double capacity = 0.0;
};

// Capacitated network graph. Every edge owns one capacity constraint; in
// undirected mode the constraint is shared by both traversal directions
// (traffic A->B and B->A compete for the same capacity).
class Graph {
 public:
  Graph(int node_count, std::vector<Edge> edges, bool directed);

  int node_count() const { return node_count_; }
  bool directed() const { return directed_; }
  const std::vector<Edge>& edges() const { return edges_; }

  // One constraint per declared edge, in declaration order.
  int constraint_count() const { return static_cast<int>(edges_.size()); }
  double constraint_capacity(int c) const { return edges_[c].capacity; }

  // Constraint index for traversing src -> dst, if such a hop exists.
  std::optional<int> constraint_between(int src, int dst) const;

  // Outgoing (neighbor, constraint index) pairs, ascending by neighbor id.
  const std::vector<std::pair<int, int>>& neighbors(int node) const {
    return adjacency_[node];
  }

 private:
  int node_count_;
  bool directed_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::pair<int, int>>> adjacency_;
};

// Topology file format:
//   {"directed": bool, "num_nodes": int,
//    "edges": [{"src": int, "dst": int, "capacity": float}, ...]}
Graph load_topology(const std::string& path);

// Simple path; `edges` holds the constraint index of each hop and
// `capacity` is the minimum capacity along the path.
struct Path {
  std::vector<int> nodes;
  std::vector<int> edges;
  double capacity = 0.0;
};

struct SdPair {
  int src = 0;
  int dst = 0;
  friend bool operator==(const SdPair&, const SdPair&) = default;
};

// Candidate paths for every reachable ordered SD pair. SD pairs are ordered
// row-major (src ascending, then dst); global path indices concatenate the
// per-SD groups in that order.
class PathSets {
 public:
  PathSets(int node_count, std::vector<SdPair> sd_pairs,
           std::vector<std::vector<Path>> paths_by_sd,
           std::vector<SdPair> unreachable);

  int node_count() const { return node_count_; }
  const std::vector<SdPair>& sd_pairs() const { return sd_pairs_; }
  const std::vector<SdPair>& unreachable() const { return unreachable_; }

  std::size_t sd_count() const { return sd_pairs_.size(); }
  std::size_t total_paths() const { return paths_.size(); }

  std::span<const Path> group(std::size_t sd) const {
    return {paths_.data() + group_offsets_[sd],
            group_offsets_[sd + 1] - group_offsets_[sd]};
  }
  std::size_t group_offset(std::size_t sd) const { return group_offsets_[sd]; }
  std::size_t group_size(std::size_t sd) const {
    return group_offsets_[sd + 1] - group_offsets_[sd];
  }

  const Path& path(std::size_t global_index) const {
    return paths_[global_index];
  }
  // SD group owning a global path index.
  std::size_t sd_of_path(std::size_t global_index) const;

  // Group index for an ordered pair; empty if the pair is unreachable.
  std::optional<std::size_t> sd_index(int src, int dst) const;

 private:
  int node_count_;
  std::vector<SdPair> sd_pairs_;
  std::vector<SdPair> unreachable_;
  std::vector<Path> paths_;
  std::vector<std::size_t> group_offsets_;  // sd_count + 1 entries
  std::vector<int> sd_lookup_;              // node*node -> group index or -1
};

// Up to k simple paths from src to dst ordered by (hop count, lexicographic
// node sequence). Throws DataError if dst is unreachable from src.
std::vector<Path> yen_k_shortest(const Graph& g, int src, int dst, int k);

// Yen for every ordered SD pair; unreachable pairs are recorded, not fatal.
PathSets build_path_sets(const Graph& g, int k);

// Sparse encoding of the SD-to-path and path-to-constraint 0/1 matrices.
// Each path serves exactly one SD pair (path_sd), and traverses the
// constraints listed in its CSR row. In undirected mode both traversal
// directions of an edge map to the same constraint column.
struct Incidence {
  int node_count = 0;
  std::vector<SdPair> sd_pairs;          // row order of the SD dimension
  std::vector<int> path_sd;              // per path: owning SD row
  std::vector<std::size_t> path_constraint_offsets;  // CSR, paths + 1
  std::vector<int> path_constraint_indices;
  std::vector<double> capacities;        // per constraint column

  std::size_t sd_count() const { return sd_pairs.size(); }
  std::size_t path_count() const { return path_sd.size(); }
  std::size_t constraint_count() const { return capacities.size(); }
  std::span<const int> constraints_of_path(std::size_t p) const {
    return {path_constraint_indices.data() + path_constraint_offsets[p],
            path_constraint_offsets[p + 1] - path_constraint_offsets[p]};
  }
};

Incidence build_incidence(const Graph& g, const PathSets& ps);

// Path-set export used by the `paths` CLI subcommand.
void save_path_sets(const PathSets& ps, int k, const std::string& path);

}  // namespace telab
