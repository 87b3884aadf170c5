#include "telab/topology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "telab/errors.hpp"

namespace telab {

namespace {

std::string edge_str(const Edge& e) {
  std::ostringstream os;
  os << e.src << "->" << e.dst << " (capacity " << e.capacity << ")";
  return os.str();
}

}  // namespace

Graph::Graph(int node_count, std::vector<Edge> edges, bool directed)
    : node_count_(node_count), directed_(directed), edges_(std::move(edges)) {
  if (node_count_ < 0) {
    throw DataError("node count must be nonnegative");
  }
  std::set<std::pair<int, int>> seen;
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    if (e.src < 0 || e.src >= node_count_ || e.dst < 0 ||
        e.dst >= node_count_) {
      throw DataError("edge " + std::to_string(i) + " " + edge_str(e) +
                      ": node id out of range");
    }
    if (e.src == e.dst) {
      throw DataError("edge " + std::to_string(i) + " " + edge_str(e) +
                      ": self-loop");
    }
    if (!(e.capacity > 0.0) || !std::isfinite(e.capacity)) {
      throw DataError("edge " + std::to_string(i) + " " + edge_str(e) +
                      ": capacity must be positive and finite");
    }
    std::pair<int, int> key{e.src, e.dst};
    if (!directed_ && key.first > key.second) {
      std::swap(key.first, key.second);
    }
    if (!seen.insert(key).second) {
      throw DataError("edge " + std::to_string(i) + " " + edge_str(e) +
                      ": duplicate edge");
    }
  }
  adjacency_.resize(node_count_);
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    adjacency_[e.src].emplace_back(e.dst, static_cast<int>(i));
    if (!directed_) {
      adjacency_[e.dst].emplace_back(e.src, static_cast<int>(i));
    }
  }
  for (auto& nbrs : adjacency_) {
    std::sort(nbrs.begin(), nbrs.end());
  }
}

std::optional<int> Graph::constraint_between(int src, int dst) const {
  const auto& nbrs = adjacency_[src];
  auto it = std::lower_bound(
      nbrs.begin(), nbrs.end(), dst,
      [](const std::pair<int, int>& a, int b) { return a.first < b; });
  if (it != nbrs.end() && it->first == dst) {
    return it->second;
  }
  return std::nullopt;
}

Graph load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open topology file: " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("topology parse error in " + path + ": " + e.what());
  }
  try {
    const bool directed = j.at("directed").get<bool>();
    const int num_nodes = j.at("num_nodes").get<int>();
    std::vector<Edge> edges;
    for (const auto& je : j.at("edges")) {
      Edge e;
      e.src = je.at("src").get<int>();
      e.dst = je.at("dst").get<int>();
      e.capacity = je.at("capacity").get<double>();
      edges.push_back(e);
    }
    return Graph(num_nodes, std::move(edges), directed);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("topology field error in " + path + ": " + e.what());
  }
}

PathSets::PathSets(int node_count, std::vector<SdPair> sd_pairs,
                   std::vector<std::vector<Path>> paths_by_sd,
                   std::vector<SdPair> unreachable)
    : node_count_(node_count),
      sd_pairs_(std::move(sd_pairs)),
      unreachable_(std::move(unreachable)) {
  group_offsets_.reserve(sd_pairs_.size() + 1);
  group_offsets_.push_back(0);
  for (auto& group : paths_by_sd) {
    for (auto& p : group) {
      paths_.push_back(std::move(p));
    }
    group_offsets_.push_back(paths_.size());
  }
  sd_lookup_.assign(static_cast<std::size_t>(node_count_) * node_count_, -1);
  for (std::size_t i = 0; i < sd_pairs_.size(); ++i) {
    sd_lookup_[static_cast<std::size_t>(sd_pairs_[i].src) * node_count_ +
               sd_pairs_[i].dst] = static_cast<int>(i);
  }
}

std::size_t PathSets::sd_of_path(std::size_t global_index) const {
  auto it = std::upper_bound(group_offsets_.begin(), group_offsets_.end(),
                             global_index);
  return static_cast<std::size_t>(it - group_offsets_.begin()) - 1;
}

std::optional<std::size_t> PathSets::sd_index(int src, int dst) const {
  const int v =
      sd_lookup_[static_cast<std::size_t>(src) * node_count_ + dst];
  if (v < 0) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(v);
}

namespace {

// Minimal simple path under (hop count, lexicographic node sequence).
// Dijkstra over that composite order: hop count grows by one per extension
// and appending the same node preserves lexicographic order, so the first
// pop per node is optimal.
struct SearchState {
  std::vector<int> nodes;
  bool operator>(const SearchState& o) const {
    if (nodes.size() != o.nodes.size()) {
      return nodes.size() > o.nodes.size();
    }
    return nodes > o.nodes;
  }
};

std::optional<std::vector<int>> lex_shortest(
    const Graph& g, int src, int dst, const std::vector<char>& banned_node,
    const std::set<std::pair<int, int>>& banned_hop) {
  std::priority_queue<SearchState, std::vector<SearchState>,
                      std::greater<SearchState>>
      queue;
  std::vector<char> done(g.node_count(), 0);
  queue.push({{src}});
  while (!queue.empty()) {
    SearchState state = queue.top();
    queue.pop();
    const int at = state.nodes.back();
    if (done[at]) {
      continue;
    }
    done[at] = 1;
    if (at == dst) {
      return state.nodes;
    }
    for (const auto& [nbr, unused_constraint] : g.neighbors(at)) {
      if (done[nbr] || banned_node[nbr] || banned_hop.count({at, nbr})) {
        continue;
      }
      SearchState next = state;
      next.nodes.push_back(nbr);
      queue.push(std::move(next));
    }
  }
  return std::nullopt;
}

bool path_key_less(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) {
    return a.size() < b.size();
  }
  return a < b;
}

Path make_path(const Graph& g, const std::vector<int>& nodes) {
  Path p;
  p.nodes = nodes;
  p.capacity = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    auto c = g.constraint_between(nodes[i], nodes[i + 1]);
    if (!c) {
      throw DataError("path references a missing edge");
    }
    p.edges.push_back(*c);
    p.capacity = std::min(p.capacity, g.constraint_capacity(*c));
  }
  return p;
}

std::vector<std::vector<int>> yen_node_sequences(const Graph& g, int src,
                                                 int dst, int k) {
  std::vector<std::vector<int>> found;
  std::vector<char> no_ban(g.node_count(), 0);
  auto first = lex_shortest(g, src, dst, no_ban, {});
  if (!first) {
    return found;
  }
  found.push_back(*first);

  auto cmp = [](const std::vector<int>& a, const std::vector<int>& b) {
    return path_key_less(a, b);
  };
  std::set<std::vector<int>, decltype(cmp)> candidates(cmp);

  while (static_cast<int>(found.size()) < k) {
    const std::vector<int>& prev = found.back();
    for (std::size_t j = 0; j + 1 < prev.size(); ++j) {
      const int spur = prev[j];
      std::vector<char> banned_node(g.node_count(), 0);
      for (std::size_t i = 0; i < j; ++i) {
        banned_node[prev[i]] = 1;
      }
      std::set<std::pair<int, int>> banned_hop;
      for (const auto& p : found) {
        if (p.size() > j + 1 &&
            std::equal(p.begin(), p.begin() + j + 1, prev.begin())) {
          banned_hop.insert({p[j], p[j + 1]});
        }
      }
      auto spur_path = lex_shortest(g, spur, dst, banned_node, banned_hop);
      if (!spur_path) {
        continue;
      }
      std::vector<int> total(prev.begin(), prev.begin() + j);
      total.insert(total.end(), spur_path->begin(), spur_path->end());
      if (std::find(found.begin(), found.end(), total) == found.end()) {
        candidates.insert(std::move(total));
      }
    }
    if (candidates.empty()) {
      break;
    }
    found.push_back(*candidates.begin());
    candidates.erase(candidates.begin());
  }
  std::sort(found.begin(), found.end(), path_key_less);
  return found;
}

}  // namespace

std::vector<Path> yen_k_shortest(const Graph& g, int src, int dst, int k) {
  if (src == dst) {
    throw DataError("source equals destination");
  }
  if (k < 1) {
    throw DataError("k must be >= 1");
  }
  auto sequences = yen_node_sequences(g, src, dst, k);
  if (sequences.empty()) {
    throw DataError("no route from " + std::to_string(src) + " to " +
                    std::to_string(dst));
  }
  std::vector<Path> out;
  out.reserve(sequences.size());
  for (const auto& nodes : sequences) {
    out.push_back(make_path(g, nodes));
  }
  return out;
}

PathSets build_path_sets(const Graph& g, int k) {
  if (k < 1) {
    throw DataError("k must be >= 1");
  }
  std::vector<SdPair> pairs;
  std::vector<std::vector<Path>> groups;
  std::vector<SdPair> unreachable;
  for (int s = 0; s < g.node_count(); ++s) {
    for (int d = 0; d < g.node_count(); ++d) {
      if (s == d) {
        continue;
      }
      auto sequences = yen_node_sequences(g, s, d, k);
      if (sequences.empty()) {
        unreachable.push_back({s, d});
        continue;
      }
      std::vector<Path> group;
      group.reserve(sequences.size());
      for (const auto& nodes : sequences) {
        group.push_back(make_path(g, nodes));
      }
      pairs.push_back({s, d});
      groups.push_back(std::move(group));
    }
  }
  return PathSets(g.node_count(), std::move(pairs), std::move(groups),
                  std::move(unreachable));
}

Incidence build_incidence(const Graph& g, const PathSets& ps) {
  Incidence inc;
  inc.node_count = g.node_count();
  inc.sd_pairs = ps.sd_pairs();
  inc.capacities.resize(g.constraint_count());
  for (int c = 0; c < g.constraint_count(); ++c) {
    inc.capacities[c] = g.constraint_capacity(c);
  }
  inc.path_sd.reserve(ps.total_paths());
  inc.path_constraint_offsets.reserve(ps.total_paths() + 1);
  inc.path_constraint_offsets.push_back(0);
  for (std::size_t sd = 0; sd < ps.sd_count(); ++sd) {
    for (const Path& p : ps.group(sd)) {
      inc.path_sd.push_back(static_cast<int>(sd));
      for (int c : p.edges) {
        if (c < 0 || c >= g.constraint_count()) {
          throw DataError("path edge index out of range");
        }
        inc.path_constraint_indices.push_back(c);
      }
      inc.path_constraint_offsets.push_back(
          inc.path_constraint_indices.size());
    }
  }
  return inc;
}

void save_path_sets(const PathSets& ps, int k, const std::string& path) {
  nlohmann::json j;
  j["k"] = k;
  j["num_nodes"] = ps.node_count();
  auto pairs = nlohmann::json::array();
  auto paths = nlohmann::json::array();
  for (std::size_t sd = 0; sd < ps.sd_count(); ++sd) {
    pairs.push_back({ps.sd_pairs()[sd].src, ps.sd_pairs()[sd].dst});
    auto group = nlohmann::json::array();
    for (const Path& p : ps.group(sd)) {
      group.push_back(p.nodes);
    }
    paths.push_back(std::move(group));
  }
  j["sd_pairs"] = std::move(pairs);
  j["paths"] = std::move(paths);
  auto unreachable = nlohmann::json::array();
  for (const SdPair& sd : ps.unreachable()) {
    unreachable.push_back({sd.src, sd.dst});
  }
  j["unreachable"] = std::move(unreachable);
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write path-set file: " + path);
  }
  out << j.dump(2) << "\n";
}

}  // namespace telab
