#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "telab/errors.hpp"
#include "telab/topology.hpp"
#include "test_util.hpp"

using namespace telab;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = "/tmp/" + name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("load_topology parses the triangle file") {
  const auto path = write_temp("tri.json", R"({
    "directed": false, "num_nodes": 3,
    "edges": [{"src":0,"dst":1,"capacity":2},
              {"src":0,"dst":2,"capacity":2},
              {"src":1,"dst":2,"capacity":2}]})");
  const Graph g = load_topology(path);
  CHECK(g.node_count() == 3);
  CHECK(g.constraint_count() == 3);
  CHECK_FALSE(g.directed());
  // Both traversal directions share one constraint in undirected mode.
  CHECK(g.constraint_between(0, 1) == g.constraint_between(1, 0));
}

TEST_CASE("load_topology rejects bad inputs") {
  CHECK_THROWS_AS(
      load_topology(write_temp("zero_cap.json",
                               R"({"directed":false,"num_nodes":2,
          "edges":[{"src":0,"dst":1,"capacity":0}]})")),
      DataError);
  CHECK_THROWS_AS(
      load_topology(write_temp("selfloop.json",
                               R"({"directed":true,"num_nodes":2,
          "edges":[{"src":1,"dst":1,"capacity":1}]})")),
      DataError);
  CHECK_THROWS_AS(
      load_topology(write_temp("dup.json",
                               R"({"directed":false,"num_nodes":2,
          "edges":[{"src":0,"dst":1,"capacity":1},
                   {"src":1,"dst":0,"capacity":2}]})")),
      DataError);
  CHECK_THROWS_AS(
      load_topology(write_temp("garbage.json", "{ not json")), DataError);
  CHECK_THROWS_AS(load_topology("/nonexistent/nope.json"), DataError);
}

TEST_CASE("directed edges are distinct constraints") {
  const auto path = write_temp("directed2.json", R"({
    "directed": true, "num_nodes": 2,
    "edges": [{"src":0,"dst":1,"capacity":10},
              {"src":1,"dst":0,"capacity":5}]})");
  const Graph g = load_topology(path);
  CHECK(g.constraint_count() == 2);
  CHECK(g.constraint_between(0, 1) != g.constraint_between(1, 0));
}

TEST_CASE("yen on the triangle") {
  const Graph g = testutil::triangle_graph();
  const auto paths = yen_k_shortest(g, 0, 1, 3);
  REQUIRE(paths.size() == 2);
  CHECK(paths[0].nodes == std::vector<int>{0, 1});
  CHECK(paths[1].nodes == std::vector<int>{0, 2, 1});
  CHECK(paths[0].capacity == 2.0);
  CHECK(paths[1].capacity == 2.0);

  const auto one = yen_k_shortest(g, 0, 1, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].nodes == std::vector<int>{0, 1});
}

TEST_CASE("yen errors") {
  const Graph g(3, {{0, 1, 1.0}}, true);
  CHECK_THROWS_AS(yen_k_shortest(g, 1, 0, 2), DataError);  // unreachable
  CHECK_THROWS_AS(yen_k_shortest(g, 0, 0, 1), DataError);
  CHECK_THROWS_AS(yen_k_shortest(g, 0, 1, 0), DataError);
}

TEST_CASE("yen matches exhaustive enumeration on random graphs") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Graph g = testutil::random_graph(8, 6, seed);
    for (int s = 0; s < 8; ++s) {
      for (int d = 0; d < 8; ++d) {
        if (s == d) {
          continue;
        }
        const auto expected = testutil::all_simple_paths(g, s, d);
        for (int k : {1, 3, 5}) {
          const auto got = yen_k_shortest(g, s, d, k);
          const std::size_t want = std::min<std::size_t>(k, expected.size());
          REQUIRE(got.size() == want);
          for (std::size_t i = 0; i < want; ++i) {
            CHECK(got[i].nodes == expected[i]);
          }
        }
      }
    }
  }
}

TEST_CASE("yen output has no duplicates and nondecreasing hops") {
  const Graph g = testutil::random_graph(9, 8, 42);
  const auto paths = yen_k_shortest(g, 0, 4, 10);
  std::set<std::vector<int>> seen;
  std::size_t prev_hops = 0;
  for (const auto& p : paths) {
    CHECK(seen.insert(p.nodes).second);
    CHECK(p.nodes.size() >= prev_hops);
    prev_hops = p.nodes.size();
    // Stored capacity equals the recomputed min edge capacity.
    double cap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < p.nodes.size(); ++i) {
      cap = std::min(cap,
                     g.constraint_capacity(
                         *g.constraint_between(p.nodes[i], p.nodes[i + 1])));
    }
    CHECK(p.capacity == cap);
  }
}

TEST_CASE("build_path_sets on the triangle") {
  const Graph g = testutil::triangle_graph();
  const PathSets ps = build_path_sets(g, 3);
  CHECK(ps.sd_count() == 6);
  CHECK(ps.total_paths() == 12);
  CHECK(ps.unreachable().empty());
  for (std::size_t sd = 0; sd < 6; ++sd) {
    CHECK(ps.group_size(sd) == 2);
  }
  CHECK(ps.sd_pairs()[0] == SdPair{0, 1});
  CHECK(ps.sd_pairs()[3] == SdPair{1, 2});
  CHECK(ps.path(6).nodes == std::vector<int>{1, 2});
  CHECK(ps.path(7).nodes == std::vector<int>{1, 0, 2});
}

TEST_CASE("build_path_sets records unreachable pairs") {
  const Graph g(2, {{0, 1, 1.0}}, true);
  const PathSets ps = build_path_sets(g, 2);
  CHECK(ps.sd_count() == 1);
  REQUIRE(ps.unreachable().size() == 1);
  CHECK(ps.unreachable()[0] == SdPair{1, 0});
  CHECK_FALSE(ps.sd_index(1, 0).has_value());
  CHECK(ps.sd_index(0, 1).has_value());
}

TEST_CASE("ring path sets: both orientations with k=2") {
  std::vector<Edge> edges;
  for (int i = 0; i < 5; ++i) {
    edges.push_back({i, (i + 1) % 5, 1.0});
  }
  const Graph g(5, edges, false);
  const PathSets ps = build_path_sets(g, 2);
  CHECK(ps.sd_count() == 20);
  for (std::size_t sd = 0; sd < ps.sd_count(); ++sd) {
    REQUIRE(ps.group_size(sd) == 2);
    const auto group = ps.group(sd);
    // Clockwise plus counterclockwise hop counts cover the ring.
    CHECK(group[0].nodes.size() - 1 + group[1].nodes.size() - 1 == 5);
  }
}

TEST_CASE("incidence matches the triangle structure") {
  const Graph g = testutil::triangle_graph();
  const PathSets ps = build_path_sets(g, 3);
  const Incidence inc = build_incidence(g, ps);
  CHECK(inc.sd_count() == 6);
  CHECK(inc.path_count() == 12);
  CHECK(inc.constraint_count() == 3);
  // Path A-C-B (global index 1) traverses constraints AC and CB.
  const auto conns = inc.constraints_of_path(1);
  REQUIRE(conns.size() == 2);
  CHECK(conns[0] == *g.constraint_between(0, 2));
  CHECK(conns[1] == *g.constraint_between(2, 1));
  for (std::size_t p = 0; p < inc.path_count(); ++p) {
    CHECK(inc.path_sd[p] == static_cast<int>(ps.sd_of_path(p)));
  }
}

TEST_CASE("incidence of empty path sets keeps the capacity vector") {
  const Graph g(2, {{0, 1, 7.0}}, true);
  const PathSets ps(2, {}, {}, {{0, 1}, {1, 0}});
  const Incidence inc = build_incidence(g, ps);
  CHECK(inc.path_count() == 0);
  REQUIRE(inc.capacities.size() == 1);
  CHECK(inc.capacities[0] == 7.0);
}

TEST_CASE("incidence row sums equal hop counts on a ring") {
  std::vector<Edge> edges;
  for (int i = 0; i < 5; ++i) {
    edges.push_back({i, (i + 1) % 5, 2.0});
  }
  const Graph g(5, edges, false);
  const PathSets ps = build_path_sets(g, 2);
  const Incidence inc = build_incidence(g, ps);
  for (std::size_t p = 0; p < ps.total_paths(); ++p) {
    CHECK(inc.constraints_of_path(p).size() == ps.path(p).nodes.size() - 1);
    CHECK(inc.constraints_of_path(p).size() == ps.path(p).edges.size());
  }
}

TEST_CASE("path enumeration is deterministic") {
  const Graph g = testutil::random_graph(10, 10, 7);
  const PathSets a = build_path_sets(g, 3);
  const PathSets b = build_path_sets(g, 3);
  REQUIRE(a.total_paths() == b.total_paths());
  for (std::size_t p = 0; p < a.total_paths(); ++p) {
    CHECK(a.path(p).nodes == b.path(p).nodes);
  }
  const Incidence ia = build_incidence(g, a);
  const Incidence ib = build_incidence(g, b);
  CHECK(ia.path_constraint_indices == ib.path_constraint_indices);
  CHECK(ia.path_constraint_offsets == ib.path_constraint_offsets);
  CHECK(ia.capacities == ib.capacities);
}

TEST_CASE("undirected constraints ignore edge declaration orientation") {
  const Graph a(3, {{0, 1, 2.0}, {0, 2, 2.0}, {1, 2, 2.0}}, false);
  const Graph b(3, {{1, 0, 2.0}, {2, 0, 2.0}, {2, 1, 2.0}}, false);
  const PathSets pa = build_path_sets(a, 3);
  const PathSets pb = build_path_sets(b, 3);
  REQUIRE(pa.total_paths() == pb.total_paths());
  for (std::size_t p = 0; p < pa.total_paths(); ++p) {
    CHECK(pa.path(p).nodes == pb.path(p).nodes);
    CHECK(pa.path(p).edges == pb.path(p).edges);
  }
}

TEST_CASE("save_path_sets writes the export file") {
  const Graph g = testutil::triangle_graph();
  const PathSets ps = build_path_sets(g, 3);
  save_path_sets(ps, 3, "/tmp/telab_paths.json");
  std::ifstream in("/tmp/telab_paths.json");
  REQUIRE(in.good());
  std::string all((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  CHECK(all.find("\"sd_pairs\"") != std::string::npos);
  CHECK(all.find("\"unreachable\"") != std::string::npos);
}
