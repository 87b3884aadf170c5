#include <doctest.h>

#include <cmath>
#include <limits>

#include "telab/errors.hpp"
#include "telab/optimize.hpp"
#include "telab/rng.hpp"
#include "test_util.hpp"

using namespace telab;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Three SD pairs with three equal-capacity paths each; only path capacities
// matter to resolve_bound.
PathSets three_sd_fixture() {
  auto mk = [](double cap) {
    Path p;
    p.nodes = {0, 1};
    p.edges = {0};
    p.capacity = cap;
    return p;
  };
  std::vector<std::vector<Path>> groups(3, {mk(2.0), mk(2.0), mk(2.0)});
  return PathSets(4, {{0, 1}, {0, 2}, {0, 3}}, groups, {});
}

TrafficStats stats_for_pairs(int nodes, const std::vector<SdPair>& pairs,
                             const std::vector<double>& variances) {
  std::vector<double> var(static_cast<std::size_t>(nodes) * (nodes - 1), 0.0);
  std::vector<double> mean(var.size(), 0.0);
  TrafficStats tmp(nodes, 0, 2, mean, var);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    var[tmp.offdiag_index(pairs[i].src, pairs[i].dst)] = variances[i];
  }
  return TrafficStats(nodes, 0, 2, std::move(mean), std::move(var));
}

// Two disjoint two-hop routes between 0 and 1, all capacities `cap`.
struct ParallelFixture {
  Graph g;
  PathSets ps;
  Incidence inc;
  std::size_t sd;  // group index of (0,1)
  explicit ParallelFixture(double cap = 1.0)
      : g(4,
          {{0, 2, cap}, {2, 1, cap}, {0, 3, cap}, {3, 1, cap}},
          true),
        ps(build_path_sets(g, 3)),
        inc(build_incidence(g, ps)),
        sd(*ps.sd_index(0, 1)) {}
};

double brute_force_distance(const std::vector<double>& y,
                            const std::vector<double>& caps, double step) {
  double best = kInf;
  const int ticks = static_cast<int>(std::lround(1.0 / step));
  for (int i = 0; i <= ticks; ++i) {
    for (int j = 0; i + j <= ticks; ++j) {
      const double a = i * step;
      const double b = j * step;
      const double c = 1.0 - a - b;
      if (a > caps[0] || b > caps[1] || c > caps[2] + 1e-12) {
        continue;
      }
      const double d = (a - y[0]) * (a - y[0]) + (b - y[1]) * (b - y[1]) +
                       (c - y[2]) * (c - y[2]);
      best = std::min(best, d);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("resolve_bound: uniform caps") {
  const PathSets ps = three_sd_fixture();
  const SensitivityBound b =
      resolve_bound(BoundSpec::uniform(0.5), nullptr, ps);
  CHECK_FALSE(b.is_unbounded());
  CHECK(b.capacity_scale() == 2.0);
  for (std::size_t sd = 0; sd < 3; ++sd) {
    CHECK(b.cap(sd) == 0.5);
  }
  // Normalized path capacity is 1, so the ratio cap equals the cap.
  for (std::size_t p = 0; p < ps.total_paths(); ++p) {
    CHECK(b.ratio_cap(p) == doctest::Approx(0.5));
  }
}

TEST_CASE("resolve_bound: linear interpolation by variance rank") {
  const PathSets ps = three_sd_fixture();
  const TrafficStats stats =
      stats_for_pairs(4, ps.sd_pairs(), {1.0, 2.0, 3.0});
  const SensitivityBound b = resolve_bound(
      BoundSpec::linear(1.0 / 3.0, 5.0 / 6.0), &stats, ps);
  CHECK(b.cap(0) == doctest::Approx(5.0 / 6.0));
  CHECK(b.cap(1) == doctest::Approx(7.0 / 12.0));
  CHECK(b.cap(2) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("resolve_bound: piecewise split at the breakpoint") {
  auto mk = [](double cap) {
    Path p;
    p.nodes = {0, 1};
    p.edges = {0};
    p.capacity = cap;
    return p;
  };
  std::vector<std::vector<Path>> groups(
      4, {mk(1.0), mk(1.0), mk(1.0)});
  const PathSets ps(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}, groups, {});
  const TrafficStats stats =
      stats_for_pairs(5, ps.sd_pairs(), {1.0, 2.0, 3.0, 4.0});
  const SensitivityBound b = resolve_bound(
      BoundSpec::piecewise(0.5, 2.0 / 3.0, 0.5), &stats, ps);
  CHECK(b.cap(0) == doctest::Approx(2.0 / 3.0));
  CHECK(b.cap(1) == doctest::Approx(2.0 / 3.0));
  CHECK(b.cap(2) == doctest::Approx(0.5));
  CHECK(b.cap(3) == doctest::Approx(0.5));
}

TEST_CASE("resolve_bound: infeasible caps fail construction") {
  const PathSets ps = three_sd_fixture();  // 3 paths, normalized capacity 1
  CHECK_THROWS_AS(resolve_bound(BoundSpec::uniform(0.2), nullptr, ps),
                  ConfigError);
  // 1/3 per path over three paths is exactly feasible.
  CHECK_NOTHROW(resolve_bound(BoundSpec::uniform(1.0 / 3.0), nullptr, ps));
  const TrafficStats stats = stats_for_pairs(4, ps.sd_pairs(), {1, 2, 3});
  CHECK_THROWS_AS(resolve_bound(BoundSpec::linear(0.1, 0.2), &stats, ps),
                  ConfigError);
}

TEST_CASE("resolve_bound: unbounded") {
  const PathSets ps = three_sd_fixture();
  const SensitivityBound b =
      resolve_bound(BoundSpec::unbounded(), nullptr, ps);
  CHECK(b.is_unbounded());
  CHECK(b.cap(0) == kInf);
  CHECK(b.ratio_cap(0) == kInf);
}

TEST_CASE("capped simplex projection: closed-form cases") {
  std::vector<double> caps{kInf, kInf, kInf};
  std::vector<double> r{2.0, 0.0, 0.0};
  project_capped_simplex(r, caps);
  CHECK(r[0] == doctest::Approx(1.0));
  CHECK(r[1] == doctest::Approx(0.0));
  CHECK(r[2] == doctest::Approx(0.0));

  r = {0.6, 0.6, 0.0};
  project_capped_simplex(r, caps);
  CHECK(r[0] == doctest::Approx(0.5));
  CHECK(r[1] == doctest::Approx(0.5));
  CHECK(r[2] == doctest::Approx(0.0));

  std::vector<double> capped{0.3, kInf};
  std::vector<double> y{1.0, 0.0};
  project_capped_simplex(y, capped);
  CHECK(y[0] == doctest::Approx(0.3));
  CHECK(y[1] == doctest::Approx(0.7));
}

TEST_CASE("capped simplex projection matches exhaustive search") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> y{4.0 * rng.uniform() - 2.0,
                          4.0 * rng.uniform() - 2.0,
                          4.0 * rng.uniform() - 2.0};
    std::vector<double> caps(3);
    do {
      for (double& c : caps) {
        c = 0.3 + rng.uniform();
      }
    } while (caps[0] + caps[1] + caps[2] < 1.0);
    std::vector<double> r = y;
    project_capped_simplex(r, caps);
    double sum = 0.0;
    for (int i = 0; i < 3; ++i) {
      CHECK(r[i] >= -1e-12);
      CHECK(r[i] <= caps[i] + 1e-9);
      sum += r[i];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    const double dist = (r[0] - y[0]) * (r[0] - y[0]) +
                        (r[1] - y[1]) * (r[1] - y[1]) +
                        (r[2] - y[2]) * (r[2] - y[2]);
    // The optimum cannot be farther than the best feasible grid point.
    CHECK(dist <= brute_force_distance(y, caps, 0.01) + 1e-12);
  }
}

TEST_CASE("solve_mlu: symmetric parallel paths split evenly") {
  const ParallelFixture f;
  DemandMatrix dm(4);
  dm.set(0, 1, 1.0);
  const SolveResult res =
      solve_mlu(dm, f.ps, f.inc,
                resolve_bound(BoundSpec::unbounded(), nullptr, f.ps),
                SolveOptions{});
  CHECK(res.mlu == doctest::Approx(0.5).epsilon(1e-3));
  const std::size_t lo = f.ps.group_offset(f.sd);
  CHECK(res.config.ratios[lo] == doctest::Approx(0.5).epsilon(5e-3));
  CHECK(res.config.ratios[lo + 1] == doctest::Approx(0.5).epsilon(5e-3));
  CHECK(is_valid_config(res.config, f.ps));
}

TEST_CASE("solve_mlu: triangle normal demand reaches the all-direct optimum") {
  const Graph g = testutil::triangle_graph();
  const PathSets ps = build_path_sets(g, 3);
  const Incidence inc = build_incidence(g, ps);
  const SolveResult res =
      solve_mlu(testutil::triangle_normal(), ps, inc,
                resolve_bound(BoundSpec::unbounded(), nullptr, ps),
                SolveOptions{});
  CHECK(res.mlu == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("solve_mlu: caps force an even split") {
  // One SD pair, two disjoint single-hop paths of capacity 2. With the
  // normalized scale a uniform cap of 1/2 bounds each ratio at exactly 1/2.
  auto mk = [](int edge) {
    Path p;
    p.nodes = {0, 1};
    p.edges = {edge};
    p.capacity = 2.0;
    return p;
  };
  const PathSets ps(2, {{0, 1}}, {{mk(0), mk(1)}}, {});
  Incidence inc;
  inc.node_count = 2;
  inc.sd_pairs = {{0, 1}};
  inc.path_sd = {0, 0};
  inc.path_constraint_offsets = {0, 1, 2};
  inc.path_constraint_indices = {0, 1};
  inc.capacities = {2.0, 2.0};
  DemandMatrix dm(2);
  dm.set(0, 1, 1.0);
  const SolveResult res =
      solve_mlu(dm, ps, inc,
                resolve_bound(BoundSpec::uniform(0.5), nullptr, ps),
                SolveOptions{});
  CHECK(res.config.ratios[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(res.config.ratios[1] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("solve_mlu: zero demand returns a valid config with MLU 0") {
  const ParallelFixture f;
  const SolveResult res =
      solve_mlu(DemandMatrix(4), f.ps, f.inc,
                resolve_bound(BoundSpec::unbounded(), nullptr, f.ps),
                SolveOptions{});
  CHECK(res.mlu == 0.0);
  CHECK(res.converged);
  CHECK(is_valid_config(res.config, f.ps));
}

TEST_CASE("solve_mlu matches brute-force grid search on random instances") {
  int instances = 0;
  for (std::uint64_t seed = 1; instances < 5 && seed < 40; ++seed) {
    const Graph g = testutil::random_graph(4, 3, seed);
    const PathSets ps = build_path_sets(g, 2);
    bool two_each = true;
    for (std::size_t sd = 0; sd < ps.sd_count(); ++sd) {
      two_each = two_each && ps.group_size(sd) == 2;
    }
    if (!two_each) {
      continue;
    }
    ++instances;
    const Incidence inc = build_incidence(g, ps);
    Rng rng(seed * 1000);
    DemandMatrix dm(4);
    for (int active = 0; active < 3; ++active) {
      const SdPair pair = ps.sd_pairs()[rng.below(ps.sd_count())];
      dm.set(pair.src, pair.dst, 0.5 + 2.5 * rng.uniform());
    }
    const SensitivityBound unbounded =
        resolve_bound(BoundSpec::unbounded(), nullptr, ps);
    const SolveResult res =
        solve_mlu(dm, ps, inc, unbounded, SolveOptions{});
    const double oracle = testutil::grid_min_mlu(dm, ps, inc, nullptr, 0.01);
    CHECK(res.mlu == doctest::Approx(oracle).epsilon(0.01));
  }
  CHECK(instances == 5);
}

TEST_CASE("solve_mlu output satisfies simplex and cap constraints exactly") {
  const Graph g = testutil::random_graph(5, 4, 3);
  const PathSets ps = build_path_sets(g, 2);
  const Incidence inc = build_incidence(g, ps);
  Rng rng(77);
  DemandMatrix dm(5);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      if (i != j) {
        dm.set(i, j, rng.uniform());
      }
    }
  }
  const SensitivityBound bound =
      resolve_bound(BoundSpec::uniform(0.75), nullptr, ps);
  const SolveResult res = solve_mlu(dm, ps, inc, bound, SolveOptions{});
  for (std::size_t p = 0; p < ps.total_paths(); ++p) {
    CHECK(res.config.ratios[p] >= -1e-15);
    CHECK(res.config.ratios[p] <= bound.ratio_cap(p) + 1e-9);
  }
  CHECK(is_valid_config(res.config, ps));
}

TEST_CASE("tightening a uniform cap never helps") {
  const Graph g = testutil::triangle_graph();
  const PathSets ps = build_path_sets(g, 3);
  const Incidence inc = build_incidence(g, ps);
  const DemandMatrix dm = testutil::triangle_burst1();
  double prev = -1.0;
  for (double cap : {2.0, 1.0, 2.0 / 3.0, 0.5}) {
    const SolveResult res = solve_mlu(
        dm, ps, inc, resolve_bound(BoundSpec::uniform(cap), nullptr, ps),
        SolveOptions{});
    if (prev >= 0.0) {
      CHECK(res.mlu >= prev - 1e-3 * prev);
    }
    prev = res.mlu;
  }
}

TEST_CASE("solver is deterministic") {
  const Graph g = testutil::random_graph(5, 4, 9);
  const PathSets ps = build_path_sets(g, 2);
  const Incidence inc = build_incidence(g, ps);
  Rng rng(5);
  DemandMatrix dm(5);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      if (i != j) {
        dm.set(i, j, rng.uniform() * 2.0);
      }
    }
  }
  const SensitivityBound unbounded =
      resolve_bound(BoundSpec::unbounded(), nullptr, ps);
  const SolveResult a = solve_mlu(dm, ps, inc, unbounded, SolveOptions{});
  const SolveResult b = solve_mlu(dm, ps, inc, unbounded, SolveOptions{});
  CHECK(a.mlu == b.mlu);
  CHECK(a.config.ratios == b.config.ratios);
}

TEST_CASE("omniscient lower-bounds the other baselines") {
  const Graph g = testutil::triangle_graph();
  const PathSets ps = build_path_sets(g, 3);
  const Incidence inc = build_incidence(g, ps);
  const DemandMatrix target = testutil::triangle_burst3();
  const std::vector<DemandMatrix> window{testutil::triangle_normal(), target};

  const SolveResult omni = omniscient(target, ps, inc, SolveOptions{});
  const SolveResult pred =
      prediction_te({window.data(), 1}, ps, inc, SolveOptions{});
  const SensitivityBound cap =
      resolve_bound(BoundSpec::uniform(2.0 / 3.0), nullptr, ps);
  const SolveResult desens =
      desensitization_te(window, cap, ps, inc, SolveOptions{});

  const double pred_mlu = evaluate(pred.config, target, inc).mlu;
  const double desens_mlu = evaluate(desens.config, target, inc).mlu;
  CHECK(omni.mlu <= pred_mlu + 1e-9);
  CHECK(omni.mlu <= desens_mlu + 1e-9);
}

TEST_CASE("omniscient accepts warm candidates") {
  const Graph g = testutil::triangle_graph();
  const PathSets ps = build_path_sets(g, 3);
  const Incidence inc = build_incidence(g, ps);
  const TEConfig direct = testutil::triangle_all_direct();
  const SolveResult res = omniscient(testutil::triangle_normal(), ps, inc,
                                     SolveOptions{}, {&direct, 1});
  // The all-direct candidate is exactly optimal here.
  CHECK(res.mlu == 0.5);
}

TEST_CASE("prediction_te uses only the last window snapshot") {
  const Graph g = testutil::triangle_graph();
  const PathSets ps = build_path_sets(g, 3);
  const Incidence inc = build_incidence(g, ps);
  const std::vector<DemandMatrix> w1{testutil::triangle_burst3(),
                                     testutil::triangle_normal()};
  const std::vector<DemandMatrix> w2{testutil::triangle_burst1(),
                                     testutil::triangle_normal()};
  const SolveResult a = prediction_te(w1, ps, inc, SolveOptions{});
  const SolveResult b = prediction_te(w2, ps, inc, SolveOptions{});
  CHECK(a.config.ratios == b.config.ratios);
  CHECK_THROWS_AS(prediction_te({}, ps, inc, SolveOptions{}), ConfigError);
}

TEST_CASE("prediction on the Fig. 3 trace hits the burst hard") {
  const Graph g = testutil::triangle_graph();
  const PathSets ps = build_path_sets(g, 3);
  const Incidence inc = build_incidence(g, ps);
  const std::vector<DemandMatrix> window{testutil::triangle_normal()};
  const SolveResult pred = prediction_te(window, ps, inc, SolveOptions{});
  const double burst_mlu =
      evaluate(pred.config, testutil::triangle_burst1(), inc).mlu;
  CHECK(burst_mlu == doctest::Approx(2.0).epsilon(5e-3));
  // The burst-1 optimum splits A->B 0.625/0.375 for an MLU of 1.25.
  const SolveResult omni =
      omniscient(testutil::triangle_burst1(), ps, inc, SolveOptions{});
  CHECK(omni.mlu == doctest::Approx(1.25).epsilon(5e-3));
}

TEST_CASE("desensitization peaks over the window") {
  const Graph g = testutil::triangle_graph();
  const PathSets ps = build_path_sets(g, 3);
  const Incidence inc = build_incidence(g, ps);
  const std::vector<DemandMatrix> window{testutil::triangle_normal(),
                                         testutil::triangle_burst3()};
  const SensitivityBound unbounded =
      resolve_bound(BoundSpec::unbounded(), nullptr, ps);
  const SolveResult from_window =
      desensitization_te(window, unbounded, ps, inc, SolveOptions{});
  // Elementwise max of the window: D_BC = 4, everything else 1.
  const SolveResult direct =
      solve_mlu(testutil::triangle_dm(1, 1, 4), ps, inc, unbounded,
                SolveOptions{});
  CHECK(from_window.config.ratios == direct.config.ratios);
  CHECK(from_window.mlu == direct.mlu);

  // Singleton window: same anticipated matrix as prediction.
  const std::vector<DemandMatrix> one{testutil::triangle_normal()};
  const SolveResult d1 =
      desensitization_te(one, unbounded, ps, inc, SolveOptions{});
  const SolveResult p1 = prediction_te(one, ps, inc, SolveOptions{});
  CHECK(d1.config.ratios == p1.config.ratios);
}

TEST_CASE("desensitization respects the sensitivity caps") {
  const Graph g = testutil::random_graph(5, 4, 21);
  const PathSets ps = build_path_sets(g, 3);
  const Incidence inc = build_incidence(g, ps);
  Rng rng(4);
  std::vector<DemandMatrix> window;
  for (int t = 0; t < 3; ++t) {
    DemandMatrix dm(5);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        if (i != j) {
          dm.set(i, j, rng.uniform());
        }
      }
    }
    window.push_back(std::move(dm));
  }
  const SensitivityBound bound =
      resolve_bound(BoundSpec::uniform(2.0 / 3.0), nullptr, ps);
  const SolveResult res =
      desensitization_te(window, bound, ps, inc, SolveOptions{});
  const auto smax = max_sensitivity_per_sd(res.config, ps);
  for (std::size_t sd = 0; sd < ps.sd_count(); ++sd) {
    // Sensitivities on the normalized capacity scale stay within the cap.
    CHECK(smax[sd] * bound.capacity_scale() <= bound.cap(sd) + 1e-9);
  }
}

TEST_CASE("masked solve freezes dead paths at zero") {
  const ParallelFixture f;
  DemandMatrix dm(4);
  dm.set(0, 1, 1.0);
  std::vector<char> alive(f.ps.total_paths(), 1);
  const std::size_t lo = f.ps.group_offset(f.sd);
  alive[lo] = 0;
  const SolveResult res = solve_mlu(
      dm, f.ps, f.inc, resolve_bound(BoundSpec::unbounded(), nullptr, f.ps),
      SolveOptions{}, {}, alive);
  CHECK(res.config.ratios[lo] == 0.0);
  CHECK(res.config.ratios[lo + 1] == doctest::Approx(1.0));
  CHECK(res.mlu == doctest::Approx(1.0).epsilon(1e-6));
}
