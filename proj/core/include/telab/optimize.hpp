#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "telab/te.hpp"
#include "telab/topology.hpp"
#include "telab/traffic.hpp"

namespace telab {

enum class BoundKind { kUnbounded, kUniform, kLinear, kPiecewise };

// Bound spec as it appears in experiment configs:
//   {"kind": "uniform|linear|piecewise|unbounded",
//    "cap": f, "min": f, "max": f, "breakpoint": f}
struct BoundSpec {
  BoundKind kind = BoundKind::kUnbounded;
  double cap = 0.0;         // uniform
  double min = 0.0;         // linear / piecewise
  double max = 0.0;         // linear / piecewise
  double breakpoint = 0.0;  // piecewise, fraction in (0,1)

  static BoundSpec unbounded() { return {}; }
  static BoundSpec uniform(double cap);
  static BoundSpec linear(double min, double max);
  static BoundSpec piecewise(double min, double max, double breakpoint);
};

// Per-SD caps on max path sensitivity, expressed on the normalized capacity
// scale where the smallest path capacity equals 1. Rank-based kinds (linear,
// piecewise) assign caps by ascending-variance rank; ties break by SD index.
class SensitivityBound {
 public:
  bool is_unbounded() const { return unbounded_; }
  double capacity_scale() const { return scale_; }

  // Cap for one SD group (normalized scale; +inf when unbounded).
  double cap(std::size_t sd) const {
    return unbounded_ ? std::numeric_limits<double>::infinity() : caps_[sd];
  }
  // Upper bound on the split ratio of one path: cap(sd) * C_p / scale.
  double ratio_cap(std::size_t path) const {
    return unbounded_ ? std::numeric_limits<double>::infinity()
                      : ratio_caps_[path];
  }

  friend SensitivityBound resolve_bound(const BoundSpec&, const TrafficStats*,
                                        const PathSets&);

 private:
  bool unbounded_ = true;
  double scale_ = 1.0;
  std::vector<double> caps_;        // per SD
  std::vector<double> ratio_caps_;  // per path
};

// Resolves a bound spec against a path set. `stats` is required for the
// rank-based kinds and ignored otherwise. Throws ConfigError when some SD
// group cannot reach a ratio sum of 1 under the caps.
SensitivityBound resolve_bound(const BoundSpec& spec, const TrafficStats* stats,
                               const PathSets& ps);

struct SolveOptions {
  int max_iters = 5000;
  double tolerance = 1e-3;  // relative MLU improvement for convergence
  double step = 0.1;        // initial projected-gradient step
  double theta0 = 0.0;      // initial LSE temperature; 0 = initial MLU / 10
  double theta_decay = 0.97;
  int theta_decay_every = 25;
  std::uint64_t seed = 0;   // reserved; the current method is deterministic
};

struct SolveResult {
  TEConfig config;
  double mlu = 0.0;  // exact (unsmoothed) MLU of `config`
  int iters = 0;
  bool converged = false;
};

// Minimizes MLU over per-SD capped simplices by projected gradient descent
// on a log-sum-exp smoothed objective with temperature annealing. The
// returned config is the best exact-MLU iterate (also considering any
// `candidates`, which must be valid configs for `ps`). `path_alive`, when
// nonempty, freezes dead paths at ratio 0; a fully dead group must have zero
// demand and is pinned to a uniform split.
SolveResult solve_mlu(const DemandMatrix& dm, const PathSets& ps,
                      const Incidence& inc, const SensitivityBound& bound,
                      const SolveOptions& opts,
                      std::span<const TEConfig> candidates = {},
                      const std::vector<char>& path_alive = {});

// Optimum for the realized demand; the normalization oracle.
SolveResult omniscient(const DemandMatrix& dm, const PathSets& ps,
                       const Incidence& inc, const SolveOptions& opts,
                       std::span<const TEConfig> candidates = {});

// Optimizes for the last snapshot of the window (no hedging).
SolveResult prediction_te(std::span<const DemandMatrix> window,
                          const PathSets& ps, const Incidence& inc,
                          const SolveOptions& opts);

// Optimizes for the elementwise window peak under a sensitivity bound.
SolveResult desensitization_te(std::span<const DemandMatrix> window,
                               const SensitivityBound& bound,
                               const PathSets& ps, const Incidence& inc,
                               const SolveOptions& opts);

// Euclidean projection onto {r >= 0, r_i <= cap_i, sum r = 1} by bisection
// on the shift parameter. caps may be +inf; sum(caps) must be >= 1.
void project_capped_simplex(std::span<double> r, std::span<const double> caps);

}  // namespace telab
