#include "telab/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "telab/errors.hpp"

namespace telab {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFeasSlack = 1e-9;
}  // namespace

BoundSpec BoundSpec::uniform(double cap) {
  BoundSpec s;
  s.kind = BoundKind::kUniform;
  s.cap = cap;
  return s;
}

BoundSpec BoundSpec::linear(double min, double max) {
  BoundSpec s;
  s.kind = BoundKind::kLinear;
  s.min = min;
  s.max = max;
  return s;
}

BoundSpec BoundSpec::piecewise(double min, double max, double breakpoint) {
  BoundSpec s;
  s.kind = BoundKind::kPiecewise;
  s.min = min;
  s.max = max;
  s.breakpoint = breakpoint;
  return s;
}

SensitivityBound resolve_bound(const BoundSpec& spec, const TrafficStats* stats,
                               const PathSets& ps) {
  SensitivityBound bound;
  if (spec.kind == BoundKind::kUnbounded) {
    bound.unbounded_ = true;
    return bound;
  }
  bound.unbounded_ = false;

  // Normalized capacity scale: smallest path capacity maps to 1.
  double scale = kInf;
  for (std::size_t p = 0; p < ps.total_paths(); ++p) {
    scale = std::min(scale, ps.path(p).capacity);
  }
  if (!std::isfinite(scale)) {
    scale = 1.0;
  }
  bound.scale_ = scale;

  const std::size_t n = ps.sd_count();
  bound.caps_.assign(n, 0.0);
  switch (spec.kind) {
    case BoundKind::kUniform: {
      if (!(spec.cap > 0.0)) {
        throw ConfigError("uniform bound cap must be positive");
      }
      std::fill(bound.caps_.begin(), bound.caps_.end(), spec.cap);
      break;
    }
    case BoundKind::kLinear:
    case BoundKind::kPiecewise: {
      if (!(spec.min > 0.0) || spec.min > spec.max) {
        throw ConfigError("bound requires 0 < min <= max");
      }
      if (stats == nullptr) {
        throw ConfigError("rank-based bound needs traffic stats");
      }
      // Ascending-variance rank; ties break by SD index.
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::vector<double> var(n);
      for (std::size_t i = 0; i < n; ++i) {
        var[i] = stats->variance(ps.sd_pairs()[i].src, ps.sd_pairs()[i].dst);
      }
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) {
                  if (var[a] != var[b]) {
                    return var[a] < var[b];
                  }
                  return a < b;
                });
      if (spec.kind == BoundKind::kLinear) {
        for (std::size_t r = 0; r < n; ++r) {
          const double frac =
              n > 1 ? static_cast<double>(r) / static_cast<double>(n - 1) : 0.0;
          bound.caps_[order[r]] = spec.max - (spec.max - spec.min) * frac;
        }
      } else {
        if (!(spec.breakpoint > 0.0 && spec.breakpoint < 1.0)) {
          throw ConfigError("piecewise breakpoint must lie in (0,1)");
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double frac = static_cast<double>(r) / static_cast<double>(n);
          bound.caps_[order[r]] = frac < spec.breakpoint ? spec.max : spec.min;
        }
      }
      break;
    }
    case BoundKind::kUnbounded:
      break;
  }

  bound.ratio_caps_.resize(ps.total_paths());
  for (std::size_t sd = 0; sd < n; ++sd) {
    double cap_sum = 0.0;
    for (std::size_t p = ps.group_offset(sd);
         p < ps.group_offset(sd) + ps.group_size(sd); ++p) {
      bound.ratio_caps_[p] = bound.caps_[sd] * ps.path(p).capacity / scale;
      cap_sum += bound.ratio_caps_[p];
    }
    if (cap_sum < 1.0 - kFeasSlack) {
      const SdPair& pair = ps.sd_pairs()[sd];
      throw ConfigError("sensitivity bound infeasible for SD pair (" +
                        std::to_string(pair.src) + "," +
                        std::to_string(pair.dst) + "): path cap sum " +
                        std::to_string(cap_sum) + " < 1");
    }
  }
  return bound;
}

void project_capped_simplex(std::span<double> r, std::span<const double> caps) {
  const std::size_t n = r.size();
  if (n == 0) {
    return;
  }
  double cap_sum = 0.0;
  for (double c : caps) {
    cap_sum += c;
    if (cap_sum >= kInf) {
      break;
    }
  }
  if (cap_sum < 1.0 - kFeasSlack) {
    throw NumericalError("capped simplex is empty: cap sum < 1");
  }
  if (cap_sum <= 1.0 + kFeasSlack && std::isfinite(cap_sum)) {
    // Degenerate feasible set: the caps themselves (rescaled for roundoff).
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = caps[i] / cap_sum;
    }
    return;
  }
  double lo = kInf, hi = -kInf;
  for (std::size_t i = 0; i < n; ++i) {
    lo = std::min(lo, r[i]);
    hi = std::max(hi, r[i]);
  }
  lo -= 1.0;  // sum(clamp(y - lo)) >= sum(min(1, cap)) >= 1 when feasible
  auto mass = [&](double tau) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += std::clamp(r[i] - tau, 0.0, caps[i]);
    }
    return s;
  };
  for (int iter = 0; iter < 100; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mass(mid) >= 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double tau = lo;  // mass(tau) >= 1 by the bisection invariant
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = std::clamp(r[i] - tau, 0.0, caps[i]);
    sum += r[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    r[i] /= sum;  // sum >= 1, so caps stay respected
  }
}

namespace {

// Per-solve scratch built once from the problem structure.
struct SolveWorkspace {
  std::vector<double> demand_by_path;     // d_p = DM[sd(p)]
  std::vector<std::size_t> active_paths;  // d_p > 0 and alive
  std::vector<std::size_t> active_groups;
  std::vector<char> frozen_group;         // zero-demand, never reprojected
  std::vector<double> ratio_caps;         // caps incl. dead paths at 0
  std::vector<double> flow;               // per constraint
  std::vector<double> weight;             // LSE softmax weights
};

double exact_mlu(const SolveWorkspace& ws, const Incidence& inc,
                 std::vector<double>& flow, const std::vector<double>& r) {
  flow.assign(inc.constraint_count(), 0.0);
  for (std::size_t p : ws.active_paths) {
    const double fp = ws.demand_by_path[p] * r[p];
    if (fp == 0.0) {
      continue;
    }
    for (int c : inc.constraints_of_path(p)) {
      flow[c] += fp;
    }
  }
  double mlu = 0.0;
  for (std::size_t c = 0; c < flow.size(); ++c) {
    mlu = std::max(mlu, flow[c] / inc.capacities[c]);
  }
  return mlu;
}

// Smoothed objective theta * log sum exp(util/theta) with the max trick;
// fills softmax weights when `weights` is nonnull.
double smoothed_mlu(const SolveWorkspace& ws, const Incidence& inc,
                    std::vector<double>& flow, const std::vector<double>& r,
                    double theta, std::vector<double>* weights) {
  const double m = exact_mlu(ws, inc, flow, r);
  double z = 0.0;
  for (std::size_t c = 0; c < flow.size(); ++c) {
    z += std::exp((flow[c] / inc.capacities[c] - m) / theta);
  }
  if (weights != nullptr) {
    weights->resize(flow.size());
    for (std::size_t c = 0; c < flow.size(); ++c) {
      (*weights)[c] = std::exp((flow[c] / inc.capacities[c] - m) / theta) / z;
    }
  }
  return m + theta * std::log(z);
}

}  // namespace

SolveResult solve_mlu(const DemandMatrix& dm, const PathSets& ps,
                      const Incidence& inc, const SensitivityBound& bound,
                      const SolveOptions& opts,
                      std::span<const TEConfig> candidates,
                      const std::vector<char>& path_alive) {
  const std::size_t paths = ps.total_paths();
  if (inc.path_count() != paths) {
    throw DataError("incidence does not match path sets");
  }
  if (!path_alive.empty() && path_alive.size() != paths) {
    throw DataError("path mask size mismatch");
  }
  if (opts.max_iters < 1 || !(opts.tolerance > 0.0) || !(opts.step > 0.0)) {
    throw ConfigError("invalid solve options");
  }

  SolveWorkspace ws;
  ws.ratio_caps.resize(paths);
  for (std::size_t p = 0; p < paths; ++p) {
    ws.ratio_caps[p] = bound.ratio_cap(p);
    if (!path_alive.empty() && !path_alive[p]) {
      ws.ratio_caps[p] = 0.0;
    }
  }

  const auto dm_by_sd = dm.flatten(ps.sd_pairs());
  ws.demand_by_path.resize(paths);
  ws.frozen_group.assign(ps.sd_count(), 0);

  TEConfig init;
  init.ratios.assign(paths, 0.0);
  for (std::size_t sd = 0; sd < ps.sd_count(); ++sd) {
    const std::size_t lo = ps.group_offset(sd);
    const std::size_t size = ps.group_size(sd);
    double cap_sum = 0.0;
    for (std::size_t p = lo; p < lo + size; ++p) {
      ws.demand_by_path[p] = dm_by_sd[sd];
      cap_sum += ws.ratio_caps[p];
    }
    if (cap_sum < 1.0 - kFeasSlack) {
      // Only reachable through the path mask; resolved bounds are feasible.
      if (dm_by_sd[sd] > 0.0) {
        const SdPair& pair = ps.sd_pairs()[sd];
        throw NumericalError("no feasible split for SD pair (" +
                             std::to_string(pair.src) + "," +
                             std::to_string(pair.dst) + ") with demand");
      }
      // Zero demand: pin a uniform split over the full group.
      for (std::size_t p = lo; p < lo + size; ++p) {
        init.ratios[p] = 1.0 / static_cast<double>(size);
      }
      ws.frozen_group[sd] = 1;
      continue;
    }
    for (std::size_t p = lo; p < lo + size; ++p) {
      init.ratios[p] = 1.0 / static_cast<double>(size);
    }
    project_capped_simplex(
        std::span<double>(init.ratios.data() + lo, size),
        std::span<const double>(ws.ratio_caps.data() + lo, size));
    if (dm_by_sd[sd] > 0.0) {
      ws.active_groups.push_back(sd);
      for (std::size_t p = lo; p < lo + size; ++p) {
        ws.active_paths.push_back(p);
      }
    }
  }

  SolveResult result;
  result.config = init;
  result.mlu = exact_mlu(ws, inc, ws.flow, init.ratios);
  for (const TEConfig& cand : candidates) {
    if (cand.ratios.size() != paths) {
      throw DataError("candidate config size mismatch");
    }
    const double m = exact_mlu(ws, inc, ws.flow, cand.ratios);
    if (m < result.mlu) {
      result.mlu = m;
      result.config = cand;
    }
  }
  if (ws.active_paths.empty() || result.mlu <= 1e-300) {
    result.converged = true;
    return result;
  }

  // Auto temperature scales with the objective so exp((u - m)/theta) sees
  // the same relative spread regardless of demand units.
  const double init_mlu = exact_mlu(ws, inc, ws.flow, init.ratios);
  const double theta0 =
      opts.theta0 > 0.0 ? opts.theta0 : std::max(init_mlu, 1e-12) / 10.0;

  std::vector<double> r = init.ratios;
  std::vector<double> grad(paths, 0.0);
  std::vector<double> trial(paths, 0.0);
  std::vector<double> flow2;
  double alpha = -1.0;  // set from the first gradient
  double checkpoint_best = result.mlu;
  const int kCheckWindow = 200;
  // No early stop while the temperature is still coarse; the smoothed
  // objective keeps sharpening long after the iterates settle.
  int checkpoint_iter = std::max(0, std::min(opts.max_iters / 2, 1500));

  int k = 0;
  for (; k < opts.max_iters; ++k) {
    const double theta =
        std::max(theta0 * std::pow(opts.theta_decay,
                                   static_cast<double>(k) /
                                       opts.theta_decay_every),
                 1e-12);
    const double f_cur = smoothed_mlu(ws, inc, ws.flow, r, theta, &ws.weight);
    for (std::size_t p : ws.active_paths) {
      double s = 0.0;
      for (int c : inc.constraints_of_path(p)) {
        s += ws.weight[c] / inc.capacities[c];
      }
      grad[p] = ws.demand_by_path[p] * s;
    }
    double gmax = 0.0;
    for (std::size_t p : ws.active_paths) {
      gmax = std::max(gmax, std::abs(grad[p]));
    }
    if (alpha < 0.0) {
      alpha = opts.step / std::max(gmax, 1e-12);
    }
    // Keep the raw move bounded so the projection bisection keeps full
    // precision; ratios live in [0,1] anyway.
    alpha = std::min(alpha, 1e3 / std::max(gmax, 1e-12));

    // Backtracking on the proximal sufficient-decrease condition.
    bool stepped = false;
    for (int bt = 0; bt < 40; ++bt) {
      trial = r;
      for (std::size_t p : ws.active_paths) {
        trial[p] = r[p] - alpha * grad[p];
      }
      for (std::size_t sd : ws.active_groups) {
        const std::size_t lo = ps.group_offset(sd);
        const std::size_t size = ps.group_size(sd);
        project_capped_simplex(
            std::span<double>(trial.data() + lo, size),
            std::span<const double>(ws.ratio_caps.data() + lo, size));
      }
      double dot = 0.0, dist2 = 0.0;
      for (std::size_t p : ws.active_paths) {
        const double d = trial[p] - r[p];
        dot += grad[p] * d;
        dist2 += d * d;
      }
      const double f_trial = smoothed_mlu(ws, inc, flow2, trial, theta, nullptr);
      if (f_trial <= f_cur + dot + dist2 / (2.0 * alpha) + 1e-15) {
        stepped = true;
        break;
      }
      alpha *= 0.5;
      if (alpha < 1e-18) {
        break;
      }
    }
    if (!stepped) {
      break;  // no usable step at this temperature
    }
    r.swap(trial);
    alpha *= 1.25;

    const double m = exact_mlu(ws, inc, ws.flow, r);
    if (m < result.mlu) {
      result.mlu = m;
      result.config.ratios = r;
    }
    if (k - checkpoint_iter >= kCheckWindow) {
      if (checkpoint_best - result.mlu <= opts.tolerance * checkpoint_best) {
        result.converged = true;
        ++k;
        break;
      }
      checkpoint_best = result.mlu;
      checkpoint_iter = k;
    }
  }
  result.iters = k;
  return result;
}

SolveResult omniscient(const DemandMatrix& dm, const PathSets& ps,
                       const Incidence& inc, const SolveOptions& opts,
                       std::span<const TEConfig> candidates) {
  return solve_mlu(dm, ps, inc, resolve_bound(BoundSpec::unbounded(), nullptr, ps),
                   opts, candidates);
}

SolveResult prediction_te(std::span<const DemandMatrix> window,
                          const PathSets& ps, const Incidence& inc,
                          const SolveOptions& opts) {
  if (window.empty()) {
    throw ConfigError("prediction window is empty");
  }
  return solve_mlu(window.back(), ps, inc,
                   resolve_bound(BoundSpec::unbounded(), nullptr, ps), opts);
}

SolveResult desensitization_te(std::span<const DemandMatrix> window,
                               const SensitivityBound& bound,
                               const PathSets& ps, const Incidence& inc,
                               const SolveOptions& opts) {
  if (window.empty()) {
    throw ConfigError("desensitization window is empty");
  }
  DemandMatrix peak(window.front().nodes());
  for (int i = 0; i < peak.nodes(); ++i) {
    for (int j = 0; j < peak.nodes(); ++j) {
      if (i == j) {
        continue;
      }
      double m = 0.0;
      for (const DemandMatrix& dm : window) {
        m = std::max(m, dm.at(i, j));
      }
      peak.set(i, j, m);
    }
  }
  return solve_mlu(peak, ps, inc, bound, opts);
}

}  // namespace telab
