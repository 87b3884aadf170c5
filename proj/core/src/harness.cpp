#include "telab/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>

#include <nlohmann/json.hpp>

#include "telab/errors.hpp"
#include "telab/rng.hpp"

namespace telab {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) {
    return 0.0;
  }
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/" + name;
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write " + path);
  }
  return out;
}

BoundSpec parse_bound(const nlohmann::json& j) {
  BoundSpec spec;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "unbounded") {
    spec.kind = BoundKind::kUnbounded;
  } else if (kind == "uniform") {
    spec = BoundSpec::uniform(j.at("cap").get<double>());
  } else if (kind == "linear") {
    spec = BoundSpec::linear(j.at("min").get<double>(),
                             j.at("max").get<double>());
  } else if (kind == "piecewise") {
    spec = BoundSpec::piecewise(j.at("min").get<double>(),
                                j.at("max").get<double>(),
                                j.at("breakpoint").get<double>());
  } else {
    throw ConfigError("unknown bound kind: " + kind);
  }
  return spec;
}

double smallest_path_capacity(const PathSets& ps) {
  double scale = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < ps.total_paths(); ++p) {
    scale = std::min(scale, ps.path(p).capacity);
  }
  return std::isfinite(scale) ? scale : 1.0;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  try {
    ExperimentConfig cfg;
    cfg.topology_path = j.at("topology").get<std::string>();
    if (j.contains("trace")) {
      cfg.trace_path = j.at("trace").get<std::string>();
    }
    if (j.contains("gravity")) {
      const auto& g = j.at("gravity");
      GravitySpec spec;
      if (g.contains("weights")) {
        spec.weights = g.at("weights").get<std::vector<double>>();
      }
      spec.total = g.at("total").get<double>();
      spec.count = g.at("count").get<int>();
      spec.jitter = g.value("jitter", 0.0);
      cfg.gravity = spec;
    }
    if (cfg.trace_path.empty() == !cfg.gravity.has_value()) {
      throw ConfigError("config needs exactly one of \"trace\" or \"gravity\"");
    }
    cfg.k = j.value("k", 3);
    cfg.h = j.value("h", 12);
    cfg.split = j.value("split", 0.75);
    if (cfg.k < 1 || cfg.h < 1 || !(cfg.split > 0.0 && cfg.split < 1.0)) {
      throw ConfigError("invalid k / h / split");
    }
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      cfg.solver.max_iters = s.value("max_iters", cfg.solver.max_iters);
      cfg.solver.tolerance = s.value("tolerance", cfg.solver.tolerance);
      cfg.solver.step = s.value("step", cfg.solver.step);
      cfg.solver.theta0 = s.value("theta0", cfg.solver.theta0);
      cfg.solver.theta_decay = s.value("theta_decay", cfg.solver.theta_decay);
      cfg.solver.theta_decay_every =
          s.value("theta_decay_every", cfg.solver.theta_decay_every);
      cfg.solver.seed = s.value("seed", cfg.solver.seed);
    }
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      cfg.seeds.gravity = s.value("gravity", cfg.seeds.gravity);
      cfg.seeds.perturb = s.value("perturb", cfg.seeds.perturb);
      cfg.seeds.failures = s.value("failures", cfg.seeds.failures);
      cfg.seeds.train = s.value("train", cfg.seeds.train);
    }
    cfg.out_dir = j.value("out_dir", std::string("."));
    for (const auto& js : j.value("schemes", nlohmann::json::array())) {
      SchemeSpec s;
      s.name = js.at("name").get<std::string>();
      s.type = js.at("type").get<std::string>();
      if (s.type != "omniscient" && s.type != "prediction" &&
          s.type != "desensitization" && s.type != "neural") {
        throw ConfigError("unknown scheme type: " + s.type);
      }
      if (js.contains("bound")) {
        s.bound = parse_bound(js.at("bound"));
      }
      s.window = js.value("window", 0);
      s.gamma = js.value("gamma", 0.0);
      s.epochs = js.value("epochs", 100);
      s.batch = js.value("batch", 32);
      s.lr = js.value("lr", 1e-3);
      s.model_path = js.value("model_path", std::string());
      s.tune_gamma = js.value("tune_gamma", false);
      if (js.contains("gamma_grid")) {
        s.gamma_grid = js.at("gamma_grid").get<std::vector<double>>();
      }
      cfg.schemes.push_back(std::move(s));
    }
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config field error in " + path + ": " + e.what());
  }
}

SummaryStats summarize(const std::vector<double>& values) {
  SummaryStats s;
  if (values.empty()) {
    return s;
  }
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) /
           static_cast<double>(sorted.size());
  s.p25 = percentile(sorted, 0.25);
  s.p50 = percentile(sorted, 0.50);
  s.p75 = percentile(sorted, 0.75);
  s.p90 = percentile(sorted, 0.90);
  s.p99 = percentile(sorted, 0.99);
  s.p100 = sorted.back();
  std::size_t severe = 0;
  for (double v : sorted) {
    if (v > 2.0) {
      ++severe;
    }
  }
  s.severe_fraction =
      static_cast<double>(severe) / static_cast<double>(sorted.size());
  return s;
}

namespace {

struct PreparedScheme {
  SchemeSpec spec;
  std::size_t window = 1;  // history snapshots the scheme may see
  std::optional<SensitivityBound> bound;
  std::optional<Mlp> model;
  std::vector<double> train_log;
  double precompute_seconds = 0.0;
};

}  // namespace

struct Experiment::Impl {
  ExperimentConfig cfg;
  Graph graph;
  PathSets ps;
  Incidence inc;
  TrafficTrace trace;
  std::size_t train_end = 0;
  std::optional<TrafficStats> train_stats;
  std::vector<PreparedScheme> schemes;
  bool schemes_ready = false;
  double path_setup_seconds = 0.0;

  explicit Impl(ExperimentConfig config)
      : cfg(std::move(config)),
        graph(load_topology(cfg.topology_path)),
        ps(make_path_sets()),
        inc(build_incidence(graph, ps)) {
    if (cfg.gravity.has_value()) {
      GravitySpec g = *cfg.gravity;
      if (g.weights.empty()) {
        g.weights.assign(graph.node_count(), 1.0);
      }
      trace = gravity_synthesize(graph, g.weights, g.total, g.count, g.jitter,
                                 cfg.seeds.gravity);
    } else {
      trace = load_trace(cfg.trace_path, graph.node_count());
    }
    if (trace.size() >= 2) {
      train_end = static_cast<std::size_t>(
          cfg.split * static_cast<double>(trace.size()));
      train_end = std::clamp<std::size_t>(train_end, 2, trace.size());
      train_stats = compute_stats(trace, 0, train_end);
    }
  }

  PathSets make_path_sets() {
    const auto start = Clock::now();
    PathSets sets = build_path_sets(graph, cfg.k);
    path_setup_seconds = seconds_since(start);
    return sets;
  }

  void ensure_schemes() {
    if (schemes_ready) {
      return;
    }
    if (!train_stats.has_value()) {
      throw DataError("trace too short for experiments");
    }
    for (const SchemeSpec& spec : cfg.schemes) {
      PreparedScheme prep;
      prep.spec = spec;
      if (spec.type == "omniscient") {
        prep.window = 0;
      } else if (spec.type == "prediction") {
        prep.window = 1;
      } else if (spec.type == "desensitization") {
        prep.window = spec.window > 0 ? spec.window : cfg.h;
        prep.bound = resolve_bound(spec.bound, &*train_stats, ps);
      } else {  // neural
        prep.window = cfg.h;
        const auto start = Clock::now();
        prep.model = obtain_model(prep);
        prep.precompute_seconds = seconds_since(start);
      }
      schemes.push_back(std::move(prep));
    }
    schemes_ready = true;
  }

  Mlp obtain_model(PreparedScheme& prep) {
    const SchemeSpec& spec = prep.spec;
    if (!spec.model_path.empty() &&
        std::filesystem::exists(spec.model_path)) {
      Mlp m = load_model(spec.model_path);
      validate_model(m, ps);
      if (m.h != cfg.h) {
        throw ConfigError("model H does not match experiment H");
      }
      return m;
    }
    TrainOptions opts;
    opts.split = cfg.split;
    opts.h = cfg.h;
    opts.gamma = spec.gamma;
    opts.epochs = spec.epochs;
    opts.batch = spec.batch;
    opts.lr = spec.lr;
    opts.seed = cfg.seeds.train;
    if (spec.tune_gamma) {
      std::vector<double> grid = spec.gamma_grid;
      if (grid.empty()) {
        grid = {0.1, 1.0, 10.0};
      }
      opts.gamma = tune_gamma(trace, ps, inc, opts, grid, cfg.solver);
    }
    TrainResult result = train(trace, ps, inc, opts);
    prep.train_log = result.epoch_loss;
    const std::string out_path =
        spec.model_path.empty()
            ? cfg.out_dir + "/model_" + spec.name + ".json"
            : spec.model_path;
    std::filesystem::create_directories(
        std::filesystem::path(out_path).parent_path().empty()
            ? "."
            : std::filesystem::path(out_path).parent_path().string());
    save_model(result.model, out_path);
    return result.model;
  }

  // Decision for snapshot t; sees only snapshots [t - window, t).
  TEConfig decide(const PreparedScheme& prep, const TrafficTrace& tr,
                  std::size_t t) {
    const std::span<const DemandMatrix> window(
        tr.snapshots.data() + (t - prep.window), prep.window);
    if (prep.spec.type == "prediction") {
      return prediction_te(window, ps, inc, cfg.solver).config;
    }
    if (prep.spec.type == "desensitization") {
      return desensitization_te(window, *prep.bound, ps, inc, cfg.solver)
          .config;
    }
    if (prep.spec.type == "neural") {
      return forward(*prep.model, ps, window);
    }
    throw ConfigError("decide() called for scheme type " + prep.spec.type);
  }

  std::size_t eval_start() const {
    std::size_t max_window = 1;
    for (const PreparedScheme& prep : schemes) {
      max_window = std::max(max_window, prep.window);
    }
    return std::max(train_end, max_window);
  }

  EvalReport eval_on(const TrafficTrace& tr, bool measure_time) {
    ensure_schemes();
    const std::size_t start = eval_start();
    if (start >= tr.size()) {
      throw DataError("no test snapshots after the training split");
    }
    EvalReport report;
    for (const PreparedScheme& prep : schemes) {
      report.schemes.push_back(prep.spec.name);
      report.precompute_seconds.push_back(prep.precompute_seconds);
    }
    report.path_setup_seconds = path_setup_seconds;
    report.normalized.resize(schemes.size());
    std::vector<double> decision_seconds(schemes.size(), 0.0);

    std::vector<TEConfig> configs(schemes.size());
    for (std::size_t t = start; t < tr.size(); ++t) {
      std::vector<TEConfig> candidates;
      for (std::size_t i = 0; i < schemes.size(); ++i) {
        if (schemes[i].spec.type == "omniscient") {
          continue;
        }
        const auto t0 = Clock::now();
        configs[i] = decide(schemes[i], tr, t);
        decision_seconds[i] += seconds_since(t0);
        candidates.push_back(configs[i]);
      }
      // The normalizer sees every scheme's config as a warm candidate, so
      // the denominator is never worse than any scheme on this snapshot.
      const auto t0 = Clock::now();
      const SolveResult omni =
          omniscient(tr.snapshots[t], ps, inc, cfg.solver, candidates);
      const double omni_time = seconds_since(t0);
      if (omni.mlu <= 1e-12) {
        ++report.skipped;
        continue;
      }
      report.snapshots.push_back(t);
      for (std::size_t i = 0; i < schemes.size(); ++i) {
        if (schemes[i].spec.type == "omniscient") {
          decision_seconds[i] += omni_time;
          report.normalized[i].push_back(1.0);
        } else {
          const double mlu = evaluate(configs[i], tr.snapshots[t], inc).mlu;
          report.normalized[i].push_back(mlu / omni.mlu);
        }
      }
    }
    for (std::size_t i = 0; i < schemes.size(); ++i) {
      report.summary.push_back(summarize(report.normalized[i]));
      const double evaluated =
          static_cast<double>(report.snapshots.size() + report.skipped);
      report.mean_decision_seconds.push_back(
          measure_time && evaluated > 0 ? decision_seconds[i] / evaluated
                                        : 0.0);
    }
    return report;
  }
};

Experiment::Experiment(ExperimentConfig cfg)
    : impl_(std::make_unique<Impl>(std::move(cfg))) {}
Experiment::~Experiment() = default;

const PathSets& Experiment::path_sets() const { return impl_->ps; }
const Incidence& Experiment::incidence() const { return impl_->inc; }
const TrafficTrace& Experiment::trace() const { return impl_->trace; }
const TrafficStats& Experiment::train_stats() const {
  return *impl_->train_stats;
}
std::size_t Experiment::train_end() const { return impl_->train_end; }
const ExperimentConfig& Experiment::config() const { return impl_->cfg; }

EvalReport Experiment::run_eval() { return impl_->eval_on(impl_->trace, true); }

FailureReport Experiment::run_failures(int num_failed, int trials,
                                       std::uint64_t seed) {
  Impl& im = *impl_;
  im.ensure_schemes();
  if (num_failed < 0 ||
      num_failed >= static_cast<int>(im.inc.constraint_count())) {
    throw ConfigError("num_failed must lie in [0, constraint count)");
  }
  const std::size_t start = im.eval_start();
  if (start >= im.trace.size()) {
    throw DataError("no test snapshots after the training split");
  }

  // Decisions are made before failures hit, so they are shared by trials.
  const std::size_t tests = im.trace.size() - start;
  std::vector<std::vector<TEConfig>> configs(tests);
  for (std::size_t i = 0; i < tests; ++i) {
    configs[i].resize(im.schemes.size());
    for (std::size_t s = 0; s < im.schemes.size(); ++s) {
      if (im.schemes[s].spec.type != "omniscient") {
        configs[i][s] = im.decide(im.schemes[s], im.trace, start + i);
      }
    }
  }

  FailureReport report;
  report.num_failed = num_failed;
  report.trials = trials;
  for (const PreparedScheme& prep : im.schemes) {
    report.schemes.push_back(prep.spec.name);
  }
  report.normalized.resize(im.schemes.size());

  Rng rng(seed);
  std::vector<int> all_constraints(im.inc.constraint_count());
  std::iota(all_constraints.begin(), all_constraints.end(), 0);
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<int> pool = all_constraints;
    rng.shuffle(pool);
    const std::vector<int> failed(pool.begin(), pool.begin() + num_failed);
    const auto alive = surviving_paths(im.ps, failed);

    // A trial is disconnected if an SD pair with positive test demand has
    // no surviving path.
    bool disconnected = false;
    for (std::size_t sd = 0; sd < im.ps.sd_count() && !disconnected; ++sd) {
      bool any_alive = false;
      for (std::size_t p = im.ps.group_offset(sd);
           p < im.ps.group_offset(sd) + im.ps.group_size(sd); ++p) {
        if (alive[p]) {
          any_alive = true;
          break;
        }
      }
      if (any_alive) {
        continue;
      }
      const SdPair& pair = im.ps.sd_pairs()[sd];
      for (std::size_t t = start; t < im.trace.size(); ++t) {
        if (im.trace.snapshots[t].at(pair.src, pair.dst) > 0.0) {
          disconnected = true;
          break;
        }
      }
    }
    if (disconnected) {
      ++report.disconnected_trials;
      continue;
    }

    for (std::size_t i = 0; i < tests; ++i) {
      const DemandMatrix& dm = im.trace.snapshots[start + i];
      std::vector<TEConfig> rerouted(im.schemes.size());
      std::vector<TEConfig> candidates;
      for (std::size_t s = 0; s < im.schemes.size(); ++s) {
        if (im.schemes[s].spec.type == "omniscient") {
          continue;
        }
        rerouted[s] = reroute_on_failure(configs[i][s], im.ps, failed,
                                         EmptyGroupPolicy::kKeepRatios);
        candidates.push_back(rerouted[s]);
      }
      // Oracle with perfect knowledge of demand and failures, restricted to
      // the surviving precomputed paths.
      const SolveResult oracle =
          solve_mlu(dm, im.ps, im.inc,
                    resolve_bound(BoundSpec::unbounded(), nullptr, im.ps),
                    im.cfg.solver, candidates, alive);
      if (oracle.mlu <= 1e-12) {
        continue;
      }
      for (std::size_t s = 0; s < im.schemes.size(); ++s) {
        if (im.schemes[s].spec.type == "omniscient") {
          report.normalized[s].push_back(1.0);
        } else {
          const double mlu = evaluate(rerouted[s], dm, im.inc).mlu;
          report.normalized[s].push_back(mlu / oracle.mlu);
        }
      }
    }
  }
  for (std::size_t s = 0; s < im.schemes.size(); ++s) {
    report.summary.push_back(summarize(report.normalized[s]));
  }
  return report;
}

PerturbReport Experiment::run_perturbation(const std::vector<double>& alphas,
                                           PerturbMode mode) {
  Impl& im = *impl_;
  im.ensure_schemes();
  const EvalReport baseline = im.eval_on(im.trace, false);

  std::vector<double> sigma;
  if (mode == PerturbMode::kWorstCase) {
    sigma = worst_case_reorder(*im.train_stats);
  } else {
    sigma.resize(im.train_stats->variances().size());
    for (std::size_t i = 0; i < sigma.size(); ++i) {
      sigma[i] = std::sqrt(im.train_stats->variances()[i]);
    }
  }

  PerturbReport report;
  report.schemes = baseline.schemes;
  report.alphas = alphas;
  for (double alpha : alphas) {
    // Perturb the test segment only; training history stays intact. The
    // same seed couples the noise field across alphas.
    TrafficTrace tail;
    tail.snapshots.assign(im.trace.snapshots.begin() + im.train_end,
                          im.trace.snapshots.end());
    const TrafficTrace injected =
        inject_fluctuation(tail, sigma, alpha, im.cfg.seeds.perturb);
    TrafficTrace perturbed = im.trace;
    for (std::size_t i = 0; i < injected.size(); ++i) {
      perturbed.snapshots[im.train_end + i] = injected.snapshots[i];
    }
    const EvalReport run = im.eval_on(perturbed, false);
    std::vector<double> mean_row, p90_row;
    for (std::size_t s = 0; s < run.schemes.size(); ++s) {
      mean_row.push_back(100.0 * (run.summary[s].mean - baseline.summary[s].mean) /
                         baseline.summary[s].mean);
      p90_row.push_back(100.0 * (run.summary[s].p90 - baseline.summary[s].p90) /
                        baseline.summary[s].p90);
    }
    report.mean_degradation_pct.push_back(std::move(mean_row));
    report.p90_degradation_pct.push_back(std::move(p90_row));
  }
  return report;
}

InterpretReport Experiment::run_interpret() {
  Impl& im = *impl_;
  im.ensure_schemes();
  const std::size_t start = im.eval_start();
  if (start >= im.trace.size()) {
    throw DataError("no test snapshots after the training split");
  }
  InterpretReport report;
  report.pairs = im.ps.sd_pairs();
  report.variance = im.train_stats->variances_for(im.ps.sd_pairs());
  const double vmax =
      *std::max_element(report.variance.begin(), report.variance.end());
  std::vector<double> norm_variance = report.variance;
  if (vmax > 0.0) {
    for (double& v : norm_variance) {
      v /= vmax;
    }
  }
  const double scale = smallest_path_capacity(im.ps);

  report.mean_smax.resize(im.schemes.size());
  for (std::size_t s = 0; s < im.schemes.size(); ++s) {
    report.schemes.push_back(im.schemes[s].spec.name);
    report.mean_smax[s].assign(im.ps.sd_count(), 0.0);
  }
  std::size_t tested = 0;
  for (std::size_t t = start; t < im.trace.size(); ++t) {
    ++tested;
    for (std::size_t s = 0; s < im.schemes.size(); ++s) {
      TEConfig config;
      if (im.schemes[s].spec.type == "omniscient") {
        config = omniscient(im.trace.snapshots[t], im.ps, im.inc,
                            im.cfg.solver)
                     .config;
      } else {
        config = im.decide(im.schemes[s], im.trace, t);
      }
      const auto smax = max_sensitivity_per_sd(config, im.ps);
      for (std::size_t sd = 0; sd < im.ps.sd_count(); ++sd) {
        report.mean_smax[s][sd] += smax[sd] * scale;
      }
    }
  }
  for (std::size_t s = 0; s < im.schemes.size(); ++s) {
    for (double& v : report.mean_smax[s]) {
      v /= static_cast<double>(tested);
    }
    report.spearman_corr.push_back(
        spearman(report.variance, report.mean_smax[s]));
  }
  report.variance = std::move(norm_variance);
  return report;
}

CharacterizeReport Experiment::run_characterize(int window) {
  Impl& im = *impl_;
  if (im.trace.size() < 2) {
    throw DataError("trace too short to characterize");
  }
  return CharacterizeReport{
      window, cosine_profile(im.trace, window),
      compute_stats(im.trace, 0, im.trace.size())};
}

std::vector<std::pair<std::string, std::vector<double>>>
Experiment::train_schemes() {
  impl_->ensure_schemes();
  std::vector<std::pair<std::string, std::vector<double>>> logs;
  for (const auto& prep : impl_->schemes) {
    if (prep.spec.type == "neural" && !prep.train_log.empty()) {
      logs.emplace_back(prep.spec.name, prep.train_log);
    }
  }
  return logs;
}

TimingReport Experiment::run_timing() {
  Impl& im = *impl_;
  im.ensure_schemes();
  const EvalReport run = im.eval_on(im.trace, true);
  TimingReport report;
  report.schemes = run.schemes;
  report.mean_decision_seconds = run.mean_decision_seconds;
  report.precompute_seconds = run.precompute_seconds;
  report.path_setup_seconds = run.path_setup_seconds;
  return report;
}

double tune_gamma(const TrafficTrace& trace, const PathSets& ps,
                  const Incidence& inc, const TrainOptions& base,
                  const std::vector<double>& grid, const SolveOptions& solver) {
  if (grid.empty()) {
    throw ConfigError("gamma grid is empty");
  }
  // Hold out the last tenth of the training range for validation.
  const std::size_t n = trace.size();
  const std::size_t train_end =
      static_cast<std::size_t>(base.split * static_cast<double>(n));
  const double head_split =
      0.9 * base.split;
  const std::size_t head_end =
      static_cast<std::size_t>(head_split * static_cast<double>(n));
  if (head_end <= static_cast<std::size_t>(base.h) + 2 ||
      head_end + 2 > train_end) {
    throw DataError("training range too short for a gamma sweep");
  }

  struct Candidate {
    double gamma = 0.0;
    double mean = 0.0;
    double severe = 0.0;
  };
  std::vector<double> gammas;
  gammas.push_back(0.0);
  gammas.insert(gammas.end(), grid.begin(), grid.end());

  std::vector<Candidate> scored;
  std::vector<Mlp> models;
  for (double gamma : gammas) {
    TrainOptions opts = base;
    opts.split = head_split;
    opts.gamma = gamma;
    models.push_back(train(trace, ps, inc, opts).model);
  }
  std::vector<std::vector<double>> normalized(gammas.size());
  for (std::size_t t = std::max<std::size_t>(head_end,
                                             static_cast<std::size_t>(base.h));
       t < train_end; ++t) {
    const std::span<const DemandMatrix> window(
        trace.snapshots.data() + t - base.h, base.h);
    std::vector<TEConfig> configs(gammas.size());
    std::vector<TEConfig> candidates;
    for (std::size_t i = 0; i < gammas.size(); ++i) {
      configs[i] = forward(models[i], ps, window);
      candidates.push_back(configs[i]);
    }
    const SolveResult omni =
        omniscient(trace.snapshots[t], ps, inc, solver, candidates);
    if (omni.mlu <= 1e-12) {
      continue;
    }
    for (std::size_t i = 0; i < gammas.size(); ++i) {
      normalized[i].push_back(
          evaluate(configs[i], trace.snapshots[t], inc).mlu / omni.mlu);
    }
  }
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    const SummaryStats s = summarize(normalized[i]);
    scored.push_back({gammas[i], s.mean, s.severe_fraction});
  }
  const Candidate& zero = scored.front();
  const Candidate* best = nullptr;
  for (std::size_t i = 1; i < scored.size(); ++i) {
    const Candidate& c = scored[i];
    if (c.mean > zero.mean * 1.03) {
      continue;
    }
    if (best == nullptr || c.severe < best->severe ||
        (c.severe == best->severe && c.mean < best->mean)) {
      best = &c;
    }
  }
  if (best == nullptr) {
    // Nothing meets the mean budget; fall back to the lowest-mean gamma > 0.
    for (std::size_t i = 1; i < scored.size(); ++i) {
      if (best == nullptr || scored[i].mean < best->mean) {
        best = &scored[i];
      }
    }
  }
  return best->gamma;
}

// ---------------------------------------------------------------------------
// Report writers.

void write_eval_report(const EvalReport& r, const std::string& dir) {
  {
    auto out = open_out(dir, "eval_metrics.csv");
    std::string line = "snapshot";
    for (const auto& name : r.schemes) {
      line += "," + name;
    }
    out << line << "\n";
    for (std::size_t i = 0; i < r.snapshots.size(); ++i) {
      line = std::to_string(r.snapshots[i]);
      for (std::size_t s = 0; s < r.schemes.size(); ++s) {
        line.push_back(',');
        append_double(line, r.normalized[s][i]);
      }
      out << line << "\n";
    }
  }
  {
    nlohmann::json j;
    j["skipped_snapshots"] = r.skipped;
    j["evaluated_snapshots"] = r.snapshots.size();
    nlohmann::json schemes;
    for (std::size_t s = 0; s < r.schemes.size(); ++s) {
      nlohmann::json js;
      js["mean"] = r.summary[s].mean;
      js["p25"] = r.summary[s].p25;
      js["p50"] = r.summary[s].p50;
      js["p75"] = r.summary[s].p75;
      js["p90"] = r.summary[s].p90;
      js["p99"] = r.summary[s].p99;
      js["p100"] = r.summary[s].p100;
      js["severe_congestion_fraction"] = r.summary[s].severe_fraction;
      schemes[r.schemes[s]] = std::move(js);
    }
    j["schemes"] = std::move(schemes);
    auto out = open_out(dir, "eval_summary.json");
    out << j.dump(2) << "\n";
  }
  {
    auto out = open_out(dir, "eval_timing.csv");
    out << "scheme,mean_decision_seconds,precompute_seconds\n";
    for (std::size_t s = 0; s < r.schemes.size(); ++s) {
      std::string line = r.schemes[s];
      line.push_back(',');
      append_double(line, r.mean_decision_seconds[s]);
      line.push_back(',');
      append_double(line, r.precompute_seconds[s]);
      out << line << "\n";
    }
    std::string line = "path_setup,";
    append_double(line, r.path_setup_seconds);
    line += ",0";
    out << line << "\n";
  }
}

void write_failure_report(const FailureReport& r, const std::string& dir) {
  {
    auto out = open_out(dir, "failures_metrics.csv");
    std::string header = "sample";
    for (const auto& name : r.schemes) {
      header += "," + name;
    }
    out << header << "\n";
    const std::size_t rows = r.normalized.empty() ? 0 : r.normalized[0].size();
    for (std::size_t i = 0; i < rows; ++i) {
      std::string line = std::to_string(i);
      for (std::size_t s = 0; s < r.schemes.size(); ++s) {
        line.push_back(',');
        append_double(line, r.normalized[s][i]);
      }
      out << line << "\n";
    }
  }
  nlohmann::json j;
  j["num_failed"] = r.num_failed;
  j["trials"] = r.trials;
  j["disconnected_trials"] = r.disconnected_trials;
  nlohmann::json schemes;
  for (std::size_t s = 0; s < r.schemes.size(); ++s) {
    nlohmann::json js;
    js["mean"] = r.summary[s].mean;
    js["p90"] = r.summary[s].p90;
    js["p100"] = r.summary[s].p100;
    js["severe_congestion_fraction"] = r.summary[s].severe_fraction;
    schemes[r.schemes[s]] = std::move(js);
  }
  j["schemes"] = std::move(schemes);
  auto out = open_out(dir, "failures_summary.json");
  out << j.dump(2) << "\n";
}

void write_perturb_report(const PerturbReport& r, const std::string& dir) {
  {
    auto out = open_out(dir, "perturb_table.csv");
    out << "alpha,scheme,mean_degradation_pct,p90_degradation_pct\n";
    for (std::size_t a = 0; a < r.alphas.size(); ++a) {
      for (std::size_t s = 0; s < r.schemes.size(); ++s) {
        std::string line;
        append_double(line, r.alphas[a]);
        line += "," + r.schemes[s] + ",";
        append_double(line, r.mean_degradation_pct[a][s]);
        line.push_back(',');
        append_double(line, r.p90_degradation_pct[a][s]);
        out << line << "\n";
      }
    }
  }
  nlohmann::json j;
  j["alphas"] = r.alphas;
  nlohmann::json schemes;
  for (std::size_t s = 0; s < r.schemes.size(); ++s) {
    nlohmann::json js;
    std::vector<double> mean_col, p90_col;
    for (std::size_t a = 0; a < r.alphas.size(); ++a) {
      mean_col.push_back(r.mean_degradation_pct[a][s]);
      p90_col.push_back(r.p90_degradation_pct[a][s]);
    }
    js["mean_degradation_pct"] = mean_col;
    js["p90_degradation_pct"] = p90_col;
    schemes[r.schemes[s]] = std::move(js);
  }
  j["schemes"] = std::move(schemes);
  auto out = open_out(dir, "perturb_summary.json");
  out << j.dump(2) << "\n";
}

void write_interpret_report(const InterpretReport& r, const std::string& dir) {
  {
    auto out = open_out(dir, "interpret.csv");
    std::string header = "sd_src,sd_dst,variance";
    for (const auto& name : r.schemes) {
      header += ",mean_smax_" + name;
    }
    out << header << "\n";
    for (std::size_t sd = 0; sd < r.pairs.size(); ++sd) {
      std::string line = std::to_string(r.pairs[sd].src) + "," +
                         std::to_string(r.pairs[sd].dst) + ",";
      append_double(line, r.variance[sd]);
      for (std::size_t s = 0; s < r.schemes.size(); ++s) {
        line.push_back(',');
        append_double(line, r.mean_smax[s][sd]);
      }
      out << line << "\n";
    }
  }
  nlohmann::json j;
  nlohmann::json schemes;
  for (std::size_t s = 0; s < r.schemes.size(); ++s) {
    schemes[r.schemes[s]] = {{"spearman", r.spearman_corr[s]}};
  }
  j["schemes"] = std::move(schemes);
  auto out = open_out(dir, "interpret_summary.json");
  out << j.dump(2) << "\n";
}

void write_characterize_report(const CharacterizeReport& r,
                               const std::string& dir) {
  {
    auto out = open_out(dir, "characterize_cosine.csv");
    out << "snapshot,max_cosine\n";
    for (std::size_t i = 0; i < r.cosine.size(); ++i) {
      std::string line = std::to_string(r.window + i);
      line.push_back(',');
      append_double(line, r.cosine[i]);
      out << line << "\n";
    }
  }
  std::filesystem::create_directories(dir);
  save_stats_csv(r.stats, dir + "/characterize_stats.csv");
}

void write_timing_report(const TimingReport& r, const std::string& dir) {
  auto out = open_out(dir, "timing.csv");
  out << "scheme,mean_decision_seconds,precompute_seconds\n";
  for (std::size_t s = 0; s < r.schemes.size(); ++s) {
    std::string line = r.schemes[s];
    line.push_back(',');
    append_double(line, r.mean_decision_seconds[s]);
    line.push_back(',');
    append_double(line, r.precompute_seconds[s]);
    out << line << "\n";
  }
  std::string line = "path_setup,";
  append_double(line, r.path_setup_seconds);
  line += ",0";
  out << line << "\n";
}

}  // namespace telab
