#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "telab/neural.hpp"
#include "telab/optimize.hpp"
#include "telab/te.hpp"
#include "telab/topology.hpp"
#include "telab/traffic.hpp"

namespace telab {

struct GravitySpec {
  std::vector<double> weights;  // empty = uniform
  double total = 1.0;
  int count = 0;
  double jitter = 0.0;
};

struct SchemeSpec {
  std::string name;
  std::string type;  // omniscient | prediction | desensitization | neural
  // desensitization
  BoundSpec bound;
  int window = 0;  // 0 = use the experiment H
  // neural
  double gamma = 0.0;
  int epochs = 100;
  int batch = 32;
  double lr = 1e-3;
  std::string model_path;  // load if present, else train and save here
  bool tune_gamma = false;
  std::vector<double> gamma_grid;  // default {0.1, 1, 10}
};

struct ExperimentConfig {
  std::string topology_path;
  std::string trace_path;               // exclusive with gravity
  std::optional<GravitySpec> gravity;
  int k = 3;
  int h = 12;
  double split = 0.75;
  std::vector<SchemeSpec> schemes;
  SolveOptions solver;
  struct Seeds {
    std::uint64_t gravity = 1;
    std::uint64_t perturb = 2;
    std::uint64_t failures = 3;
    std::uint64_t train = 4;
  } seeds;
  std::string out_dir = ".";
};

ExperimentConfig load_experiment_config(const std::string& path);

struct SummaryStats {
  double mean = 0.0;
  double p25 = 0.0, p50 = 0.0, p75 = 0.0, p90 = 0.0, p99 = 0.0, p100 = 0.0;
  double severe_fraction = 0.0;  // share of values > 2
};

SummaryStats summarize(const std::vector<double>& normalized_mlu);

struct EvalReport {
  std::vector<std::string> schemes;
  std::vector<std::size_t> snapshots;            // evaluated snapshot indices
  std::vector<std::vector<double>> normalized;   // [scheme][snapshot]
  std::size_t skipped = 0;                       // near-zero optimum MLU
  std::vector<SummaryStats> summary;             // per scheme
  // Wall-clock measurements; excluded from the deterministic outputs.
  std::vector<double> mean_decision_seconds;
  std::vector<double> precompute_seconds;
  double path_setup_seconds = 0.0;
};

struct FailureReport {
  int num_failed = 0;
  int trials = 0;
  std::size_t disconnected_trials = 0;
  std::vector<std::string> schemes;
  std::vector<std::vector<double>> normalized;  // pooled over trials
  std::vector<SummaryStats> summary;
};

struct PerturbReport {
  std::vector<std::string> schemes;
  std::vector<double> alphas;
  // [alpha][scheme], percent change relative to the unperturbed run.
  std::vector<std::vector<double>> mean_degradation_pct;
  std::vector<std::vector<double>> p90_degradation_pct;
};

struct InterpretReport {
  std::vector<SdPair> pairs;
  std::vector<double> variance;                // normalized to max 1
  std::vector<std::string> schemes;
  std::vector<std::vector<double>> mean_smax;  // [scheme][sd], normalized caps
  std::vector<double> spearman_corr;           // per scheme
};

struct CharacterizeReport {
  int window = 0;
  std::vector<double> cosine;  // entry i is snapshot window + i
  TrafficStats stats;
};

struct TimingReport {
  std::vector<std::string> schemes;
  std::vector<double> mean_decision_seconds;
  std::vector<double> precompute_seconds;
  double path_setup_seconds = 0.0;
};

enum class PerturbMode { kAligned, kWorstCase };

// Owns the loaded topology, paths, trace, and trained models for one
// experiment config. Decisions for snapshot t only ever see a window of
// snapshots strictly before t.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg);
  ~Experiment();

  EvalReport run_eval();
  FailureReport run_failures(int num_failed, int trials, std::uint64_t seed);
  PerturbReport run_perturbation(const std::vector<double>& alphas,
                                 PerturbMode mode);
  InterpretReport run_interpret();
  CharacterizeReport run_characterize(int window);
  TimingReport run_timing();

  // Trains (or loads) every configured neural scheme; returns per-scheme
  // epoch-loss logs for the ones that were trained in this run.
  std::vector<std::pair<std::string, std::vector<double>>> train_schemes();

  const PathSets& path_sets() const;
  const Incidence& incidence() const;
  const TrafficTrace& trace() const;
  const TrafficStats& train_stats() const;
  std::size_t train_end() const;
  const ExperimentConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Validation sweep for the loss weight: trains each candidate on a head
// slice of the training range, scores on the held-out training tail, and
// picks the gamma > 0 with the fewest severe-congestion events whose mean
// normalized MLU stays within 3% of the gamma = 0 candidate.
double tune_gamma(const TrafficTrace& trace, const PathSets& ps,
                  const Incidence& inc, const TrainOptions& base,
                  const std::vector<double>& grid, const SolveOptions& solver);

// Report writers (CSV + JSON under `dir`). Timing data goes to separate
// files so the metric outputs stay byte-identical across runs.
void write_eval_report(const EvalReport& r, const std::string& dir);
void write_failure_report(const FailureReport& r, const std::string& dir);
void write_perturb_report(const PerturbReport& r, const std::string& dir);
void write_interpret_report(const InterpretReport& r, const std::string& dir);
void write_characterize_report(const CharacterizeReport& r,
                               const std::string& dir);
void write_timing_report(const TimingReport& r, const std::string& dir);

}  // namespace telab
