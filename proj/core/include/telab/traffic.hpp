#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "telab/topology.hpp"

namespace telab {

// One traffic snapshot: |V| x |V| nonnegative demands with a zero diagonal.
class DemandMatrix {
 public:
  explicit DemandMatrix(int nodes)
      : nodes_(nodes), values_(static_cast<std::size_t>(nodes) * nodes, 0.0) {}
  DemandMatrix(int nodes, std::vector<double> values);

  int nodes() const { return nodes_; }
  double at(int i, int j) const {
    return values_[static_cast<std::size_t>(i) * nodes_ + j];
  }
  void set(int i, int j, double v);
  const std::vector<double>& values() const { return values_; }

  // Demand per SD pair, in `pairs` order.
  std::vector<double> flatten(const std::vector<SdPair>& pairs) const;
  // Off-diagonal entries row-major (the |V|*(|V|-1) vector).
  std::vector<double> off_diagonal() const;

  double max_entry() const;
  friend bool operator==(const DemandMatrix&, const DemandMatrix&) = default;

 private:
  int nodes_;
  std::vector<double> values_;  // row-major
};

struct TrafficTrace {
  std::vector<DemandMatrix> snapshots;
  std::string interval;  // metadata only

  std::size_t size() const { return snapshots.size(); }
  int nodes() const { return snapshots.empty() ? 0 : snapshots[0].nodes(); }
};

// Per-SD mean and population (1/N) variance over [begin, end).
class TrafficStats {
 public:
  TrafficStats(int nodes, std::size_t begin, std::size_t end,
               std::vector<double> mean, std::vector<double> variance);

  int nodes() const { return nodes_; }
  std::size_t range_begin() const { return begin_; }
  std::size_t range_end() const { return end_; }

  double mean(int s, int d) const { return mean_[offdiag_index(s, d)]; }
  double variance(int s, int d) const { return variance_[offdiag_index(s, d)]; }

  // Off-diagonal row-major vectors (one entry per ordered pair).
  const std::vector<double>& means() const { return mean_; }
  const std::vector<double>& variances() const { return variance_; }

  // Values gathered in `pairs` order.
  std::vector<double> variances_for(const std::vector<SdPair>& pairs) const;

  std::size_t offdiag_index(int s, int d) const;

 private:
  int nodes_;
  std::size_t begin_, end_;
  std::vector<double> mean_, variance_;
};

// Headerless CSV, one snapshot per row, |V|^2 row-major values. Nonzero
// diagonal entries are zeroed with a warning to stderr; negatives reject.
TrafficTrace load_trace(const std::string& path, int num_nodes);
void save_trace(const TrafficTrace& trace, const std::string& path);

// Gravity-model synthesis: base demand D_ij = total * w_i w_j / sum_{a!=b}
// w_a w_b, each snapshot entry scaled by max(0, 1 + jitter * N(0,1)).
TrafficTrace gravity_synthesize(const Graph& g,
                                const std::vector<double>& weights,
                                double total, int count, double jitter,
                                std::uint64_t seed);

TrafficStats compute_stats(const TrafficTrace& trace, std::size_t begin,
                           std::size_t end);

// For each t >= window: max cosine similarity between snapshot t and the
// preceding `window` snapshots. Entry i corresponds to snapshot window + i.
std::vector<double> cosine_profile(const TrafficTrace& trace, int window);

// Adds alpha * sigma_sd * N(0,1) to every off-diagonal entry (one draw per
// entry per snapshot, row-major order), clamping at zero.
TrafficTrace inject_fluctuation(const TrafficTrace& trace,
                                const std::vector<double>& sigma_offdiag,
                                double alpha, std::uint64_t seed);
TrafficTrace inject_fluctuation(const TrafficTrace& trace,
                                const TrafficStats& stats, double alpha,
                                std::uint64_t seed);

// Reverses the magnitude order of per-SD sigmas: the pair with the r-th
// smallest variance receives the sigma of the (N-1-r)-th smallest. Returns
// the remapped sigma vector (off-diagonal row-major), for inject_fluctuation.
std::vector<double> worst_case_reorder(const TrafficStats& stats);

// Spearman rank correlation, average ranks on ties. Returns 0 when either
// side has no rank variation.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Stats export: CSV with columns sd_src, sd_dst, mean, variance.
void save_stats_csv(const TrafficStats& stats, const std::string& path);

}  // namespace telab
