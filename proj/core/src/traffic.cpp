#include "telab/traffic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "telab/errors.hpp"
#include "telab/rng.hpp"

namespace telab {

DemandMatrix::DemandMatrix(int nodes, std::vector<double> values)
    : nodes_(nodes), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(nodes_) * nodes_) {
    throw DataError("demand matrix size mismatch");
  }
  for (int i = 0; i < nodes_; ++i) {
    for (int j = 0; j < nodes_; ++j) {
      const double v = at(i, j);
      if (i == j && v != 0.0) {
        throw DataError("demand matrix diagonal must be zero");
      }
      if (v < 0.0 || !std::isfinite(v)) {
        throw DataError("demand matrix entries must be nonnegative");
      }
    }
  }
}

void DemandMatrix::set(int i, int j, double v) {
  if (i == j && v != 0.0) {
    throw DataError("demand matrix diagonal must be zero");
  }
  if (v < 0.0 || !std::isfinite(v)) {
    throw DataError("demand matrix entries must be nonnegative");
  }
  values_[static_cast<std::size_t>(i) * nodes_ + j] = v;
}

std::vector<double> DemandMatrix::flatten(
    const std::vector<SdPair>& pairs) const {
  std::vector<double> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out[i] = at(pairs[i].src, pairs[i].dst);
  }
  return out;
}

std::vector<double> DemandMatrix::off_diagonal() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(nodes_) * (nodes_ - 1));
  for (int i = 0; i < nodes_; ++i) {
    for (int j = 0; j < nodes_; ++j) {
      if (i != j) {
        out.push_back(at(i, j));
      }
    }
  }
  return out;
}

double DemandMatrix::max_entry() const {
  double m = 0.0;
  for (double v : values_) {
    m = std::max(m, v);
  }
  return m;
}

TrafficStats::TrafficStats(int nodes, std::size_t begin, std::size_t end,
                           std::vector<double> mean,
                           std::vector<double> variance)
    : nodes_(nodes),
      begin_(begin),
      end_(end),
      mean_(std::move(mean)),
      variance_(std::move(variance)) {}

std::size_t TrafficStats::offdiag_index(int s, int d) const {
  return static_cast<std::size_t>(s) * (nodes_ - 1) + d - (d > s ? 1 : 0);
}

std::vector<double> TrafficStats::variances_for(
    const std::vector<SdPair>& pairs) const {
  std::vector<double> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out[i] = variance(pairs[i].src, pairs[i].dst);
  }
  return out;
}

TrafficTrace load_trace(const std::string& path, int num_nodes) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open trace file: " + path);
  }
  const std::size_t expected = static_cast<std::size_t>(num_nodes) * num_nodes;
  TrafficTrace trace;
  std::string line;
  std::size_t row = 0;
  bool warned = false;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) {
      continue;
    }
    std::vector<double> values;
    values.reserve(expected);
    const char* ptr = line.data();
    const char* end = line.data() + line.size();
    while (ptr < end) {
      double v = 0.0;
      auto [next, ec] = std::from_chars(ptr, end, v);
      if (ec != std::errc()) {
        throw DataError("trace parse error at row " + std::to_string(row) +
                        " field " + std::to_string(values.size() + 1));
      }
      values.push_back(v);
      ptr = next;
      if (ptr < end) {
        if (*ptr != ',') {
          throw DataError("trace parse error at row " + std::to_string(row) +
                          ": expected ','");
        }
        ++ptr;
      }
    }
    if (values.size() != expected) {
      throw DataError("trace row " + std::to_string(row) + " has " +
                      std::to_string(values.size()) + " fields, expected " +
                      std::to_string(expected));
    }
    for (int i = 0; i < num_nodes; ++i) {
      for (int j = 0; j < num_nodes; ++j) {
        double& v = values[static_cast<std::size_t>(i) * num_nodes + j];
        if (i == j && v != 0.0) {
          if (!warned) {
            std::cerr << "warning: nonzero diagonal in " << path << " row "
                      << row << "; forcing to zero\n";
            warned = true;
          }
          v = 0.0;
        }
        if (v < 0.0) {
          throw DataError("negative demand at row " + std::to_string(row) +
                          " entry (" + std::to_string(i) + "," +
                          std::to_string(j) + ")");
        }
      }
    }
    trace.snapshots.emplace_back(num_nodes, std::move(values));
  }
  return trace;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

void save_trace(const TrafficTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write trace file: " + path);
  }
  std::string line;
  for (const DemandMatrix& dm : trace.snapshots) {
    line.clear();
    const auto& values = dm.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i > 0) {
        line.push_back(',');
      }
      append_double(line, values[i]);
    }
    out << line << "\n";
  }
}

TrafficTrace gravity_synthesize(const Graph& g,
                                const std::vector<double>& weights,
                                double total, int count, double jitter,
                                std::uint64_t seed) {
  const int n = g.node_count();
  if (static_cast<int>(weights.size()) != n) {
    throw ConfigError("gravity weights length must equal node count");
  }
  for (double w : weights) {
    if (!(w > 0.0)) {
      throw ConfigError("gravity weights must be positive");
    }
  }
  if (!(total > 0.0) || count < 0 || jitter < 0.0) {
    throw ConfigError("invalid gravity parameters");
  }
  double denom = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) {
        denom += weights[i] * weights[j];
      }
    }
  }
  DemandMatrix base(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) {
        base.set(i, j, total * weights[i] * weights[j] / denom);
      }
    }
  }
  TrafficTrace trace;
  trace.snapshots.reserve(count);
  Rng rng(seed);
  for (int t = 0; t < count; ++t) {
    DemandMatrix dm(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) {
          continue;
        }
        const double scale = std::max(0.0, 1.0 + jitter * rng.normal());
        dm.set(i, j, base.at(i, j) * scale);
      }
    }
    trace.snapshots.push_back(std::move(dm));
  }
  return trace;
}

TrafficStats compute_stats(const TrafficTrace& trace, std::size_t begin,
                           std::size_t end) {
  if (end > trace.size() || begin >= end || end - begin < 2) {
    throw DataError("stats range must lie within the trace and have length >= 2");
  }
  const int n = trace.nodes();
  const std::size_t pairs = static_cast<std::size_t>(n) * (n - 1);
  std::vector<double> mean(pairs, 0.0);
  std::vector<double> var(pairs, 0.0);
  const double inv = 1.0 / static_cast<double>(end - begin);
  for (std::size_t t = begin; t < end; ++t) {
    std::size_t idx = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i != j) {
          mean[idx++] += trace.snapshots[t].at(i, j);
        }
      }
    }
  }
  for (double& m : mean) {
    m *= inv;
  }
  for (std::size_t t = begin; t < end; ++t) {
    std::size_t idx = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i != j) {
          const double d = trace.snapshots[t].at(i, j) - mean[idx];
          var[idx++] += d * d;
        }
      }
    }
  }
  for (double& v : var) {
    v *= inv;
  }
  return TrafficStats(n, begin, end, std::move(mean), std::move(var));
}

std::vector<double> cosine_profile(const TrafficTrace& trace, int window) {
  if (window < 1) {
    throw ConfigError("cosine window must be >= 1");
  }
  const std::size_t n = trace.size();
  std::vector<double> norms(n);
  for (std::size_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (double v : trace.snapshots[t].values()) {
      s += v * v;
    }
    norms[t] = std::sqrt(s);
  }
  std::vector<double> out;
  for (std::size_t t = window; t < n; ++t) {
    double best = 0.0;
    for (std::size_t s = t - window; s < t; ++s) {
      if (norms[t] == 0.0 || norms[s] == 0.0) {
        continue;  // zero vectors: similarity 0 by convention
      }
      double dot = 0.0;
      const auto& a = trace.snapshots[t].values();
      const auto& b = trace.snapshots[s].values();
      for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
      }
      best = std::max(best, dot / (norms[t] * norms[s]));
    }
    out.push_back(std::min(best, 1.0));
  }
  return out;
}

TrafficTrace inject_fluctuation(const TrafficTrace& trace,
                                const std::vector<double>& sigma_offdiag,
                                double alpha, std::uint64_t seed) {
  const int n = trace.nodes();
  const std::size_t pairs = static_cast<std::size_t>(n) * (n - 1);
  if (sigma_offdiag.size() != pairs) {
    throw DataError("sigma vector size mismatch");
  }
  if (alpha < 0.0) {
    throw ConfigError("alpha must be nonnegative");
  }
  TrafficTrace out;
  out.interval = trace.interval;
  out.snapshots.reserve(trace.size());
  Rng rng(seed);
  for (const DemandMatrix& dm : trace.snapshots) {
    DemandMatrix perturbed(n);
    std::size_t idx = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) {
          continue;
        }
        // One draw per off-diagonal entry regardless of sigma, so streams
        // stay aligned across sigma remappings.
        const double u = rng.normal();
        const double v = dm.at(i, j) + alpha * sigma_offdiag[idx++] * u;
        perturbed.set(i, j, std::max(0.0, v));
      }
    }
    out.snapshots.push_back(std::move(perturbed));
  }
  return out;
}

TrafficTrace inject_fluctuation(const TrafficTrace& trace,
                                const TrafficStats& stats, double alpha,
                                std::uint64_t seed) {
  if (stats.nodes() != trace.nodes()) {
    throw DataError("stats node count does not match trace");
  }
  std::vector<double> sigma(stats.variances().size());
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    sigma[i] = std::sqrt(stats.variances()[i]);
  }
  return inject_fluctuation(trace, sigma, alpha, seed);
}

std::vector<double> worst_case_reorder(const TrafficStats& stats) {
  const auto& var = stats.variances();
  const std::size_t n = var.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (var[a] != var[b]) {
      return var[a] < var[b];
    }
    return a < b;
  });
  std::vector<double> sigma(n);
  for (std::size_t r = 0; r < n; ++r) {
    sigma[order[r]] = std::sqrt(var[order[n - 1 - r]]);
  }
  return sigma;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) {
      ++j;
    }
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      ranks[order[k]] = avg;
    }
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw DataError("spearman inputs must have equal length");
  }
  if (x.size() < 2) {
    throw DataError("spearman needs at least two samples");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    return 0.0;
  }
  return sxy / std::sqrt(sxx * syy);
}

void save_stats_csv(const TrafficStats& stats, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write stats file: " + path);
  }
  out << "sd_src,sd_dst,mean,variance\n";
  const int n = stats.nodes();
  std::string line;
  for (int s = 0; s < n; ++s) {
    for (int d = 0; d < n; ++d) {
      if (s == d) {
        continue;
      }
      line.clear();
      line += std::to_string(s);
      line.push_back(',');
      line += std::to_string(d);
      line.push_back(',');
      append_double(line, stats.mean(s, d));
      line.push_back(',');
      append_double(line, stats.variance(s, d));
      out << line << "\n";
    }
  }
}

}  // namespace telab
