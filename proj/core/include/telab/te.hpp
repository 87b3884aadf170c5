#pragma once

#include <string>
#include <vector>

#include "telab/topology.hpp"
#include "telab/traffic.hpp"

namespace telab {

// Split ratios in global path-index order; each SD group sums to 1.
struct TEConfig {
  std::vector<double> ratios;
};

// Uniform split within every SD group.
TEConfig uniform_config(const PathSets& ps);

bool is_valid_config(const TEConfig& config, const PathSets& ps,
                     double tol = 1e-6);

struct LinkLoad {
  std::vector<double> flow;         // per constraint
  std::vector<double> utilization;  // flow / capacity
  double mlu = 0.0;
  int argmax = -1;  // lowest constraint index on ties
};

// Flow per constraint and the max link utilization for (config, demand).
LinkLoad evaluate(const TEConfig& config, const DemandMatrix& dm,
                  const Incidence& inc);

// Per-path sensitivity r_p / C_p; demand-independent.
std::vector<double> sensitivities(const TEConfig& config, const PathSets& ps);

// Per-SD maximum of the path sensitivities in the group.
std::vector<double> max_sensitivity_per_sd(const TEConfig& config,
                                           const PathSets& ps);

enum class EmptyGroupPolicy {
  kError,        // throw when a group loses every path
  kKeepRatios,   // leave the group untouched (harness use: zero-demand SDs)
};

// A path fails iff it traverses a failed constraint. Surviving paths in
// each group are rescaled to sum to 1; a group whose survivors all carried
// ratio 0 splits uniformly across survivors.
TEConfig reroute_on_failure(const TEConfig& config, const PathSets& ps,
                            const std::vector<int>& failed_constraints,
                            EmptyGroupPolicy policy = EmptyGroupPolicy::kError);

// Per-path survival mask for a failed constraint set.
std::vector<char> surviving_paths(const PathSets& ps,
                                  const std::vector<int>& failed_constraints);

// Config export: {"sd_pairs": [[s,d],...], "ratios": [[...],...]}.
void save_config(const TEConfig& config, const PathSets& ps,
                 const std::string& path);

}  // namespace telab
