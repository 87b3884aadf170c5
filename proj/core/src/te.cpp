#include "telab/te.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "telab/errors.hpp"

namespace telab {

TEConfig uniform_config(const PathSets& ps) {
  TEConfig config;
  config.ratios.resize(ps.total_paths());
  for (std::size_t sd = 0; sd < ps.sd_count(); ++sd) {
    const double r = 1.0 / static_cast<double>(ps.group_size(sd));
    for (std::size_t p = ps.group_offset(sd);
         p < ps.group_offset(sd) + ps.group_size(sd); ++p) {
      config.ratios[p] = r;
    }
  }
  return config;
}

bool is_valid_config(const TEConfig& config, const PathSets& ps, double tol) {
  if (config.ratios.size() != ps.total_paths()) {
    return false;
  }
  for (double r : config.ratios) {
    if (!(r >= 0.0 && r <= 1.0 + tol) || !std::isfinite(r)) {
      return false;
    }
  }
  for (std::size_t sd = 0; sd < ps.sd_count(); ++sd) {
    double sum = 0.0;
    for (std::size_t p = ps.group_offset(sd);
         p < ps.group_offset(sd) + ps.group_size(sd); ++p) {
      sum += config.ratios[p];
    }
    if (std::abs(sum - 1.0) > tol) {
      return false;
    }
  }
  return true;
}

LinkLoad evaluate(const TEConfig& config, const DemandMatrix& dm,
                  const Incidence& inc) {
  if (config.ratios.size() != inc.path_count()) {
    throw DataError("config size does not match incidence");
  }
  if (dm.nodes() != inc.node_count) {
    throw DataError("demand matrix node count does not match incidence");
  }
  // FlowOnEdge = PathToEdge^T (SDtoPath^T DM ⊙ R), done as index gathers.
  std::vector<double> dm_by_sd(inc.sd_count());
  for (std::size_t sd = 0; sd < inc.sd_count(); ++sd) {
    dm_by_sd[sd] = dm.at(inc.sd_pairs[sd].src, inc.sd_pairs[sd].dst);
  }
  LinkLoad load;
  load.flow.assign(inc.constraint_count(), 0.0);
  for (std::size_t p = 0; p < inc.path_count(); ++p) {
    const double flow_on_path = dm_by_sd[inc.path_sd[p]] * config.ratios[p];
    if (flow_on_path == 0.0) {
      continue;
    }
    for (int c : inc.constraints_of_path(p)) {
      load.flow[c] += flow_on_path;
    }
  }
  load.utilization.resize(load.flow.size());
  load.mlu = 0.0;
  load.argmax = inc.constraint_count() > 0 ? 0 : -1;
  for (std::size_t c = 0; c < load.flow.size(); ++c) {
    load.utilization[c] = load.flow[c] / inc.capacities[c];
    if (load.utilization[c] > load.mlu) {
      load.mlu = load.utilization[c];
      load.argmax = static_cast<int>(c);
    }
  }
  return load;
}

std::vector<double> sensitivities(const TEConfig& config, const PathSets& ps) {
  if (config.ratios.size() != ps.total_paths()) {
    throw DataError("config size does not match path sets");
  }
  std::vector<double> out(config.ratios.size());
  for (std::size_t p = 0; p < config.ratios.size(); ++p) {
    out[p] = config.ratios[p] / ps.path(p).capacity;
  }
  return out;
}

std::vector<double> max_sensitivity_per_sd(const TEConfig& config,
                                           const PathSets& ps) {
  const auto s = sensitivities(config, ps);
  std::vector<double> out(ps.sd_count(), 0.0);
  for (std::size_t sd = 0; sd < ps.sd_count(); ++sd) {
    double best = 0.0;
    for (std::size_t p = ps.group_offset(sd);
         p < ps.group_offset(sd) + ps.group_size(sd); ++p) {
      best = std::max(best, s[p]);
    }
    out[sd] = best;
  }
  return out;
}

std::vector<char> surviving_paths(const PathSets& ps,
                                  const std::vector<int>& failed_constraints) {
  std::vector<char> alive(ps.total_paths(), 1);
  if (failed_constraints.empty()) {
    return alive;
  }
  std::vector<char> failed;
  int max_c = 0;
  for (int c : failed_constraints) {
    max_c = std::max(max_c, c);
  }
  failed.assign(max_c + 1, 0);
  for (int c : failed_constraints) {
    failed[c] = 1;
  }
  for (std::size_t p = 0; p < ps.total_paths(); ++p) {
    for (int c : ps.path(p).edges) {
      if (c <= max_c && failed[c]) {
        alive[p] = 0;
        break;
      }
    }
  }
  return alive;
}

TEConfig reroute_on_failure(const TEConfig& config, const PathSets& ps,
                            const std::vector<int>& failed_constraints,
                            EmptyGroupPolicy policy) {
  if (config.ratios.size() != ps.total_paths()) {
    throw DataError("config size does not match path sets");
  }
  const auto alive = surviving_paths(ps, failed_constraints);
  TEConfig out = config;
  for (std::size_t sd = 0; sd < ps.sd_count(); ++sd) {
    const std::size_t lo = ps.group_offset(sd);
    const std::size_t hi = lo + ps.group_size(sd);
    std::size_t survivors = 0;
    double surviving_ratio = 0.0;
    for (std::size_t p = lo; p < hi; ++p) {
      if (alive[p]) {
        ++survivors;
        surviving_ratio += config.ratios[p];
      }
    }
    if (survivors == ps.group_size(sd)) {
      continue;  // nothing failed in this group
    }
    if (survivors == 0) {
      if (policy == EmptyGroupPolicy::kKeepRatios) {
        continue;
      }
      const SdPair& pair = ps.sd_pairs()[sd];
      throw NumericalError("all paths failed for SD pair (" +
                           std::to_string(pair.src) + "," +
                           std::to_string(pair.dst) + ")");
    }
    if (surviving_ratio > 0.0) {
      const double scale = 1.0 / surviving_ratio;
      for (std::size_t p = lo; p < hi; ++p) {
        out.ratios[p] = alive[p] ? config.ratios[p] * scale : 0.0;
      }
    } else {
      const double r = 1.0 / static_cast<double>(survivors);
      for (std::size_t p = lo; p < hi; ++p) {
        out.ratios[p] = alive[p] ? r : 0.0;
      }
    }
  }
  return out;
}

void save_config(const TEConfig& config, const PathSets& ps,
                 const std::string& path) {
  if (config.ratios.size() != ps.total_paths()) {
    throw DataError("config size does not match path sets");
  }
  nlohmann::json j;
  auto pairs = nlohmann::json::array();
  auto ratios = nlohmann::json::array();
  for (std::size_t sd = 0; sd < ps.sd_count(); ++sd) {
    pairs.push_back({ps.sd_pairs()[sd].src, ps.sd_pairs()[sd].dst});
    auto group = nlohmann::json::array();
    for (std::size_t p = ps.group_offset(sd);
         p < ps.group_offset(sd) + ps.group_size(sd); ++p) {
      group.push_back(config.ratios[p]);
    }
    ratios.push_back(std::move(group));
  }
  j["sd_pairs"] = std::move(pairs);
  j["ratios"] = std::move(ratios);
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write config file: " + path);
  }
  out << j.dump(2) << "\n";
}

}  // namespace telab
