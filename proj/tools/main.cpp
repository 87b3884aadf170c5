// Command-line front end: path precomputation, traffic synthesis, training,
// and the evaluation / robustness experiment reports.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "telab/errors.hpp"
#include "telab/harness.hpp"
#include "telab/neural.hpp"
#include "telab/optimize.hpp"
#include "telab/topology.hpp"
#include "telab/traffic.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::int64_t> seed;
};

telab::ExperimentConfig load_config(const GlobalArgs& args) {
  if (args.config_path.empty()) {
    throw telab::ConfigError("--config is required");
  }
  telab::ExperimentConfig cfg =
      telab::load_experiment_config(args.config_path);
  if (!args.out_dir.empty()) {
    cfg.out_dir = args.out_dir;
  }
  return cfg;
}

void write_train_logs(
    const std::vector<std::pair<std::string, std::vector<double>>>& logs,
    const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, losses] : logs) {
    std::ofstream out(dir + "/train_log_" + name + ".csv");
    out << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < losses.size(); ++e) {
      char buf[32];
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), losses[e]);
      out << e << "," << std::string_view(buf, ptr) << "\n";
    }
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Traffic-engineering experiment toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // accept the global flags after the subcommand too

  GlobalArgs args;
  app.add_option("--config", args.config_path, "Experiment config (JSON)");
  app.add_option("--out", args.out_dir, "Output directory override");
  std::int64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value,
                                  "Seed override for the invoked command");

  auto* cmd_paths = app.add_subcommand(
      "paths", "Enumerate candidate paths and write a path-set file");
  auto* cmd_synth =
      app.add_subcommand("synth", "Synthesize a gravity-model trace CSV");
  auto* cmd_train =
      app.add_subcommand("train", "Train the configured neural schemes");
  auto* cmd_eval = app.add_subcommand(
      "eval", "Evaluate all schemes over the test trace");
  auto* cmd_failures =
      app.add_subcommand("failures", "Random link-failure study");
  int num_failed = 1;
  int trials = 10;
  cmd_failures->add_option("--num-failed", num_failed, "Links per trial");
  cmd_failures->add_option("--trials", trials, "Number of trials");
  auto* cmd_perturb =
      app.add_subcommand("perturb", "Fluctuation-injection study");
  std::vector<double> alphas{0.2, 0.5, 1.0, 2.0};
  std::string mode = "aligned";
  cmd_perturb->add_option("--alpha", alphas, "Fluctuation factors");
  cmd_perturb->add_option("--mode", mode, "aligned | worst_case");
  auto* cmd_interpret = app.add_subcommand(
      "interpret", "Per-SD variance vs. mean max sensitivity export");
  auto* cmd_characterize =
      app.add_subcommand("characterize", "Cosine-profile and variance export");
  int window = 0;
  cmd_characterize->add_option("--window", window,
                               "History window (default: config H)");
  auto* cmd_timing =
      app.add_subcommand("timing", "Per-scheme decision-time report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (seed_opt->count() > 0) {
      args.seed = seed_value;
    }
    telab::ExperimentConfig cfg = load_config(args);

    if (cmd_paths->parsed()) {
      const telab::Graph g = telab::load_topology(cfg.topology_path);
      const telab::PathSets ps = telab::build_path_sets(g, cfg.k);
      std::filesystem::create_directories(cfg.out_dir);
      telab::save_path_sets(ps, cfg.k, cfg.out_dir + "/paths.json");
      std::cout << "wrote " << cfg.out_dir << "/paths.json (" << ps.sd_count()
                << " SD pairs, " << ps.total_paths() << " paths, "
                << ps.unreachable().size() << " unreachable)\n";
      return kExitOk;
    }
    if (cmd_synth->parsed()) {
      if (!cfg.gravity.has_value()) {
        throw telab::ConfigError("synth needs a \"gravity\" config section");
      }
      const telab::Graph g = telab::load_topology(cfg.topology_path);
      telab::GravitySpec spec = *cfg.gravity;
      if (spec.weights.empty()) {
        spec.weights.assign(g.node_count(), 1.0);
      }
      const std::uint64_t seed =
          args.seed ? static_cast<std::uint64_t>(*args.seed)
                    : cfg.seeds.gravity;
      const telab::TrafficTrace trace = telab::gravity_synthesize(
          g, spec.weights, spec.total, spec.count, spec.jitter, seed);
      std::filesystem::create_directories(cfg.out_dir);
      telab::save_trace(trace, cfg.out_dir + "/trace.csv");
      std::cout << "wrote " << cfg.out_dir << "/trace.csv (" << trace.size()
                << " snapshots)\n";
      return kExitOk;
    }

    if (args.seed) {
      if (cmd_train->parsed()) {
        cfg.seeds.train = static_cast<std::uint64_t>(*args.seed);
      } else if (cmd_perturb->parsed()) {
        cfg.seeds.perturb = static_cast<std::uint64_t>(*args.seed);
      } else if (cmd_failures->parsed()) {
        cfg.seeds.failures = static_cast<std::uint64_t>(*args.seed);
      }
    }
    telab::Experiment experiment(std::move(cfg));
    const std::string& out = experiment.config().out_dir;

    if (cmd_train->parsed()) {
      const auto logs = experiment.train_schemes();
      write_train_logs(logs, out);
      std::cout << "trained " << logs.size() << " scheme(s); logs in " << out
                << "\n";
    } else if (cmd_eval->parsed()) {
      const telab::EvalReport report = experiment.run_eval();
      telab::write_eval_report(report, out);
      std::cout << "evaluated " << report.snapshots.size() << " snapshots ("
                << report.skipped << " skipped); reports in " << out << "\n";
    } else if (cmd_failures->parsed()) {
      const telab::FailureReport report = experiment.run_failures(
          num_failed, trials, experiment.config().seeds.failures);
      telab::write_failure_report(report, out);
      std::cout << "ran " << trials << " trials ("
                << report.disconnected_trials << " disconnected); reports in "
                << out << "\n";
    } else if (cmd_perturb->parsed()) {
      telab::PerturbMode pm;
      if (mode == "aligned") {
        pm = telab::PerturbMode::kAligned;
      } else if (mode == "worst_case") {
        pm = telab::PerturbMode::kWorstCase;
      } else {
        throw telab::ConfigError("unknown perturb mode: " + mode);
      }
      const telab::PerturbReport report =
          experiment.run_perturbation(alphas, pm);
      telab::write_perturb_report(report, out);
      std::cout << "perturbation table in " << out << "\n";
    } else if (cmd_interpret->parsed()) {
      const telab::InterpretReport report = experiment.run_interpret();
      telab::write_interpret_report(report, out);
      std::cout << "interpretability export in " << out << "\n";
    } else if (cmd_characterize->parsed()) {
      const int w = window > 0 ? window : experiment.config().h;
      const telab::CharacterizeReport report =
          experiment.run_characterize(w);
      telab::write_characterize_report(report, out);
      std::cout << "characterization export in " << out << "\n";
    } else if (cmd_timing->parsed()) {
      const telab::TimingReport report = experiment.run_timing();
      telab::write_timing_report(report, out);
      std::cout << "timing report in " << out << "\n";
    }
    return kExitOk;
  } catch (const telab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const telab::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const telab::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
