// wardrop: solve equilibria, run poisoning attacks and summarize their artifacts.
//
//   wardrop solve  --config data/pigou.json --kind we --kind so
//   wardrop attack --config data/evacuation.json --mode zeroth --seed 3
//   wardrop report out/
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wardrop/error.hpp"
#include "wardrop/experiment.hpp"

namespace {

using wardrop::ExperimentConfig;

struct Overrides {
  std::string config;
  std::string network, trips, output_dir;
  std::optional<double> gamma, gamma_scale, r, eta0, anneal, rel_gap;
  std::optional<std::size_t> m, threads;
  std::optional<int> iters, max_iters;
  std::optional<std::uint64_t> seed;
  std::string sampling;
  bool baseline = false;
  bool checkpoints = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "experiment config (JSON)");
  cmd->add_option("--network", o.network, "TNTP network file (overrides the config)");
  cmd->add_option("--trips", o.trips, "TNTP trips file (overrides the config)");
  cmd->add_option("-o,--out", o.output_dir, "output directory");
  cmd->add_option("--rel-gap", o.rel_gap, "solver relative-gap tolerance");
  cmd->add_option("--max-iters", o.max_iters, "solver iteration cap");
}

void add_attack(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--gamma", o.gamma, "attack cost weight (default gamma_scale * sqrt|E|)");
  cmd->add_option("--gamma-scale", o.gamma_scale, "constant in gamma = c * sqrt|E|");
  cmd->add_option("-m,--probes", o.m, "estimator probes per iteration");
  cmd->add_option("-r,--radius", o.r, "smoothing radius");
  cmd->add_option("--eta0", o.eta0, "initial learning rate");
  cmd->add_option("--anneal", o.anneal, "learning-rate decay per iteration");
  cmd->add_option("--iters", o.iters, "outer iterations");
  cmd->add_option("--seed", o.seed, "RNG seed");
  cmd->add_option("--sampling", o.sampling, "sphere or gaussian")->check(CLI::IsMember({"sphere", "gaussian"}));
  cmd->add_flag("--baseline", o.baseline, "subtract the centre utility in the estimator");
  cmd->add_option("--threads", o.threads, "worker threads for probes (0 = hardware)");
  cmd->add_flag("--checkpoints", o.checkpoints, "write the iterate after every step");
}

ExperimentConfig build_config(const Overrides& o) {
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    cfg = ExperimentConfig::load(o.config);
  } else if (o.network.empty() || o.trips.empty()) {
    throw wardrop::ValidationError("give --config or both --network and --trips");
  }
  if (!o.network.empty()) cfg.network = o.network;
  if (!o.trips.empty()) cfg.trips = o.trips;
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  if (o.rel_gap) cfg.solver.rel_gap_tol = *o.rel_gap;
  if (o.max_iters) cfg.solver.max_iters = *o.max_iters;
  if (o.gamma) cfg.gamma = *o.gamma;
  if (o.gamma_scale) cfg.gamma_scale = *o.gamma_scale;
  if (o.m) cfg.m = *o.m;
  if (o.r) cfg.learner.r = *o.r;
  if (o.eta0) cfg.learner.eta0 = *o.eta0;
  if (o.anneal) cfg.learner.anneal = *o.anneal;
  if (o.iters) cfg.learner.outer_iters = *o.iters;
  if (o.seed) cfg.learner.rng_seed = *o.seed;
  if (o.threads) cfg.learner.threads = *o.threads;
  if (!o.sampling.empty()) {
    cfg.learner.sampling_mode = o.sampling == "gaussian" ? wardrop::SamplingMode::gaussian : wardrop::SamplingMode::sphere;
  }
  if (o.baseline) cfg.learner.baseline = true;
  if (o.checkpoints) cfg.checkpoints = true;
  cfg.solver.validate();
  cfg.learner.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wardrop equilibria under flow and demand poisoning"};
  app.require_subcommand(1);

  Overrides o;
  std::vector<std::string> kinds;
  std::string attack_file;
  std::string mode = "zeroth";
  std::string report_dir;
  std::size_t top_k = 5;

  auto* solve = app.add_subcommand("solve", "solve WE, SO or PWE and write flows.csv and summary.json");
  add_common(solve, o);
  solve->add_option("-k,--kind", kinds, "we, so or pwe (repeatable; default we and so)")
      ->check(CLI::IsMember({"we", "so", "pwe"}));
  solve->add_option("--attack", attack_file, "attack checkpoint for --kind pwe");

  auto* attack = app.add_subcommand("attack", "learn a poisoning attack and write its trace and edge report");
  add_common(attack, o);
  add_attack(attack, o);
  attack->add_option("--mode", mode, "zeroth (bandit feedback) or first (gradients)")
      ->check(CLI::IsMember({"zeroth", "first"}));

  auto* report = app.add_subcommand("report", "summarize an output directory into report.json");
  report->add_option("dir", report_dir, "artifact directory")->required();
  report->add_option("-k,--top-k", top_k, "number of edges per ranking");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? wardrop::kExitOk : wardrop::kExitUsage;
  }

  if (*report) {
    try {
      return wardrop::cmd_report(report_dir, top_k, std::cerr);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return wardrop::kExitFailure;
    }
  }

  ExperimentConfig cfg;
  try {
    cfg = build_config(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return wardrop::kExitUsage;
  }
  try {
    if (*solve) {
      std::optional<std::filesystem::path> af;
      if (!attack_file.empty()) af = attack_file;
      return wardrop::cmd_solve(cfg, kinds, af, std::cerr);
    }
    return wardrop::cmd_attack(cfg, mode, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return wardrop::kExitFailure;
  }
}
