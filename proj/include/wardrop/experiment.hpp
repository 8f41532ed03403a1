#pragma once

// Experiment harness behind the `wardrop` command: JSON configuration,
// equilibrium solves, attack runs and the report over their artifacts.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "wardrop/equilibrium.hpp"
#include "wardrop/learning.hpp"
#include "wardrop/network.hpp"

namespace wardrop {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitFailure = 2 };

struct LatencyOverride {
  std::size_t edge_id = 0;  ///< 1-based, as in the network file
  LatencyFamily latency = LatencyFamily::affine(1.0, 0.0);
};

struct ExperimentConfig {
  std::filesystem::path network;
  std::filesystem::path trips;
  std::vector<LatencyOverride> overrides;
  /// "file" keeps the trips file as is; "uniform" spreads total_demand (or the
  /// file total) evenly over its OD pairs.
  std::string demand_split = "file";
  std::optional<double> total_demand;

  SolverConfig solver;
  LearnerConfig learner;
  /// gamma = gamma_scale * sqrt(|E|) unless gamma is given.
  std::optional<double> gamma;
  double gamma_scale = 1.0;
  /// m = max(1, round(m_scale * sqrt(|E|))) unless learner.m was given explicitly.
  std::optional<std::size_t> m;
  double m_scale = 1.0;

  std::filesystem::path output_dir = "out";
  std::size_t top_k = 5;
  bool checkpoints = false;  ///< write attack_iter_<t>.json after every outer step

  /// Relative file names resolve against `base_dir`, then WARDROP_DATA_DIR,
  /// then the working directory. Throws ValidationError or ParseError.
  static ExperimentConfig from_json(std::string_view text, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& file);

  /// Reads the TNTP files and applies overrides and the demand split.
  Network load_network() const;
  double resolved_gamma(std::size_t n_edges) const;
  std::size_t resolved_m(std::size_t n_edges) const;
};

/// Directory for data files when a config does not say: WARDROP_DATA_DIR or "data".
std::filesystem::path default_data_dir();

/// Solves each requested kind ("we", "so", "pwe") and writes flows.csv and
/// summary.json into cfg.output_dir. "pwe" needs an attack checkpoint.
int cmd_solve(const ExperimentConfig& cfg, const std::vector<std::string>& kinds,
              const std::optional<std::filesystem::path>& attack_file, std::ostream& log);

/// Runs the zeroth-order ("zeroth") or first-order ("first") learner and writes
/// trace.csv, trace.json, attack_final.json, edge_report.csv and summary.json.
int cmd_attack(const ExperimentConfig& cfg, const std::string& mode, std::ostream& log);

/// Aggregates edge_report.csv (or flows.csv) in `dir` into report.json.
int cmd_report(const std::filesystem::path& dir, std::size_t top_k, std::ostream& log);

/// Minimal CSV reader for the artifacts above: header plus rows of fields.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(std::string_view name) const;  ///< throws ValidationError when absent
};
CsvTable read_csv(const std::filesystem::path& file);

}  // namespace wardrop
