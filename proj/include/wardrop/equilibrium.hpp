#pragma once

// Frank-Wolfe traffic assignment: Wardrop equilibrium (Beckmann potential),
// system optimum (marginal social cost) and the poisoned equilibrium, where
// followers route against l(Phi_theta q) under demand Phi_d Q.

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "wardrop/latency.hpp"
#include "wardrop/network.hpp"

namespace wardrop {

struct SolverConfig {
  double rel_gap_tol = 1e-6;
  int max_iters = 5000;
  double line_search_tol = 1e-10;
  /// Bi-conjugate and conjugate Frank-Wolfe directions; plain FW steps are
  /// taken whenever neither combination descends.
  bool conjugate = true;
  bool record_history = false;
  /// Decompose the final edge flow into path flows.
  bool recover_paths = false;

  void validate() const;
};

struct FlowPattern {
  Eigen::VectorXd q;                 ///< edge flows
  std::optional<Eigen::VectorXd> mu; ///< path flows, indexed like EquilibriumResult::paths
};

struct EquilibriumResult {
  FlowPattern flow;
  double objective = 0.0;           ///< the minimised potential at the solution
  double aggregated_latency = 0.0;  ///< S(q) with the true latencies
  double rel_gap = 0.0;
  int iters = 0;
  bool converged = false;

  Eigen::VectorXd demand;        ///< effective demand the flow is feasible for
  Eigen::MatrixXd origin_flows;  ///< |E| x |origins|; column k is the flow rooted at net.origins()[k]
  std::optional<PathSet> paths;  ///< set when recover_paths was requested

  std::vector<double> objective_history;  ///< one entry per iterate, when recorded
  std::vector<double> gap_history;
};

/// Loads each OD pair's demand on its shortest path under `edge_costs`
/// (ties go to the smaller edge id). Throws UnreachableError.
Eigen::VectorXd all_or_nothing(const Network& net, std::span<const double> edge_costs,
                               std::span<const double> demand);

/// Minimiser on [0, 1] of a convex function given its derivative, by
/// bisection. Returns an endpoint when the derivative does not change sign.
double line_search(const std::function<double(double)>& derivative, double tol = 1e-10);

EquilibriumResult solve_we(const Network& net, const SolverConfig& cfg = {});
EquilibriumResult solve_we(const Network& net, const LatencyVector& fs, std::span<const double> demand,
                           const SolverConfig& cfg = {});

EquilibriumResult solve_so(const Network& net, const SolverConfig& cfg = {});
EquilibriumResult solve_so(const Network& net, const LatencyVector& fs, std::span<const double> demand,
                           const SolverConfig& cfg = {});

/// Poisoned equilibrium for column-stochastic phi_theta (|E| x |E|) and
/// phi_d (|W| x |W|). `warm` seeds the iteration when its effective demand
/// equals phi_d * demand; otherwise it is ignored. Throws ValidationError on
/// shape or stochasticity violations.
EquilibriumResult solve_pwe(const Network& net, const LatencyVector& fs, std::span<const double> demand,
                            const Eigen::MatrixXd& phi_theta, const Eigen::MatrixXd& phi_d,
                            const SolverConfig& cfg = {}, const EquilibriumResult* warm = nullptr);

/// Throws ValidationError unless `m` is square of size n, entrywise >= 0 and
/// every column sums to 1 within `tol`.
void validate_column_stochastic(const Eigen::MatrixXd& m, Eigen::Index n, const char* name, double tol = 1e-10);

/// Path flows from the per-origin edge flows of a solve: cycles are cancelled,
/// then each origin's flow is peeled into paths backwards from the
/// destinations. Flows below `tol` * total demand are treated as zero.
struct PathFlows {
  PathSet paths;
  Eigen::VectorXd mu;
};
PathFlows recover_path_flows(const Network& net, const EquilibriumResult& result, double tol = 1e-12);

}  // namespace wardrop
