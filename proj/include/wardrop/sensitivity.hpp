#pragma once

// Sensitivity of the poisoned equilibrium to the attack parameters.
//
// The equilibrium is written as the convex program
//
//   min_z  sum_e int_0^{(Phi_theta T z)_e} l_e     s.t.  A z <= B Phi_d Q,  E z = F Phi_d Q
//
// with T = I for edge flows and T = Delta (path-edge incidence) for path
// flows. Its KKT system g(z, lambda, nu) = 0 is differentiated implicitly to
// obtain dz/dtheta and dz/dd, which feed the analytic attack gradient.
// Finite-difference and one-point smoothed estimators of the same gradient
// live here too, as validation oracles and for bandit feedback.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wardrop/equilibrium.hpp"
#include "wardrop/latency.hpp"
#include "wardrop/network.hpp"
#include "wardrop/poisoning.hpp"

namespace wardrop {

/// Inequality rows A z <= B Phi_d Q and equality rows E z = F Phi_d Q.
struct LinearConstraints {
  Eigen::MatrixXd A, B;
  Eigen::MatrixXd E, F;
};

/// Edge-flow constraints of a network whose every edge joins the origin and
/// destination of exactly one OD pair (parallel links, possibly several
/// bundles): q >= 0 and the per-pair flow balance. Throws UnsupportedError for
/// any other topology.
LinearConstraints parallel_link_constraints(const Network& net);

/// Path-flow constraints: mu >= 0 and Lambda mu = Phi_d Q.
LinearConstraints path_constraints(const PathSet& paths);

struct KKTPoint {
  Eigen::VectorXd primal;  ///< edge flows q or path flows mu
  Eigen::VectorXd lambda;  ///< one per inequality row
  Eigen::VectorXd nu;      ///< one per equality row
};

struct SensitivityJacobians {
  Eigen::MatrixXd d_primal_d_theta;  ///< n_primal x |E|^2, columns in vec (column-major) order
  Eigen::MatrixXd d_primal_d_d;      ///< n_primal x |W|^2
  Eigen::MatrixXd d_edge_d_theta;    ///< |E| x |E|^2
  Eigen::MatrixXd d_edge_d_d;        ///< |E| x |W|^2
  bool strict_complementarity = false;
  double condition_estimate = 0.0;
  std::vector<std::size_t> active_rows;  ///< inequality rows treated as binding
};

/// Stacked KKT residual [stationarity; diag(lambda)(A z - B Phi_d Q); E z - F Phi_d Q]
/// of the edge formulation. Throws ValidationError on dimension mismatch.
Eigen::VectorXd kkt_residual_edge(const KKTPoint& point, const AttackParams& attack, const LatencyVector& fs,
                                  std::span<const double> demand, const LinearConstraints& cons);

/// Same residual for the path formulation (T = Delta).
Eigen::VectorXd kkt_residual_path(const KKTPoint& point, const AttackParams& attack, const PathSet& paths,
                                  const LatencyVector& fs, std::span<const double> demand);

/// Exact KKT point near an approximate edge-flow solution: an active-set loop
/// with Newton polishing on the binding rows. Throws ConvergenceError if the
/// active set does not settle.
KKTPoint kkt_point_edge(const Eigen::VectorXd& q_approx, const AttackParams& attack, const LatencyVector& fs,
                        std::span<const double> demand, const LinearConstraints& cons);

/// Exact path-flow KKT point seeded from the paths recovered from `pwe`.
/// Throws UnsupportedError if `paths` is truncated or misses a used path.
KKTPoint kkt_point_path(const Network& net, const EquilibriumResult& pwe, const AttackParams& attack,
                        const PathSet& paths, const LatencyVector& fs, std::span<const double> demand);

/// Implicit-function Jacobians of the edge formulation. Throws
/// IftHypothesisError when strict complementarity fails (tolerance 1e-7,
/// scaled), ConditioningError when the KKT matrix is numerically singular.
SensitivityJacobians ift_jacobian_edge(const KKTPoint& point, const AttackParams& attack, const LatencyVector& fs,
                                       std::span<const double> demand, const LinearConstraints& cons);

/// Path formulation; edge Jacobians are Delta times the path Jacobians.
/// Refuses truncated path sets.
SensitivityJacobians ift_jacobian_path(const KKTPoint& point, const AttackParams& attack, const PathSet& paths,
                                       const LatencyVector& fs, std::span<const double> demand);

struct AttackGradient {
  Eigen::MatrixXd theta;  ///< |E| x |E|, entry (i, j) is dL/dPhi_theta(i, j)
  Eigen::MatrixXd d;      ///< |W| x |W|
};

/// grad = Phi - I - (gamma / s_star) * J^T w, with w_e = q_e l_e'(q_e) + l_e(q_e)
/// from the true latencies at the equilibrium edge flow q.
AttackGradient attack_gradient(const AttackParams& attack, std::span<const double> q, const LatencyVector& fs,
                               const SensitivityJacobians& jac, double s_star, double gamma);

/// Removes each column's mean: the component of a gradient tangent to C.
AttackGradient tangent_part(const AttackGradient& g);

/// Central differences of the utility along zero-column-sum directions
/// E_ij - E_kj (k the column's largest entry), falling back to a one-sided
/// three-point rule where the central probe would leave C. Returns the
/// tangent part of the gradient. Throws ConvergenceError naming the probe when
/// an equilibrium solve fails.
AttackGradient fd_gradient(const AttackParams& attack, const AttackContext& ctx, double h = 1e-5);

/// Same, for an arbitrary utility oracle on C.
AttackGradient fd_gradient(const AttackParams& attack, const std::function<double(const AttackParams&)>& utility,
                           double h = 1e-5);

// ---------------------------------------------------------------------------
// One-point smoothed estimator

enum class SamplingMode { sphere, gaussian };

/// Utility of a probe, or nullopt when its equilibrium solve failed.
using UtilityOracle = std::function<std::optional<double>(const AttackParams&)>;

struct EstimatorConfig {
  std::size_t m = 16;   ///< probes per block
  double r = 0.05;      ///< smoothing radius
  std::uint64_t seed = 0;
  SamplingMode mode = SamplingMode::sphere;
  bool estimate_theta = true;
  bool estimate_d = true;
  /// Project each probe onto C (off only for surrogates defined everywhere).
  bool project = true;
  /// Subtract the utility at the centre from every probe. Unbiased because
  /// the perturbations have mean zero; it only reduces variance.
  bool baseline = false;
  double max_drop_fraction = 0.2;
  std::size_t threads = 0;  ///< 0 = hardware concurrency
};

struct EstimatorDiagnostics {
  std::size_t probes_theta = 0, dropped_theta = 0;
  std::size_t probes_d = 0, dropped_d = 0;
  double variance_theta = 0.0;  ///< trace of the per-probe estimate covariance
  double variance_d = 0.0;
  double std_error_theta = 0.0;  ///< sqrt(variance / kept probes)
  double std_error_d = 0.0;
  double centre_utility = 0.0;   ///< set when the baseline is used

  std::string to_json() const;
};

struct SmoothedGradient {
  Eigen::MatrixXd theta;
  Eigen::MatrixXd d;
  EstimatorDiagnostics diagnostics;
};

/// (dim / (m r^2)) sum_i L(Proj_C(theta + u_i, d)) u_i with u_i uniform on the
/// radius-r sphere (sphere mode), or (1 / (m r^2)) sum_i L(. + u_i) u_i with
/// u_i ~ N(0, r^2 I) (gaussian mode); likewise for d with theta held fixed.
/// All perturbations are drawn up front from one seeded stream, so the result
/// does not depend on the number of threads. Throws EstimatorError when more
/// than max_drop_fraction of a block's probes fail.
SmoothedGradient smoothed_gradient(const AttackParams& centre, const UtilityOracle& utility,
                                   const EstimatorConfig& cfg);

/// Oracle that solves the poisoned equilibrium, warm-started from `warm` when
/// the effective demand matches. Unconverged solves count as failures.
UtilityOracle equilibrium_oracle(const AttackContext& ctx, const EquilibriumResult* warm = nullptr);

/// Probes sufficient for the sphere estimator to be within eps of its mean
/// with probability 1 - delta, for a utility bounded by `bound` in absolute
/// value (matrix Bernstein with R = sigma = dim * bound / r).
std::size_t sample_bound(std::size_t dim, double eps, double bound, double r, double delta = 0.05);

/// Largest radius keeping the smoothing bias of an L1-smooth utility below eps / 2.
double radius_bound(double eps, double L1);

// ---------------------------------------------------------------------------
// Smoothness constants

struct SmoothnessConstants {
  double L0 = 0.0;
  double L1 = 0.0;
  // Inputs, echoed.
  double l_q = 0.0, C0 = 0.0, C1 = 0.0;
  double c0 = 0.0, l0 = 0.0, l1 = 0.0, dl_at_D = 0.0;
  double D_total = 0.0;
  std::size_t n_edges = 0;
  double gamma = 0.0, s_star = 0.0;

  std::string to_json() const;
};

/// L0 = (sqrt(2) + gamma (c0 + l0 D) l_q / S*) sqrt(|E|) and
/// L1 = 1 + (gamma / S*)(C0 l_q (l0 + l'(D)) + C1 c0 + D sqrt(|E|)(C0 l1 l_q + C1 l'(D))) sqrt(|E|),
/// with c0, l0, l1 from the latency regularity on [0, D], D the total demand
/// and l'(D) the largest edge slope at D. Throws ValidationError listing any
/// missing constant.
SmoothnessConstants smoothness_constants(const Network& net, const LatencyVector& fs, std::span<const double> demand,
                                         double gamma, double s_star, std::optional<double> l_q,
                                         std::optional<double> C0, std::optional<double> C1);

struct EmpiricalConstants {
  double l_q = 0.0;  ///< 99th percentile of ||q*(z1) - q*(z2)|| / ||z1 - z2||
  double C0 = 0.0;   ///< 99th percentile of max_e |q_e*(z1) - q_e*(z2)| / ||z1 - z2||
  double C1 = 0.0;   ///< 99th percentile of second-difference quotients max_e |q_e(z+h)+q_e(z-h)-2q_e(z)| / ||h||^2
  std::size_t pairs = 0;
  std::size_t failures = 0;
};

struct PairSampling {
  std::size_t pairs = 64;
  double radius = 1e-2;   ///< perturbation size ||z1 - z2|| before projection
  std::uint64_t seed = 0;
  std::size_t threads = 0;
};

/// Estimates l_q, C0 and C1 by random perturbation quotients around points of
/// C drawn near `centre`. These are estimates, not bounds.
EmpiricalConstants estimate_constants(const AttackContext& ctx, const AttackParams& centre,
                                      const PairSampling& sampling);

/// A random point of C near `centre` at Frobenius distance about `radius`
/// (projection may shrink it).
AttackParams random_nearby(const AttackParams& centre, double radius, std::uint64_t seed);

}  // namespace wardrop
