#pragma once

// Attacker model: column-stochastic operators on edge flows and demand, the
// feasible set C, Euclidean projection onto it, the poisoned price of anarchy
// and the attacker's utility.

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "wardrop/equilibrium.hpp"
#include "wardrop/latency.hpp"
#include "wardrop/network.hpp"

namespace wardrop {

/// theta = vec(phi_theta) and d = vec(phi_d), column-major.
struct AttackParams {
  Eigen::MatrixXd phi_theta;  ///< |E| x |E|
  Eigen::MatrixXd phi_d;      ///< |W| x |W|

  /// Throws ValidationError unless both matrices are square and column-stochastic.
  void validate(double tol = 1e-10) const;
  std::size_t dim_theta() const noexcept { return static_cast<std::size_t>(phi_theta.size()); }
  std::size_t dim_d() const noexcept { return static_cast<std::size_t>(phi_d.size()); }
  /// ||phi_theta - I||_F^2 + ||phi_d - I||_F^2, halved.
  double cost_term() const;
};

AttackParams identity_attack(std::size_t n_edges, std::size_t n_od);

/// Euclidean projection of `v` onto the probability simplex (sort-based, exact threshold).
void project_simplex(std::span<const double> v, std::span<double> out);
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);

/// Euclidean projection onto C: each column independently onto the simplex.
AttackParams project_to_C(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& d);
Eigen::MatrixXd project_columns(const Eigen::MatrixXd& m);

/// S(q) / s_star with the true latencies. Throws DomainError when s_star <= 0.
double ppoa(std::span<const double> q, const LatencyVector& fs, double s_star);

struct AttackEval {
  double utility = 0.0;
  double cost_term = 0.0;
  double ppoa = 0.0;
  double s_poisoned = 0.0;
  double s_star = 0.0;
  bool valid = false;  ///< false when the equilibrium solve did not converge
};

/// utility = cost_term - gamma * ppoa. Throws DomainError when gamma < 0 or s_star <= 0.
AttackEval attack_utility(const AttackParams& attack, const EquilibriumResult& pwe, double s_star, double gamma);

/// Dense row-major JSON: {"phi_theta": [[...], ...], "phi_d": [[...], ...]}.
std::string attack_to_json(const AttackParams& attack);
/// Throws ParseError on malformed JSON and ValidationError on shape or stochasticity violations.
AttackParams attack_from_json(std::string_view text);

/// Everything needed to evaluate the attacker's utility for candidate
/// parameters: the network, its true latencies and demand, the unpoisoned
/// equilibrium and optimum, gamma and the inner solver settings.
/// evaluate() is const and safe to call concurrently.
class AttackContext {
 public:
  AttackContext(Network net, double gamma, SolverConfig solver = {});

  const Network& network() const noexcept { return net_; }
  const LatencyVector& latencies() const noexcept { return fs_; }
  std::span<const double> demand() const noexcept { return net_.demand(); }
  const SolverConfig& solver() const noexcept { return solver_; }
  void set_solver(const SolverConfig& cfg) { solver_ = cfg; }
  double gamma() const noexcept { return gamma_; }
  void set_gamma(double gamma);

  const EquilibriumResult& we() const noexcept { return we_; }
  const EquilibriumResult& so() const noexcept { return so_; }
  double s_star() const noexcept { return so_.aggregated_latency; }
  double poa() const noexcept { return we_.aggregated_latency / so_.aggregated_latency; }

  struct Evaluation {
    AttackEval eval;
    EquilibriumResult pwe;
  };
  /// Solves the poisoned equilibrium for `attack` (seeded by `warm` when the
  /// effective demand matches) and scores it.
  Evaluation evaluate(const AttackParams& attack, const EquilibriumResult* warm = nullptr) const;

 private:
  Network net_;
  LatencyVector fs_;
  double gamma_;
  SolverConfig solver_;
  EquilibriumResult we_;
  EquilibriumResult so_;
};

}  // namespace wardrop
