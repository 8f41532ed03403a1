#include "wardrop/poisoning.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "wardrop/error.hpp"

namespace wardrop {

void AttackParams::validate(double tol) const {
  if (phi_theta.rows() != phi_theta.cols()) throw ValidationError("phi_theta must be square");
  if (phi_d.rows() != phi_d.cols()) throw ValidationError("phi_d must be square");
  validate_column_stochastic(phi_theta, phi_theta.rows(), "phi_theta", tol);
  validate_column_stochastic(phi_d, phi_d.rows(), "phi_d", tol);
}

double AttackParams::cost_term() const {
  const auto n = phi_theta.rows();
  const auto w = phi_d.rows();
  return 0.5 * ((phi_theta - Eigen::MatrixXd::Identity(n, n)).squaredNorm() +
                (phi_d - Eigen::MatrixXd::Identity(w, w)).squaredNorm());
}

AttackParams identity_attack(std::size_t n_edges, std::size_t n_od) {
  if (n_edges < 1 || n_od < 1) throw DomainError("identity_attack: sizes must be at least 1");
  const auto e = static_cast<Eigen::Index>(n_edges);
  const auto w = static_cast<Eigen::Index>(n_od);
  return {Eigen::MatrixXd::Identity(e, e), Eigen::MatrixXd::Identity(w, w)};
}

void project_simplex(std::span<const double> v, std::span<double> out) {
  const std::size_t n = v.size();
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    cumsum += u[j];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) tau = t;
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = std::max(v[i] - tau, 0.0);
}

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  Eigen::VectorXd out(v.size());
  project_simplex({v.data(), static_cast<std::size_t>(v.size())}, {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

Eigen::MatrixXd project_columns(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  const auto rows = static_cast<std::size_t>(m.rows());
  for (Eigen::Index j = 0; j < m.cols(); ++j) project_simplex({m.col(j).data(), rows}, {out.col(j).data(), rows});
  return out;
}

AttackParams project_to_C(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& d) {
  if (theta.rows() != theta.cols() || d.rows() != d.cols()) throw ValidationError("attack matrices must be square");
  return {project_columns(theta), project_columns(d)};
}

double ppoa(std::span<const double> q, const LatencyVector& fs, double s_star) {
  if (!(s_star > 0.0)) throw DomainError("ppoa: s_star must be positive");
  if (q.size() != fs.size()) throw ValidationError("ppoa: flow and latency sizes differ");
  return fs.aggregated(q) / s_star;
}

AttackEval attack_utility(const AttackParams& attack, const EquilibriumResult& pwe, double s_star, double gamma) {
  if (!(s_star > 0.0)) throw DomainError("attack_utility: s_star must be positive");
  if (!(gamma >= 0.0)) throw DomainError("attack_utility: gamma must be nonnegative");
  AttackEval ev;
  ev.cost_term = attack.cost_term();
  ev.s_poisoned = pwe.aggregated_latency;
  ev.s_star = s_star;
  ev.ppoa = pwe.aggregated_latency / s_star;
  ev.utility = ev.cost_term - gamma * ev.ppoa;
  ev.valid = pwe.converged;
  return ev;
}

namespace {

nlohmann::json rows_of(const Eigen::MatrixXd& m) {
  auto out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

Eigen::MatrixXd matrix_of(const nlohmann::json& j, const char* name) {
  if (!j.is_array() || j.empty()) throw ValidationError(std::string(name) + " must be a nonempty array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) {
      throw ValidationError(std::string(name) + " row " + std::to_string(i) + " has the wrong length");
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& v = row[static_cast<std::size_t>(k)];
      if (!v.is_number()) throw ValidationError(std::string(name) + " entries must be numbers");
      m(i, k) = v.get<double>();
    }
  }
  return m;
}

}  // namespace

std::string attack_to_json(const AttackParams& attack) {
  nlohmann::json j;
  j["phi_theta"] = rows_of(attack.phi_theta);
  j["phi_d"] = rows_of(attack.phi_d);
  return j.dump(1);
}

AttackParams attack_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // nlohmann reports a byte offset; convert it to a line number.
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
    throw ParseError(line, e.what());
  }
  if (!j.is_object() || !j.contains("phi_theta") || !j.contains("phi_d")) {
    throw ValidationError("attack JSON needs \"phi_theta\" and \"phi_d\"");
  }
  AttackParams a{matrix_of(j["phi_theta"], "phi_theta"), matrix_of(j["phi_d"], "phi_d")};
  a.validate(1e-8);
  return a;
}

// ---------------------------------------------------------------------------

AttackContext::AttackContext(Network net, double gamma, SolverConfig solver)
    : net_(std::move(net)), fs_(net_.latencies()), gamma_(0.0), solver_(solver) {
  set_gamma(gamma);
  SolverConfig ref = solver_;
  ref.record_history = false;
  ref.recover_paths = false;
  we_ = solve_we(net_, fs_, net_.demand(), ref);
  so_ = solve_so(net_, fs_, net_.demand(), ref);
  if (!we_.converged || !so_.converged) throw ConvergenceError("reference equilibrium solve did not converge");
  if (!(so_.aggregated_latency > 0.0)) throw DomainError("system-optimal latency must be positive");
}

void AttackContext::set_gamma(double gamma) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw DomainError("gamma must be finite and nonnegative");
  gamma_ = gamma;
}

AttackContext::Evaluation AttackContext::evaluate(const AttackParams& attack, const EquilibriumResult* warm) const {
  Evaluation out;
  out.pwe = solve_pwe(net_, fs_, net_.demand(), attack.phi_theta, attack.phi_d, solver_, warm);
  out.eval = attack_utility(attack, out.pwe, s_star(), gamma_);
  return out;
}

}  // namespace wardrop
