#include "wardrop/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/SVD>

#include "wardrop/error.hpp"

namespace wardrop {

namespace {

constexpr double kComplementarityTol = 1e-7;
constexpr double kMaxCondition = 1e12;

std::span<const double> span_of(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

Eigen::VectorXd vec_of(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// The program in z with edge flow q = T z (T = I when `t` is null).
struct Formulation {
  const Eigen::MatrixXd* t;
  const LinearConstraints& cons;
  const AttackParams& attack;
  const LatencyVector& fs;
  Eigen::VectorXd demand;     // Q
  Eigen::VectorXd effective;  // Phi_d Q

  Formulation(const Eigen::MatrixXd* t_, const LinearConstraints& c, const AttackParams& a, const LatencyVector& f,
              std::span<const double> q)
      : t(t_), cons(c), attack(a), fs(f), demand(vec_of(q)) {
    const auto n_e = static_cast<Eigen::Index>(fs.size());
    const auto n_w = static_cast<Eigen::Index>(demand.size());
    if (attack.phi_theta.rows() != n_e || attack.phi_theta.cols() != n_e) {
      throw ValidationError("phi_theta does not match the number of edges");
    }
    if (attack.phi_d.rows() != n_w || attack.phi_d.cols() != n_w) {
      throw ValidationError("phi_d does not match the number of OD pairs");
    }
    const Eigen::Index nz = n_primal();
    if (cons.A.cols() != nz || cons.E.cols() != nz) throw ValidationError("constraint matrices have the wrong width");
    if (cons.B.rows() != cons.A.rows() || cons.B.cols() != n_w) throw ValidationError("B must be rows(A) x |W|");
    if (cons.F.rows() != cons.E.rows() || cons.F.cols() != n_w) throw ValidationError("F must be rows(E) x |W|");
    effective = attack.phi_d * demand;
  }

  Eigen::Index n_edges() const { return static_cast<Eigen::Index>(fs.size()); }
  Eigen::Index n_primal() const { return t ? t->cols() : n_edges(); }
  Eigen::Index n_ineq() const { return cons.A.rows(); }
  Eigen::Index n_eq() const { return cons.E.rows(); }

  Eigen::VectorXd edge_flow(const Eigen::VectorXd& z) const { return t ? Eigen::VectorXd(*t * z) : z; }
  Eigen::VectorXd to_primal(const Eigen::VectorXd& v) const { return t ? Eigen::VectorXd(t->transpose() * v) : v; }

  Eigen::VectorXd values(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out(x.size());
    fs.values(span_of(x), {out.data(), static_cast<std::size_t>(out.size())});
    return out;
  }
  Eigen::VectorXd slopes(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out(x.size());
    fs.derivs(span_of(x), {out.data(), static_cast<std::size_t>(out.size())});
    return out;
  }

  // T^T Phi^T l(Phi T z)
  Eigen::VectorXd gradient(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd x = attack.phi_theta * edge_flow(z);
    return to_primal(attack.phi_theta.transpose() * values(x));
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd x = attack.phi_theta * edge_flow(z);
    const Eigen::MatrixXd phi_t = t ? Eigen::MatrixXd(attack.phi_theta * *t) : attack.phi_theta;
    return phi_t.transpose() * slopes(x).asDiagonal() * phi_t;
  }

  Eigen::VectorXd slack(const Eigen::VectorXd& z) const { return cons.A * z - cons.B * effective; }

  Eigen::VectorXd residual(const KKTPoint& p) const {
    check(p);
    Eigen::VectorXd g(n_primal() + n_ineq() + n_eq());
    g.head(n_primal()) = gradient(p.primal) + cons.A.transpose() * p.lambda + cons.E.transpose() * p.nu;
    g.segment(n_primal(), n_ineq()) = p.lambda.cwiseProduct(slack(p.primal));
    g.tail(n_eq()) = cons.E * p.primal - cons.F * effective;
    return g;
  }

  void check(const KKTPoint& p) const {
    if (p.primal.size() != n_primal() || p.lambda.size() != n_ineq() || p.nu.size() != n_eq()) {
      throw ValidationError("KKT point dimensions do not match the formulation");
    }
  }

  // D_{(z, lambda, nu)} g
  Eigen::MatrixXd kkt_matrix(const KKTPoint& p) const {
    const Eigen::Index n = n_primal(), m = n_ineq(), k = n_eq();
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m + k, n + m + k);
    K.topLeftCorner(n, n) = hessian(p.primal);
    K.block(0, n, n, m) = cons.A.transpose();
    K.block(0, n + m, n, k) = cons.E.transpose();
    K.block(n, 0, m, n) = p.lambda.asDiagonal() * cons.A;
    K.block(n, n, m, m) = slack(p.primal).asDiagonal();
    K.block(n + m, 0, k, n) = cons.E;
    return K;
  }

  // D_theta g: column i + j |E| is d g / d Phi_theta(i, j).
  Eigen::MatrixXd theta_partials(const KKTPoint& p) const {
    const Eigen::Index n_e = n_edges();
    const Eigen::VectorXd q = edge_flow(p.primal);
    const Eigen::VectorXd x = attack.phi_theta * q;
    const Eigen::VectorXd l = values(x);
    const Eigen::VectorXd dl = slopes(x);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n_primal() + n_ineq() + n_eq(), n_e * n_e);
    Eigen::VectorXd v(n_e);
    for (Eigen::Index j = 0; j < n_e; ++j) {
      for (Eigen::Index i = 0; i < n_e; ++i) {
        // d/dPhi_ij of (Phi^T l(Phi q))_k = delta_kj l_i + Phi_ik l_i' q_j
        v = attack.phi_theta.row(i).transpose() * (dl[i] * q[j]);
        v[j] += l[i];
        G.col(i + j * n_e).head(n_primal()) = to_primal(v);
      }
    }
    return G;
  }

  // D_d g: column a + b |W| is d g / d Phi_d(a, b).
  Eigen::MatrixXd d_partials(const KKTPoint& p) const {
    const auto n_w = static_cast<Eigen::Index>(demand.size());
    const Eigen::Index n = n_primal(), m = n_ineq(), k = n_eq();
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n + m + k, n_w * n_w);
    for (Eigen::Index b = 0; b < n_w; ++b) {
      for (Eigen::Index a = 0; a < n_w; ++a) {
        auto col = G.col(a + b * n_w);
        col.segment(n, m) = -p.lambda.cwiseProduct(cons.B.col(a)) * demand[b];
        col.tail(k) = -cons.F.col(a) * demand[b];
      }
    }
    return G;
  }

  double cost_scale(const KKTPoint& p) const {
    return std::max(1.0, gradient(p.primal).cwiseAbs().maxCoeff());
  }
  double flow_scale() const { return std::max(1.0, effective.cwiseAbs().sum()); }
};

// Newton iterations on the KKT system with the rows in `active` binding.
void polish(const Formulation& f, const std::vector<Eigen::Index>& active, KKTPoint& p) {
  const Eigen::Index n = f.n_primal(), k = f.n_eq();
  const auto s = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd As(s, n), Bs(s, f.cons.B.cols());
  for (Eigen::Index r = 0; r < s; ++r) {
    As.row(r) = f.cons.A.row(active[static_cast<std::size_t>(r)]);
    Bs.row(r) = f.cons.B.row(active[static_cast<std::size_t>(r)]);
  }
  Eigen::VectorXd lam_s = Eigen::VectorXd::Zero(s);
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd z = p.primal;
  const double cscale = std::max(1.0, f.gradient(z).cwiseAbs().maxCoeff());
  const double qscale = f.flow_scale();
  double last = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd r(n + s + k);
    r.head(n) = f.gradient(z) + As.transpose() * lam_s + f.cons.E.transpose() * nu;
    r.segment(n, s) = As * z - Bs * f.effective;
    r.tail(k) = f.cons.E * z - f.cons.F * f.effective;
    const double err = std::max(r.head(n).cwiseAbs().maxCoeff() / cscale,
                                (s + k > 0 ? r.tail(s + k).cwiseAbs().maxCoeff() : 0.0) / qscale);
    if (it > 0 && (err <= 1e-15 || err >= last)) break;
    last = err;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + s + k, n + s + k);
    K.topLeftCorner(n, n) = f.hessian(z);
    K.block(0, n, n, s) = As.transpose();
    K.block(0, n + s, n, k) = f.cons.E.transpose();
    K.block(n, 0, s, n) = As;
    K.block(n + s, 0, k, n) = f.cons.E;
    // Multipliers enter linearly, so solve for them directly.
    Eigen::VectorXd rhs = -r;
    rhs.head(n) += As.transpose() * lam_s + f.cons.E.transpose() * nu;
    const Eigen::VectorXd step = K.colPivHouseholderQr().solve(rhs);
    z += step.head(n);
    lam_s = step.segment(n, s);
    nu = step.tail(k);
  }
  p.primal = z;
  p.lambda = Eigen::VectorXd::Zero(f.n_ineq());
  for (Eigen::Index r = 0; r < s; ++r) p.lambda[active[static_cast<std::size_t>(r)]] = lam_s[r];
  p.nu = nu;
}

KKTPoint active_set_point(const Formulation& f, const Eigen::VectorXd& z0) {
  KKTPoint p;
  p.primal = z0;
  const double qscale = f.flow_scale();
  std::vector<char> in(static_cast<std::size_t>(f.n_ineq()), 0);
  const Eigen::VectorXd s0 = f.slack(z0);
  for (Eigen::Index i = 0; i < f.n_ineq(); ++i) in[static_cast<std::size_t>(i)] = s0[i] >= -1e-6 * qscale;

  for (int round = 0; round < 100; ++round) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < f.n_ineq(); ++i) {
      if (in[static_cast<std::size_t>(i)]) active.push_back(i);
    }
    p.primal = z0;
    polish(f, active, p);
    const double ctol = kComplementarityTol * f.cost_scale(p);
    const Eigen::VectorXd sl = f.slack(p.primal);
    Eigen::Index worst_dual = -1, worst_primal = -1;
    for (Eigen::Index i = 0; i < f.n_ineq(); ++i) {
      if (in[static_cast<std::size_t>(i)] && p.lambda[i] < -ctol && (worst_dual < 0 || p.lambda[i] < p.lambda[worst_dual])) {
        worst_dual = i;
      }
      if (!in[static_cast<std::size_t>(i)] && sl[i] > kComplementarityTol * qscale &&
          (worst_primal < 0 || sl[i] > sl[worst_primal])) {
        worst_primal = i;
      }
    }
    if (worst_primal >= 0) {
      in[static_cast<std::size_t>(worst_primal)] = 1;
    } else if (worst_dual >= 0) {
      in[static_cast<std::size_t>(worst_dual)] = 0;
    } else {
      return p;
    }
  }
  throw ConvergenceError("active set did not settle while recovering the KKT point");
}

SensitivityJacobians jacobians(const Formulation& f, const KKTPoint& p) {
  f.check(p);
  SensitivityJacobians jac;
  const double ctol = kComplementarityTol * f.cost_scale(p);
  const double qtol = kComplementarityTol * f.flow_scale();
  const Eigen::VectorXd sl = f.slack(p.primal);
  for (Eigen::Index i = 0; i < f.n_ineq(); ++i) {
    const bool binding = std::abs(sl[i]) <= qtol;
    const bool priced = p.lambda[i] > ctol;
    if (binding && !priced) {
      throw IftHypothesisError("strict complementarity fails at inequality row " + std::to_string(i) +
                               " (slack " + std::to_string(sl[i]) + ", multiplier " + std::to_string(p.lambda[i]) + ")");
    }
    if (binding) jac.active_rows.push_back(static_cast<std::size_t>(i));
  }
  jac.strict_complementarity = true;

  const Eigen::MatrixXd K = f.kkt_matrix(p);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(K);
  const auto& sv = svd.singularValues();
  const double smin = sv.size() ? sv[sv.size() - 1] : 0.0;
  jac.condition_estimate = smin > 0.0 ? sv[0] / smin : std::numeric_limits<double>::infinity();
  if (!(jac.condition_estimate <= kMaxCondition)) {
    throw ConditioningError("KKT matrix is singular or ill-conditioned", jac.condition_estimate);
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
  const Eigen::Index n = f.n_primal();
  jac.d_primal_d_theta = (-lu.solve(f.theta_partials(p))).topRows(n);
  jac.d_primal_d_d = (-lu.solve(f.d_partials(p))).topRows(n);
  if (f.t) {
    jac.d_edge_d_theta = *f.t * jac.d_primal_d_theta;
    jac.d_edge_d_d = *f.t * jac.d_primal_d_d;
  } else {
    jac.d_edge_d_theta = jac.d_primal_d_theta;
    jac.d_edge_d_d = jac.d_primal_d_d;
  }
  return jac;
}

void require_exact(const PathSet& paths) {
  if (!paths.exact) throw UnsupportedError("path-flow sensitivity needs an untruncated path set");
}

}  // namespace

// ---------------------------------------------------------------------------

LinearConstraints parallel_link_constraints(const Network& net) {
  const auto n_e = static_cast<Eigen::Index>(net.num_edges());
  const auto n_w = static_cast<Eigen::Index>(net.num_od());
  LinearConstraints c;
  c.A = -Eigen::MatrixXd::Identity(n_e, n_e);
  c.B = Eigen::MatrixXd::Zero(n_e, n_w);
  c.E = Eigen::MatrixXd::Zero(n_w, n_e);
  c.F = Eigen::MatrixXd::Identity(n_w, n_w);
  for (Eigen::Index e = 0; e < n_e; ++e) {
    const Edge& ed = net.edge(static_cast<EdgeId>(e));
    Eigen::Index owner = -1;
    for (Eigen::Index w = 0; w < n_w; ++w) {
      const OdPair& od = net.od_pairs()[static_cast<std::size_t>(w)];
      if (od.origin == ed.tail && od.destination == ed.head) {
        if (owner >= 0) throw UnsupportedError("OD pairs are duplicated");
        owner = w;
      }
    }
    if (owner < 0) {
      throw UnsupportedError("edge " + std::to_string(e + 1) +
                             " does not join an OD pair directly; use the path formulation");
    }
    c.E(owner, e) = 1.0;
  }
  return c;
}

LinearConstraints path_constraints(const PathSet& paths) {
  const auto n_p = static_cast<Eigen::Index>(paths.size());
  const auto n_w = paths.lambda.rows();
  return {-Eigen::MatrixXd::Identity(n_p, n_p), Eigen::MatrixXd::Zero(n_p, n_w), paths.lambda,
          Eigen::MatrixXd::Identity(n_w, n_w)};
}

Eigen::VectorXd kkt_residual_edge(const KKTPoint& point, const AttackParams& attack, const LatencyVector& fs,
                                  std::span<const double> demand, const LinearConstraints& cons) {
  return Formulation(nullptr, cons, attack, fs, demand).residual(point);
}

Eigen::VectorXd kkt_residual_path(const KKTPoint& point, const AttackParams& attack, const PathSet& paths,
                                  const LatencyVector& fs, std::span<const double> demand) {
  const LinearConstraints cons = path_constraints(paths);
  return Formulation(&paths.delta, cons, attack, fs, demand).residual(point);
}

KKTPoint kkt_point_edge(const Eigen::VectorXd& q_approx, const AttackParams& attack, const LatencyVector& fs,
                        std::span<const double> demand, const LinearConstraints& cons) {
  const Formulation f(nullptr, cons, attack, fs, demand);
  if (q_approx.size() != f.n_primal()) throw ValidationError("approximate flow has the wrong length");
  return active_set_point(f, q_approx);
}

KKTPoint kkt_point_path(const Network& net, const EquilibriumResult& pwe, const AttackParams& attack,
                        const PathSet& paths, const LatencyVector& fs, std::span<const double> demand) {
  require_exact(paths);
  const PathFlows recovered = recover_path_flows(net, pwe);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(paths.size()));
  for (std::size_t p = 0; p < recovered.paths.size(); ++p) {
    const auto idx = paths.find(recovered.paths.paths[p]);
    if (idx < 0) throw UnsupportedError("the equilibrium uses a path outside the path set");
    mu[idx] += recovered.mu[static_cast<Eigen::Index>(p)];
  }
  const LinearConstraints cons = path_constraints(paths);
  const Formulation f(&paths.delta, cons, attack, fs, demand);
  return active_set_point(f, mu);
}

SensitivityJacobians ift_jacobian_edge(const KKTPoint& point, const AttackParams& attack, const LatencyVector& fs,
                                       std::span<const double> demand, const LinearConstraints& cons) {
  return jacobians(Formulation(nullptr, cons, attack, fs, demand), point);
}

SensitivityJacobians ift_jacobian_path(const KKTPoint& point, const AttackParams& attack, const PathSet& paths,
                                       const LatencyVector& fs, std::span<const double> demand) {
  require_exact(paths);
  const LinearConstraints cons = path_constraints(paths);
  return jacobians(Formulation(&paths.delta, cons, attack, fs, demand), point);
}

AttackGradient attack_gradient(const AttackParams& attack, std::span<const double> q, const LatencyVector& fs,
                               const SensitivityJacobians& jac, double s_star, double gamma) {
  if (!(s_star > 0.0)) throw DomainError("attack_gradient: s_star must be positive");
  if (!jac.strict_complementarity) throw IftHypothesisError("Jacobians are not valid");
  const auto n_e = attack.phi_theta.rows();
  const auto n_w = attack.phi_d.rows();
  if (static_cast<Eigen::Index>(q.size()) != n_e || jac.d_edge_d_theta.rows() != n_e ||
      jac.d_edge_d_theta.cols() != n_e * n_e || jac.d_edge_d_d.cols() != n_w * n_w) {
    throw ValidationError("attack_gradient: dimensions do not match");
  }
  Eigen::VectorXd l(n_e), dl(n_e);
  fs.values(q, {l.data(), static_cast<std::size_t>(n_e)});
  fs.derivs(q, {dl.data(), static_cast<std::size_t>(n_e)});
  const Eigen::VectorXd w = vec_of(q).cwiseProduct(dl) + l;
  const double scale = gamma / s_star;

  AttackGradient g;
  const Eigen::VectorXd gt = jac.d_edge_d_theta.transpose() * w;
  const Eigen::VectorXd gd = jac.d_edge_d_d.transpose() * w;
  g.theta = attack.phi_theta - Eigen::MatrixXd::Identity(n_e, n_e) - scale * Eigen::Map<const Eigen::MatrixXd>(gt.data(), n_e, n_e);
  g.d = attack.phi_d - Eigen::MatrixXd::Identity(n_w, n_w) - scale * Eigen::Map<const Eigen::MatrixXd>(gd.data(), n_w, n_w);
  return g;
}

AttackGradient tangent_part(const AttackGradient& g) {
  AttackGradient out = g;
  out.theta.rowwise() -= g.theta.colwise().mean();
  out.d.rowwise() -= g.d.colwise().mean();
  return out;
}

// ---------------------------------------------------------------------------
// Finite differences

namespace {

using LabelledUtility = std::function<double(const AttackParams&, const std::string&)>;

// Tangent gradient of one block (which = 0: theta, 1: d).
Eigen::MatrixXd fd_block(const AttackParams& base, int which, double f0, const LabelledUtility& f, double h) {
  const Eigen::MatrixXd& m = which == 0 ? base.phi_theta : base.phi_d;
  const Eigen::Index n = m.rows();
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, n);
  if (n == 1) return grad;
  const char* name = which == 0 ? "theta" : "d";
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index k = 0;
    m.col(j).maxCoeff(&k);
    if (m(k, j) < 2.0 * h) throw DomainError("finite-difference step too large for column " + std::to_string(j));
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == k) continue;
      auto probe = [&](double t) {
        AttackParams a = base;
        Eigen::MatrixXd& target = which == 0 ? a.phi_theta : a.phi_d;
        target(i, j) = std::max(0.0, target(i, j) + t);
        target(k, j) = std::max(0.0, target(k, j) - t);
        return f(a, std::string(name) + "(" + std::to_string(i) + "," + std::to_string(j) + ") step " + std::to_string(t));
      };
      if (m(i, j) >= h) {
        delta[i] = (probe(h) - probe(-h)) / (2.0 * h);
      } else {
        delta[i] = (-3.0 * f0 + 4.0 * probe(h) - probe(2.0 * h)) / (2.0 * h);
      }
    }
    grad.col(j) = delta.array() - delta.mean();
  }
  return grad;
}

AttackGradient fd_core(const AttackParams& attack, const LabelledUtility& f, double h) {
  if (!(h > 0.0)) throw DomainError("finite-difference step must be positive");
  attack.validate(1e-8);
  const double f0 = f(attack, "centre");
  return {fd_block(attack, 0, f0, f, h), fd_block(attack, 1, f0, f, h)};
}

}  // namespace

AttackGradient fd_gradient(const AttackParams& attack, const AttackContext& ctx, double h) {
  return fd_core(
      attack,
      [&ctx](const AttackParams& a, const std::string& label) {
        const auto ev = ctx.evaluate(a);
        if (!ev.eval.valid) {
          throw ConvergenceError("equilibrium solve did not converge at probe " + label + " (gap " +
                                 std::to_string(ev.pwe.rel_gap) + ")");
        }
        return ev.eval.utility;
      },
      h);
}

AttackGradient fd_gradient(const AttackParams& attack, const std::function<double(const AttackParams&)>& utility,
                           double h) {
  return fd_core(attack, [&utility](const AttackParams& a, const std::string&) { return utility(a); }, h);
}

}  // namespace wardrop
