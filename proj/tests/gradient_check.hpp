#pragma once

// Small poisoning instances with all paths used, and a comparison of the
// implicit-function gradient against central differences of the utility
// computed through the bisection equilibrium oracle.

#include <random>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "oracles.hpp"
#include "wardrop/learning.hpp"
#include "wardrop/poisoning.hpp"

namespace gradcheck {

using namespace wardrop;

struct Instance {
  std::string name;
  Network net;
  oracle::SmallPwe pwe;
  AttackParams attack;
  double gamma = 1.0;
};

inline Eigen::MatrixXd near_identity(Eigen::Index n, double mix, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return (1.0 - mix) * Eigen::MatrixXd::Identity(n, n) + mix * oracle::random_stochastic(n, rng);
}

/// Path-edge incidence of the single OD pair from the DFS oracle, in DFS order.
inline Eigen::MatrixXd dfs_delta(const Network& net, NodeId s, NodeId t) {
  const auto paths = oracle::dfs_paths(net, s, t);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(net.num_edges()),
                                            static_cast<Eigen::Index>(paths.size()));
  for (std::size_t p = 0; p < paths.size(); ++p) {
    for (EdgeId e : paths[p]) d(e, static_cast<Eigen::Index>(p)) = 1.0;
  }
  return d;
}

inline std::vector<Instance> instances() {
  using LF = LatencyFamily;
  std::vector<Instance> out;
  {
    const std::vector<LF> lat = {LF::affine(1.0, 1.0), LF::affine(0.5, 2.0)};
    Eigen::MatrixXd phi(2, 2);
    phi << 0.85, 0.2, 0.15, 0.8;
    out.push_back({"two affine links", fixture::parallel(lat, 2.0), {Eigen::MatrixXd::Identity(2, 2), lat, {{0, 1}}},
                   {phi, Eigen::MatrixXd::Ones(1, 1)}, 1.0});
  }
  {
    const std::vector<LF> lat = {LF::bpr(1.0, 1.0, 0.5, 4.0), LF::bpr(1.5, 2.0, 0.3, 2.0)};
    out.push_back({"two BPR links", fixture::parallel(lat, 1.5), {Eigen::MatrixXd::Identity(2, 2), lat, {{0, 1}}},
                   {near_identity(2, 0.2, 1), Eigen::MatrixXd::Ones(1, 1)}, 2.0});
  }
  {
    const std::vector<LF> lat = {LF::affine(1.0, 1.0), LF::bpr(1.2, 2.0, 0.4, 3.0), LF::polynomial({0.8, 0.3, 0.2})};
    out.push_back({"three mixed links", fixture::parallel(lat, 3.0),
                   {Eigen::MatrixXd::Identity(3, 3), lat, {{0, 1, 2}}},
                   {near_identity(3, 0.08, 2), Eigen::MatrixXd::Ones(1, 1)}, 1.5});
  }
  {
    const std::vector<LF> lat = {LF::affine(1.0, 1.0), LF::affine(0.5, 2.0), LF::bpr(1.0, 2.0, 0.5, 2.0),
                                 LF::affine(2.0, 0.5)};
    Eigen::MatrixXd phid(2, 2);
    phid << 0.9, 0.2, 0.1, 0.8;
    out.push_back({"two bundles with demand poisoning", fixture::two_bundles(lat, 2.0, 3.0),
                   {Eigen::MatrixXd::Identity(4, 4), lat, {{0, 1}, {2, 3}}}, {near_identity(4, 0.2, 3), phid}, 1.0});
  }
  {
    const std::vector<LF> lat = {LF::affine(2.0, 1.0), LF::affine(1.0, 3.0), LF::affine(1.0, 3.0), LF::affine(2.0, 1.0),
                                 LF::affine(0.1, 0.5)};
    const Network net = fixture::braess(lat, 2.0);
    out.push_back({"affine Braess diamond", net, {dfs_delta(net, 0, 3), lat, {{0, 1, 2}}},
                   {near_identity(5, 0.05, 4), Eigen::MatrixXd::Ones(1, 1)}, 1.0});
  }
  {
    const std::vector<LF> lat = {LF::bpr(1.0, 2.0, 0.5, 4.0), LF::bpr(2.5, 3.0, 0.15, 4.0), LF::bpr(2.5, 3.0, 0.15, 4.0),
                                 LF::bpr(1.0, 2.0, 0.5, 4.0), LF::bpr(0.2, 1.0, 0.15, 4.0)};
    const Network net = fixture::braess(lat, 3.0);
    out.push_back({"BPR Braess diamond", net, {dfs_delta(net, 0, 3), lat, {{0, 1, 2}}},
                   {near_identity(5, 0.1, 5), Eigen::MatrixXd::Ones(1, 1)}, 1.0});
  }
  return out;
}

struct Comparison {
  double rel_error = 0.0;
  double min_path_share = 0.0;  ///< smallest oracle path flow over its OD demand
  std::size_t directions = 0;
};

/// Utility through the oracle: cost term minus gamma * S(q) / s_star.
inline double oracle_utility(const Instance& in, const AttackParams& a, double s_star) {
  const auto& dem = in.net.demand();
  const Eigen::VectorXd Q = Eigen::Map<const Eigen::VectorXd>(dem.data(), static_cast<Eigen::Index>(dem.size()));
  const Eigen::VectorXd eff = a.phi_d * Q;
  const Eigen::VectorXd mu = in.pwe.solve(a.phi_theta, std::vector<double>(eff.data(), eff.data() + eff.size()));
  const Eigen::VectorXd q = in.pwe.delta * mu;
  const auto fs = in.net.latencies();
  return a.cost_term() - in.gamma * fs.aggregated({q.data(), static_cast<std::size_t>(q.size())}) / s_star;
}

/// Directional derivatives along E_ij - E_kj (k the column maximum) for both
/// blocks, implicit-function versus central differences with step h.
inline Comparison compare(const Instance& in, double h = 1e-5) {
  SolverConfig cfg;
  cfg.rel_gap_tol = 1e-10;
  cfg.max_iters = 50000;
  const AttackContext ctx(in.net, in.gamma, cfg);
  const auto ev = ctx.evaluate(in.attack);
  const AttackGradient g = ift_gradient(ctx, in.attack, ev.pwe);

  Comparison c;
  {
    const auto& dem = in.net.demand();
    const Eigen::VectorXd Q = Eigen::Map<const Eigen::VectorXd>(dem.data(), static_cast<Eigen::Index>(dem.size()));
    const Eigen::VectorXd eff = in.attack.phi_d * Q;
    const Eigen::VectorXd mu = in.pwe.solve(in.attack.phi_theta, std::vector<double>(eff.data(), eff.data() + eff.size()));
    c.min_path_share = 1.0;
    for (std::size_t w = 0; w < in.pwe.od_paths.size(); ++w) {
      for (int p : in.pwe.od_paths[w]) c.min_path_share = std::min(c.min_path_share, mu[p] / eff[static_cast<Eigen::Index>(w)]);
    }
  }
  std::vector<double> ift, fd;
  auto sweep = [&](bool theta) {
    const Eigen::MatrixXd& m = theta ? in.attack.phi_theta : in.attack.phi_d;
    const Eigen::MatrixXd& gm = theta ? g.theta : g.d;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      Eigen::Index k;
      m.col(j).maxCoeff(&k);
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (i == k) continue;
        AttackParams plus = in.attack, minus = in.attack;
        Eigen::MatrixXd& mp = theta ? plus.phi_theta : plus.phi_d;
        Eigen::MatrixXd& mm = theta ? minus.phi_theta : minus.phi_d;
        mp(i, j) += h;
        mp(k, j) -= h;
        mm(i, j) -= h;
        mm(k, j) += h;
        fd.push_back((oracle_utility(in, plus, ctx.s_star()) - oracle_utility(in, minus, ctx.s_star())) / (2.0 * h));
        ift.push_back(gm(i, j) - gm(k, j));
      }
    }
  };
  sweep(true);
  sweep(false);
  const Eigen::Map<const Eigen::VectorXd> a(ift.data(), static_cast<Eigen::Index>(ift.size()));
  const Eigen::Map<const Eigen::VectorXd> b(fd.data(), static_cast<Eigen::Index>(fd.size()));
  c.rel_error = (a - b).norm() / b.norm();
  c.directions = ift.size();
  return c;
}

}  // namespace gradcheck
