#pragma once

// Independent reference computations for the tests. Nothing here calls into
// the solver code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "wardrop/latency.hpp"
#include "wardrop/network.hpp"

namespace oracle {

using wardrop::EdgeId;
using wardrop::Network;
using wardrop::NodeId;

inline double simpson(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
  std::function<double(double, double, double, double, double, double, int)> rec =
      [&](double lo, double hi, double flo, double fmid, double fhi, double whole, int depth) {
        const double mid = 0.5 * (lo + hi);
        const double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
        const double flm = f(lm), frm = f(rm);
        const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
        const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
        if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) return left + right + (left + right - whole) / 15.0;
        return rec(lo, mid, flo, flm, fmid, left, depth - 1) + rec(mid, hi, fmid, frm, fhi, right, depth - 1);
      };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec(a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), 50);
}

/// Minimiser of a unimodal function on [a, b].
inline double golden_section(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

/// Single-source distances by Bellman-Ford relaxation.
inline std::vector<double> bellman_ford(const Network& net, const std::vector<double>& cost, NodeId origin) {
  std::vector<double> dist(net.num_nodes(), std::numeric_limits<double>::infinity());
  dist[static_cast<std::size_t>(origin)] = 0.0;
  for (std::size_t round = 0; round + 1 < net.num_nodes(); ++round) {
    bool changed = false;
    for (std::size_t e = 0; e < net.num_edges(); ++e) {
      const auto& ed = net.edges()[e];
      const double via = dist[static_cast<std::size_t>(ed.tail)] + cost[e];
      if (via < dist[static_cast<std::size_t>(ed.head)]) {
        dist[static_cast<std::size_t>(ed.head)] = via;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return dist;
}

/// All simple paths from `s` to `t` by depth-first search, as edge sequences.
inline std::vector<std::vector<EdgeId>> dfs_paths(const Network& net, NodeId s, NodeId t) {
  std::vector<std::vector<EdgeId>> out;
  std::vector<EdgeId> stack;
  std::vector<bool> on(net.num_nodes(), false);
  std::function<void(NodeId)> go = [&](NodeId v) {
    if (v == t) {
      out.push_back(stack);
      return;
    }
    on[static_cast<std::size_t>(v)] = true;
    for (std::size_t e = 0; e < net.num_edges(); ++e) {
      const auto& ed = net.edges()[e];
      if (ed.tail != v || on[static_cast<std::size_t>(ed.head)]) continue;
      stack.push_back(static_cast<EdgeId>(e));
      go(ed.head);
      stack.pop_back();
    }
    on[static_cast<std::size_t>(v)] = false;
  };
  go(s);
  return out;
}

/// Euclidean projection onto the simplex by enumerating supports: for every
/// support S the candidate x_S = v_S - tau with sum 1 is kept when feasible,
/// and the closest feasible candidate wins. Exponential; n <= 16.
inline Eigen::VectorXd simplex_projection_bruteforce(const Eigen::VectorXd& v) {
  const auto n = static_cast<int>(v.size());
  Eigen::VectorXd best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    double sum = 0.0;
    int k = 0;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        sum += v[i];
        ++k;
      }
    }
    const double tau = (sum - 1.0) / k;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    bool ok = true;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        x[i] = v[i] - tau;
        if (x[i] < -1e-15) ok = false;
      }
    }
    if (!ok) continue;
    x = x.cwiseMax(0.0);
    const double d = (x - v).squaredNorm();
    if (d < best_dist) {
      best_dist = d;
      best = x;
    }
  }
  return best;
}

/// Wardrop equilibrium of parallel affine links l_i = a_i x + b_i (a_i > 0)
/// by bisection on the common latency level.
inline Eigen::VectorXd affine_parallel_we(const std::vector<double>& a, const std::vector<double>& b, double demand) {
  auto load = [&](double level) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::max(0.0, (level - b[i]) / a[i]);
    return s;
  };
  double lo = *std::min_element(b.begin(), b.end()), hi = lo + 1.0;
  while (load(hi) < demand) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (load(mid) < demand ? lo : hi) = mid;
  }
  const double level = 0.5 * (lo + hi);
  Eigen::VectorXd q(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) q[static_cast<Eigen::Index>(i)] = std::max(0.0, (level - b[i]) / a[i]);
  return q;
}

/// Root of a nondecreasing function on [lo, hi]; an endpoint when there is no sign change.
inline double monotone_root(const std::function<double(double)>& f, double lo, double hi) {
  if (f(lo) >= 0.0) return lo;
  if (f(hi) <= 0.0) return hi;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Poisoned equilibrium of a small instance given by its path-edge incidence:
/// minimises sum_e int_0^{(Phi Delta mu)_e} l_e over path flows with at most
/// two free coordinates. `od_paths` lists the path indices of each OD pair:
/// two or three paths for a single pair, or two pairs of two paths each.
/// Nested bisection on path-cost differences, accurate to machine precision.
struct SmallPwe {
  Eigen::MatrixXd delta;                    ///< |E| x |P|
  std::vector<wardrop::LatencyFamily> lat;  ///< per edge
  std::vector<std::vector<int>> od_paths;   ///< path indices per OD pair

  Eigen::VectorXd path_costs(const Eigen::MatrixXd& phi, const Eigen::VectorXd& mu) const {
    const Eigen::VectorXd x = phi * (delta * mu);
    Eigen::VectorXd l(x.size());
    for (Eigen::Index e = 0; e < x.size(); ++e) {
      l[e] = wardrop::eval(lat[static_cast<std::size_t>(e)], std::max(0.0, x[e]));
    }
    return delta.transpose() * (phi.transpose() * l);
  }

  Eigen::VectorXd solve(const Eigen::MatrixXd& phi, const std::vector<double>& demand) const {
    const auto np = delta.cols();
    // Free coordinates x1 (moves flow from r1 to p1) and x2 (from r2 to p2).
    int p1 = 0, r1 = 0, p2 = -1, r2 = -1;
    double hi1 = 0.0;
    std::function<double(double)> hi2;
    std::function<Eigen::VectorXd(double, double)> flows;
    if (od_paths.size() == 1) {
      const double D = demand[0];
      p1 = od_paths[0][0];
      hi1 = D;
      if (od_paths[0].size() == 2) {
        r1 = od_paths[0][1];
        flows = [=](double x1, double) {
          Eigen::VectorXd mu = Eigen::VectorXd::Zero(np);
          mu[p1] = x1;
          mu[r1] = D - x1;
          return mu;
        };
      } else {
        p2 = od_paths[0][1];
        r1 = r2 = od_paths[0][2];
        hi2 = [D](double x1) { return D - x1; };
        flows = [=](double x1, double x2) {
          Eigen::VectorXd mu = Eigen::VectorXd::Zero(np);
          mu[p1] = x1;
          mu[p2] = x2;
          mu[r1] = std::max(0.0, D - x1 - x2);
          return mu;
        };
      }
    } else {
      const double D1 = demand[0], D2 = demand[1];
      p1 = od_paths[0][0];
      r1 = od_paths[0][1];
      p2 = od_paths[1][0];
      r2 = od_paths[1][1];
      hi1 = D1;
      hi2 = [D2](double) { return D2; };
      flows = [=](double x1, double x2) {
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(np);
        mu[p1] = x1;
        mu[r1] = D1 - x1;
        mu[p2] = x2;
        mu[r2] = D2 - x2;
        return mu;
      };
    }
    auto diff = [&](const Eigen::VectorXd& mu, int p, int r) {
      const auto c = path_costs(phi, mu);
      return c[p] - c[r];
    };
    if (p2 < 0) return flows(monotone_root([&](double x1) { return diff(flows(x1, 0.0), p1, r1); }, 0.0, hi1), 0.0);
    auto inner = [&](double x1) {
      return monotone_root([&](double x2) { return diff(flows(x1, x2), p2, r2); }, 0.0, hi2(x1));
    };
    // Envelope: the derivative of the inner minimum in x1 is the p1-r1 cost difference there.
    const double x1 = monotone_root([&](double v) { return diff(flows(v, inner(v)), p1, r1); }, 0.0, hi1);
    return flows(x1, inner(x1));
  }
};

/// A random column-stochastic matrix (uniform columns on the simplex).
inline Eigen::MatrixXd random_stochastic(Eigen::Index n, std::mt19937_64& rng) {
  std::exponential_distribution<double> ex(1.0);
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) m(i, j) = ex(rng);
    m.col(j) /= m.col(j).sum();
  }
  return m;
}

}  // namespace oracle
