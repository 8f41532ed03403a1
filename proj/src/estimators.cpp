#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "wardrop/error.hpp"
#include "wardrop/parallel.hpp"
#include "wardrop/sensitivity.hpp"

namespace wardrop {

namespace {

Eigen::MatrixXd gaussian_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = normal(rng);
  return m;
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Block {
  Eigen::MatrixXd grad;
  std::size_t probes = 0, dropped = 0;
  double variance = 0.0, std_error = 0.0;
};

}  // namespace

std::string EstimatorDiagnostics::to_json() const {
  nlohmann::json j;
  j["probes_theta"] = probes_theta;
  j["dropped_theta"] = dropped_theta;
  j["probes_d"] = probes_d;
  j["dropped_d"] = dropped_d;
  j["variance_theta"] = variance_theta;
  j["variance_d"] = variance_d;
  j["std_error_theta"] = std_error_theta;
  j["std_error_d"] = std_error_d;
  j["centre_utility"] = centre_utility;
  return j.dump(1);
}

SmoothedGradient smoothed_gradient(const AttackParams& centre, const UtilityOracle& utility,
                                   const EstimatorConfig& cfg) {
  if (cfg.m < 1) throw DomainError("smoothed_gradient: m must be at least 1");
  if (!(cfg.r > 0.0)) throw DomainError("smoothed_gradient: r must be positive");
  if (cfg.project) centre.validate(1e-8);

  const auto n_e = centre.phi_theta.rows();
  const auto n_w = centre.phi_d.rows();

  // All randomness first, theta block then d block, from one stream.
  std::mt19937_64 rng(cfg.seed);
  auto draw = [&](Eigen::Index n) {
    std::vector<Eigen::MatrixXd> us;
    us.reserve(cfg.m);
    for (std::size_t i = 0; i < cfg.m; ++i) {
      Eigen::MatrixXd u = gaussian_matrix(rng, n, n);
      if (cfg.mode == SamplingMode::sphere) u *= cfg.r / u.norm();
      else u *= cfg.r;
      us.push_back(std::move(u));
    }
    return us;
  };
  const std::vector<Eigen::MatrixXd> u_theta = cfg.estimate_theta ? draw(n_e) : std::vector<Eigen::MatrixXd>{};
  const std::vector<Eigen::MatrixXd> u_d = cfg.estimate_d ? draw(n_w) : std::vector<Eigen::MatrixXd>{};

  double base = 0.0;
  SmoothedGradient out;
  if (cfg.baseline) {
    const auto c = utility(centre);
    if (!c) throw EstimatorError("utility at the centre could not be evaluated");
    base = *c;
    out.diagnostics.centre_utility = base;
  }

  const std::size_t n_theta = u_theta.size();
  const std::size_t total = n_theta + u_d.size();
  std::vector<std::optional<double>> values(total);
  parallel_for(
      total,
      [&](std::size_t i) {
        AttackParams probe = centre;
        if (i < n_theta) {
          probe.phi_theta += u_theta[i];
          if (cfg.project) probe.phi_theta = project_columns(probe.phi_theta);
        } else {
          probe.phi_d += u_d[i - n_theta];
          if (cfg.project) probe.phi_d = project_columns(probe.phi_d);
        }
        values[i] = utility(probe);
      },
      cfg.threads);

  auto reduce = [&](const std::vector<Eigen::MatrixXd>& us, std::size_t offset, Eigen::Index n, const char* name) {
    Block b;
    b.grad = Eigen::MatrixXd::Zero(n, n);
    b.probes = us.size();
    if (us.empty()) return b;
    const double dim = static_cast<double>(n * n);
    const double coef = (cfg.mode == SamplingMode::sphere ? dim : 1.0) / (cfg.r * cfg.r);
    double sq = 0.0;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < us.size(); ++i) {
      const auto& v = values[offset + i];
      if (!v) {
        ++b.dropped;
        continue;
      }
      const double s = coef * (*v - base);
      b.grad += s * us[i];
      sq += s * s * us[i].squaredNorm();
      ++kept;
    }
    if (static_cast<double>(b.dropped) > cfg.max_drop_fraction * static_cast<double>(us.size()) || kept == 0) {
      throw EstimatorError(std::string(name) + " block lost " + std::to_string(b.dropped) + " of " +
                           std::to_string(us.size()) + " probes");
    }
    b.grad /= static_cast<double>(kept);
    if (kept > 1) {
      b.variance = std::max(0.0, (sq - static_cast<double>(kept) * b.grad.squaredNorm()) / static_cast<double>(kept - 1));
      b.std_error = std::sqrt(b.variance / static_cast<double>(kept));
    }
    return b;
  };
  const Block bt = reduce(u_theta, 0, n_e, "theta");
  const Block bd = reduce(u_d, n_theta, n_w, "d");
  out.theta = bt.grad;
  out.d = bd.grad;
  auto& dg = out.diagnostics;
  dg.probes_theta = bt.probes;
  dg.dropped_theta = bt.dropped;
  dg.variance_theta = bt.variance;
  dg.std_error_theta = bt.std_error;
  dg.probes_d = bd.probes;
  dg.dropped_d = bd.dropped;
  dg.variance_d = bd.variance;
  dg.std_error_d = bd.std_error;
  return out;
}

UtilityOracle equilibrium_oracle(const AttackContext& ctx, const EquilibriumResult* warm) {
  return [&ctx, warm](const AttackParams& a) -> std::optional<double> {
    const auto ev = ctx.evaluate(a, warm);
    if (!ev.eval.valid) return std::nullopt;
    return ev.eval.utility;
  };
}

std::size_t sample_bound(std::size_t dim, double eps, double bound, double r, double delta) {
  if (dim < 1 || !(eps > 0.0) || !(bound >= 0.0) || !(r > 0.0) || !(delta > 0.0 && delta < 1.0)) {
    throw DomainError("sample_bound: invalid arguments");
  }
  const double sigma = static_cast<double>(dim) * bound / r;
  const double n = (8.0 * sigma * sigma / (eps * eps) + 4.0 * sigma / (3.0 * eps)) *
                   std::log(static_cast<double>(dim + 1) / delta);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(n)));
}

double radius_bound(double eps, double L1) {
  if (!(eps > 0.0) || !(L1 > 0.0)) throw DomainError("radius_bound: eps and L1 must be positive");
  return eps / (2.0 * L1);
}

// ---------------------------------------------------------------------------

std::string SmoothnessConstants::to_json() const {
  nlohmann::json j;
  j["L0"] = L0;
  j["L1"] = L1;
  j["l_q"] = l_q;
  j["C0"] = C0;
  j["C1"] = C1;
  j["c0"] = c0;
  j["l0"] = l0;
  j["l1"] = l1;
  j["dl_at_D"] = dl_at_D;
  j["D_total"] = D_total;
  j["n_edges"] = n_edges;
  j["gamma"] = gamma;
  j["s_star"] = s_star;
  return j.dump(1);
}

SmoothnessConstants smoothness_constants(const Network& net, const LatencyVector& fs, std::span<const double> demand,
                                         double gamma, double s_star, std::optional<double> l_q,
                                         std::optional<double> C0, std::optional<double> C1) {
  std::string missing;
  if (!l_q) missing += " l_q";
  if (!C0) missing += " C0";
  if (!C1) missing += " C1";
  if (!missing.empty()) throw ValidationError("smoothness_constants: missing" + missing);
  if (!(s_star > 0.0) || !(gamma >= 0.0)) throw DomainError("smoothness_constants: need s_star > 0 and gamma >= 0");
  if (fs.size() != net.num_edges()) throw ValidationError("one latency function per edge is required");

  SmoothnessConstants k;
  k.l_q = *l_q;
  k.C0 = *C0;
  k.C1 = *C1;
  k.gamma = gamma;
  k.s_star = s_star;
  k.n_edges = net.num_edges();
  for (double d : demand) k.D_total += d;
  const auto reg = regularity(fs.families(), k.D_total);
  k.c0 = reg.c0;
  k.l0 = reg.l0;
  k.l1 = reg.l1;
  for (const auto& f : fs.families()) k.dl_at_D = std::max(k.dl_at_D, deriv(f, k.D_total));

  const double root_e = std::sqrt(static_cast<double>(k.n_edges));
  const double D = k.D_total;
  k.L0 = (std::sqrt(2.0) + gamma * (k.c0 + k.l0 * D) * k.l_q / s_star) * root_e;
  k.L1 = 1.0 + (gamma / s_star) *
                   (k.C0 * k.l_q * (k.l0 + k.dl_at_D) + k.C1 * k.c0 +
                    D * root_e * (k.C0 * k.l1 * k.l_q + k.C1 * k.dl_at_D)) *
                   root_e;
  return k;
}

AttackParams random_nearby(const AttackParams& centre, double radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Eigen::MatrixXd ut = gaussian_matrix(rng, centre.phi_theta.rows(), centre.phi_theta.cols());
  const Eigen::MatrixXd ud = gaussian_matrix(rng, centre.phi_d.rows(), centre.phi_d.cols());
  const double norm = std::sqrt(ut.squaredNorm() + ud.squaredNorm());
  const double s = norm > 0.0 ? radius / norm : 0.0;
  return project_to_C(centre.phi_theta + s * ut, centre.phi_d + s * ud);
}

EmpiricalConstants estimate_constants(const AttackContext& ctx, const AttackParams& centre,
                                      const PairSampling& sampling) {
  if (sampling.pairs < 1 || !(sampling.radius > 0.0)) throw DomainError("estimate_constants: invalid sampling");
  struct Sample {
    bool ok = false;
    double lq = 0.0, c0 = 0.0, c1 = 0.0;
  };
  std::vector<Sample> samples(sampling.pairs);
  parallel_for(
      sampling.pairs,
      [&](std::size_t i) {
        const AttackParams z1 = random_nearby(centre, 5.0 * sampling.radius, sampling.seed + 2 * i);
        const AttackParams z2 = random_nearby(z1, sampling.radius, sampling.seed + 2 * i + 1);
        const AttackParams mid{0.5 * (z1.phi_theta + z2.phi_theta), 0.5 * (z1.phi_d + z2.phi_d)};
        const auto e1 = ctx.evaluate(z1);
        const auto e2 = ctx.evaluate(z2);
        const auto em = ctx.evaluate(mid);
        if (!e1.pwe.converged || !e2.pwe.converged || !em.pwe.converged) return;
        const double dz = std::sqrt((z1.phi_theta - z2.phi_theta).squaredNorm() + (z1.phi_d - z2.phi_d).squaredNorm());
        if (!(dz > 0.0)) return;
        const Eigen::VectorXd dq = e1.pwe.flow.q - e2.pwe.flow.q;
        Sample s;
        s.ok = true;
        s.lq = dq.norm() / dz;
        s.c0 = dq.cwiseAbs().maxCoeff() / dz;
        const Eigen::VectorXd second = e1.pwe.flow.q + e2.pwe.flow.q - 2.0 * em.pwe.flow.q;
        s.c1 = second.cwiseAbs().maxCoeff() / (0.25 * dz * dz);
        samples[i] = s;
      },
      sampling.threads);

  EmpiricalConstants out;
  std::vector<double> lq, c0, c1;
  for (const auto& s : samples) {
    if (!s.ok) {
      ++out.failures;
      continue;
    }
    lq.push_back(s.lq);
    c0.push_back(s.c0);
    c1.push_back(s.c1);
  }
  out.pairs = lq.size();
  out.l_q = percentile(lq, 0.99);
  out.C0 = percentile(c0, 0.99);
  out.C1 = percentile(c1, 0.99);
  return out;
}

}  // namespace wardrop
