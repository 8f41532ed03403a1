#include "wardrop/learning.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "wardrop/error.hpp"

namespace wardrop {

const char* gradient_mode_name(GradientMode m) noexcept {
  switch (m) {
    case GradientMode::ift: return "ift";
    case GradientMode::finite_difference: return "finite-difference";
    case GradientMode::zeroth_order: return "zeroth-order";
  }
  return "?";
}

const char* sampling_mode_name(SamplingMode m) noexcept {
  return m == SamplingMode::sphere ? "sphere" : "gaussian";
}

void LearnerConfig::validate() const {
  if (eta0 && !(*eta0 > 0.0)) throw ValidationError("eta0 must be positive");
  if (!(anneal > 0.0 && anneal <= 1.0)) throw ValidationError("anneal must lie in (0, 1]");
  if (gamma && !(*gamma >= 0.0)) throw ValidationError("gamma must be nonnegative");
  if (m < 1) throw ValidationError("m must be at least 1");
  if (!(r > 0.0)) throw ValidationError("r must be positive");
  if (outer_iters < 0) throw ValidationError("outer_iters must be nonnegative");
  if (!(fd_step > 0.0)) throw ValidationError("fd_step must be positive");
}

double LearnerConfig::eta(std::size_t n_edges, int t) const {
  const double base = eta0 ? *eta0 : 0.1 / std::sqrt(static_cast<double>(n_edges));
  return base * std::pow(anneal, t);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double frob(const AttackGradient& g) { return std::sqrt(g.theta.squaredNorm() + g.d.squaredNorm()); }

AttackParams step(const AttackParams& z, const AttackGradient& g, double eta) {
  AttackParams next = project_to_C(z.phi_theta - eta * g.theta, z.phi_d - eta * g.d);
  next.validate(1e-8);
  return next;
}

AttackContext with_gamma(const AttackContext& ctx, const LearnerConfig& cfg) {
  AttackContext local = ctx;
  if (cfg.gamma) local.set_gamma(*cfg.gamma);
  return local;
}

AttackParams initial_point(const AttackContext& ctx, const LearnerConfig& cfg) {
  AttackParams z = cfg.initial ? *cfg.initial : identity_attack(ctx.network().num_edges(), ctx.network().num_od());
  if (z.phi_theta.rows() != static_cast<Eigen::Index>(ctx.network().num_edges()) ||
      z.phi_d.rows() != static_cast<Eigen::Index>(ctx.network().num_od())) {
    throw ValidationError("initial attack does not match the network");
  }
  z.validate(1e-8);
  return z;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

TraceRow base_row(int t, const AttackContext::Evaluation& ev) {
  TraceRow row;
  row.iter = t;
  row.utility = ev.eval.utility;
  row.ppoa = ev.eval.ppoa;
  row.cost_term = ev.eval.cost_term;
  row.pwe_iters = ev.pwe.iters;
  row.pwe_gap = ev.pwe.rel_gap;
  row.pwe_converged = ev.pwe.converged;
  return row;
}

template <class Gradient>
LearningResult run_loop(const AttackContext& ctx, const LearnerConfig& cfg, const CheckpointHook& hook, bool halt_on_stationary,
                        Gradient&& gradient) {
  cfg.validate();
  LearningResult res;
  AttackParams z = initial_point(ctx, cfg);
  const std::size_t n_edges = ctx.network().num_edges();
  std::optional<EquilibriumResult> prev;
  for (int t = 0; t < cfg.outer_iters; ++t) {
    const auto start = std::chrono::steady_clock::now();
    auto ev = ctx.evaluate(z, prev ? &*prev : nullptr);
    if (!ev.eval.valid) {
      res.aborted = true;
      res.abort_reason = "equilibrium solve did not converge at iteration " + std::to_string(t);
      break;
    }
    TraceRow row = base_row(t, ev);
    AttackGradient g;
    try {
      g = gradient(t, z, ev, row);
    } catch (const Error& e) {
      res.aborted = true;
      res.abort_reason = "iteration " + std::to_string(t) + ": " + e.what();
      break;
    }
    const double eta = cfg.eta(n_edges, t);
    row.grad_norm = frob(g);
    row.step_size = eta;
    row.stationarity = stationarity(z, g, eta);
    prev = std::move(ev.pwe);
    if (halt_on_stationary && row.stationarity <= cfg.stationarity_tol) {
      row.wall_ms = elapsed_ms(start);
      res.trace.rows.push_back(std::move(row));
      res.stationary = true;
      break;
    }
    z = step(z, g, eta);
    if (hook) row.checkpoint = hook(t, z);
    row.wall_ms = elapsed_ms(start);
    res.trace.rows.push_back(std::move(row));
  }
  res.attack = z;
  res.final_eval = ctx.evaluate(z, prev ? &*prev : nullptr);
  return res;
}

}  // namespace

double stationarity(const AttackParams& z, const AttackGradient& g, double eta) {
  if (!(eta > 0.0)) throw DomainError("stationarity: eta must be positive");
  const AttackParams p = project_to_C(z.phi_theta - eta * g.theta, z.phi_d - eta * g.d);
  return std::sqrt((z.phi_theta - p.phi_theta).squaredNorm() + (z.phi_d - p.phi_d).squaredNorm()) / eta;
}

AttackGradient ift_gradient(const AttackContext& ctx, const AttackParams& attack, const EquilibriumResult& pwe,
                            std::size_t max_paths_per_od) {
  const Network& net = ctx.network();
  const LatencyVector& fs = ctx.latencies();
  std::optional<LinearConstraints> cons;
  try {
    cons = parallel_link_constraints(net);
  } catch (const UnsupportedError&) {
  }
  if (cons) {
    const KKTPoint p = kkt_point_edge(pwe.flow.q, attack, fs, ctx.demand(), *cons);
    const auto jac = ift_jacobian_edge(p, attack, fs, ctx.demand(), *cons);
    return attack_gradient(attack, {p.primal.data(), static_cast<std::size_t>(p.primal.size())}, fs, jac,
                           ctx.s_star(), ctx.gamma());
  }
  const PathSet paths = enumerate_paths(net, max_paths_per_od);
  if (!paths.exact) {
    throw UnsupportedError("path enumeration was truncated at " + std::to_string(max_paths_per_od) +
                           " paths per OD pair; implicit gradients need the full path set");
  }
  const KKTPoint p = kkt_point_path(net, pwe, attack, paths, fs, ctx.demand());
  const auto jac = ift_jacobian_path(p, attack, paths, fs, ctx.demand());
  const Eigen::VectorXd q = paths.delta * p.primal;
  return attack_gradient(attack, {q.data(), static_cast<std::size_t>(q.size())}, fs, jac, ctx.s_star(), ctx.gamma());
}

LearningResult run_first_order(const AttackContext& ctx_in, const LearnerConfig& cfg, const CheckpointHook& hook) {
  if (cfg.gradient_mode == GradientMode::zeroth_order) {
    throw ValidationError("run_first_order needs gradient_mode ift or finite-difference");
  }
  const AttackContext ctx = with_gamma(ctx_in, cfg);
  return run_loop(ctx, cfg, hook, true,
                  [&](int, const AttackParams& z, const AttackContext::Evaluation& ev, TraceRow&) -> AttackGradient {
                    if (cfg.gradient_mode == GradientMode::finite_difference) return fd_gradient(z, ctx, cfg.fd_step);
                    try {
                      return ift_gradient(ctx, z, ev.pwe, cfg.max_paths_per_od);
                    } catch (const Error&) {
                      if (!cfg.allow_fd_fallback) throw;
                      return fd_gradient(z, ctx, cfg.fd_step);
                    }
                  });
}

LearningResult run_zeroth_order(const AttackContext& ctx_in, const LearnerConfig& cfg, const CheckpointHook& hook) {
  if (cfg.gradient_mode != GradientMode::zeroth_order) throw ValidationError("run_zeroth_order needs gradient_mode zeroth-order");
  const AttackContext ctx = with_gamma(ctx_in, cfg);
  return run_loop(ctx, cfg, hook, false,
                  [&](int t, const AttackParams& z, const AttackContext::Evaluation& ev, TraceRow& row) -> AttackGradient {
                    EstimatorConfig ec;
                    ec.m = cfg.m;
                    ec.r = cfg.r;
                    ec.seed = cfg.rng_seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(t) + 1;
                    ec.mode = cfg.sampling_mode;
                    ec.baseline = cfg.baseline;
                    ec.threads = cfg.threads;
                    const auto est = smoothed_gradient(z, equilibrium_oracle(ctx, &ev.pwe), ec);
                    row.dropped = est.diagnostics.dropped_theta + est.diagnostics.dropped_d;
                    return {est.theta, est.d};
                  });
}

// ---------------------------------------------------------------------------

std::string trace_to_csv(const LearningTrace& trace) {
  std::ostringstream out;
  out << "iter,ppoa,utility,cost_term,grad_norm,eta,stationarity,pwe_iters,pwe_gap,pwe_converged,dropped,checkpoint\n";
  for (const auto& r : trace.rows) {
    out << r.iter << ',' << fmt(r.ppoa) << ',' << fmt(r.utility) << ',' << fmt(r.cost_term) << ',' << fmt(r.grad_norm)
        << ',' << fmt(r.step_size) << ',' << fmt(r.stationarity) << ',' << r.pwe_iters << ',' << fmt(r.pwe_gap) << ','
        << (r.pwe_converged ? 1 : 0) << ',' << r.dropped << ',' << r.checkpoint << '\n';
  }
  return out.str();
}

std::string trace_to_json(const LearningTrace& trace) {
  auto rows = nlohmann::json::array();
  for (const auto& r : trace.rows) {
    rows.push_back({{"iter", r.iter},
                    {"ppoa", r.ppoa},
                    {"utility", r.utility},
                    {"cost_term", r.cost_term},
                    {"grad_norm", r.grad_norm},
                    {"eta", r.step_size},
                    {"stationarity", r.stationarity},
                    {"pwe_iters", r.pwe_iters},
                    {"pwe_gap", r.pwe_gap},
                    {"pwe_converged", r.pwe_converged},
                    {"dropped", r.dropped},
                    {"wall_ms", r.wall_ms},
                    {"checkpoint", r.checkpoint}});
  }
  return nlohmann::json{{"rows", rows}}.dump(1);
}

std::string DseReport::to_json() const {
  nlohmann::json j;
  j["grad_norm"] = grad_norm;
  j["first_order"] = first_order;
  j["min_eigenvalue"] = min_eigenvalue ? nlohmann::json(*min_eigenvalue) : nlohmann::json(nullptr);
  j["second_order"] = second_order;
  j["tangent_dim"] = tangent_dim;
  j["gradient_source"] = gradient_source;
  j["note"] = note;
  return j.dump(1);
}

DseReport check_dse(const AttackParams& attack, const AttackContext& ctx, double tol, GradientMode mode,
                    std::size_t max_hessian_dim, double h) {
  DseReport rep;
  attack.validate(1e-8);
  auto utility = [&](const AttackParams& a) {
    const auto ev = ctx.evaluate(a);
    if (!ev.eval.valid) throw ConvergenceError("equilibrium solve did not converge during the stationarity check");
    return ev.eval.utility;
  };

  AttackGradient g;
  if (mode == GradientMode::ift) {
    try {
      const auto ev = ctx.evaluate(attack);
      g = ift_gradient(ctx, attack, ev.pwe);
      rep.gradient_source = "ift";
    } catch (const Error& e) {
      rep.note = std::string("implicit gradient unavailable (") + e.what() + "); used finite differences";
      mode = GradientMode::finite_difference;
    }
  }
  if (mode != GradientMode::ift) {
    g = fd_gradient(attack, ctx);
    rep.gradient_source = "finite-difference";
  }
  rep.grad_norm = stationarity(attack, g, 1.0);
  rep.first_order = rep.grad_norm <= tol;

  // Tangent directions E_ij - E_kj, k the largest entry of column j.
  struct Dir {
    int block;
    Eigen::Index i, j, k;
  };
  std::vector<Dir> dirs;
  for (int block = 0; block < 2; ++block) {
    const Eigen::MatrixXd& m = block == 0 ? attack.phi_theta : attack.phi_d;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      Eigen::Index k = 0;
      m.col(j).maxCoeff(&k);
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (i != k) dirs.push_back({block, i, j, k});
      }
    }
  }
  rep.tangent_dim = dirs.size();
  if (dirs.empty()) {
    rep.note += rep.note.empty() ? "" : "; ";
    rep.note += "tangent space is trivial";
    rep.second_order = true;
    return rep;
  }
  if (dirs.size() > max_hessian_dim) {
    rep.note += rep.note.empty() ? "" : "; ";
    rep.note += "Hessian skipped: tangent dimension " + std::to_string(dirs.size()) + " exceeds " +
                std::to_string(max_hessian_dim);
    return rep;
  }
  auto shifted = [&](std::initializer_list<std::size_t> which) {
    AttackParams a = attack;
    for (std::size_t w : which) {
      const Dir& d = dirs[w];
      Eigen::MatrixXd& m = d.block == 0 ? a.phi_theta : a.phi_d;
      m(d.i, d.j) += h;
      m(d.k, d.j) -= h;
    }
    return a;
  };
  const auto n = static_cast<Eigen::Index>(dirs.size());
  const double f0 = utility(attack);
  Eigen::VectorXd f1(n);
  for (Eigen::Index a = 0; a < n; ++a) f1[a] = utility(shifted({static_cast<std::size_t>(a)}));
  Eigen::MatrixXd H(n, n), G = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a; b < n; ++b) {
      const double fab = utility(shifted({static_cast<std::size_t>(a), static_cast<std::size_t>(b)}));
      H(a, b) = H(b, a) = (fab - f1[a] - f1[b] + f0) / (h * h);
      const Dir& da = dirs[static_cast<std::size_t>(a)];
      const Dir& db = dirs[static_cast<std::size_t>(b)];
      if (da.block == db.block && da.j == db.j) G(a, b) = G(b, a) = (a == b) ? 2.0 : 1.0;
    }
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(H, G);
  rep.min_eigenvalue = ges.eigenvalues()(0);
  rep.second_order = *rep.min_eigenvalue > 0.0;
  return rep;
}

}  // namespace wardrop
