#include "wardrop/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "wardrop/error.hpp"
#include "wardrop/kernels.hpp"

namespace wardrop {

void SolverConfig::validate() const {
  if (!(rel_gap_tol > 0.0)) throw ValidationError("rel_gap_tol must be positive");
  if (max_iters < 1) throw ValidationError("max_iters must be at least 1");
  if (!(line_search_tol > 0.0)) throw ValidationError("line_search_tol must be positive");
}

void validate_column_stochastic(const Eigen::MatrixXd& m, Eigen::Index n, const char* name, double tol) {
  if (m.rows() != n || m.cols() != n) {
    throw ValidationError(std::string(name) + " must be " + std::to_string(n) + "x" + std::to_string(n) + ", got " +
                          std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = m(i, j);
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ValidationError(std::string(name) + " has a negative or non-finite entry in column " + std::to_string(j));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw ValidationError(std::string(name) + " column " + std::to_string(j) + " sums to " + std::to_string(sum));
    }
  }
}

double line_search(const std::function<double(double)>& derivative, double tol) {
  if (derivative(0.0) >= 0.0) return 0.0;
  if (derivative(1.0) <= 0.0) return 1.0;
  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    const double g = derivative(mid);
    if (g == 0.0) return mid;
    (g < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

// Per-origin all-or-nothing loading into the columns of `y`.
void load_by_origin(const Network& net, std::span<const double> costs, std::span<const double> demand,
                    Eigen::MatrixXd& y, ShortestPathTree& tree) {
  y.setZero(static_cast<Eigen::Index>(net.num_edges()), static_cast<Eigen::Index>(net.origins().size()));
  for (std::size_t k = 0; k < net.origins().size(); ++k) {
    const NodeId o = net.origins()[k];
    shortest_paths_into(net, costs, o, tree);
    for (std::size_t w : net.od_by_origin()[k]) {
      const double dw = demand[w];
      if (dw == 0.0) continue;
      NodeId at = net.od_pairs()[w].destination;
      if (!std::isfinite(tree.dist[static_cast<std::size_t>(at)])) {
        throw UnreachableError("no finite-cost path from node " +
                               std::to_string(net.node_labels()[static_cast<std::size_t>(o)]) + " to node " +
                               std::to_string(net.node_labels()[static_cast<std::size_t>(at)]));
      }
      while (at != o) {
        const EdgeId e = tree.pred[static_cast<std::size_t>(at)];
        y(e, static_cast<Eigen::Index>(k)) += dw;
        at = net.edge(e).tail;
      }
    }
  }
}

class FrankWolfe {
 public:
  FrankWolfe(const Network& net, const LatencyVector& fs, CostKind kind, const Eigen::MatrixXd* phi,
             Eigen::VectorXd demand, const SolverConfig& cfg)
      : net_(net), fs_(fs), kind_(kind), phi_(phi), demand_(std::move(demand)), cfg_(cfg) {
    const auto n = static_cast<Eigen::Index>(net.num_edges());
    x_.resize(n);
    cost_x_.resize(n);
    c_.resize(n);
    dq_.resize(n);
    dx_.resize(n);
    hw_.resize(n);
    u_.resize(n);
    v_.resize(n);
  }

  EquilibriumResult run(const EquilibriumResult* warm) {
    EquilibriumResult r;
    r.demand = demand_;
    const auto n_edges = static_cast<Eigen::Index>(net_.num_edges());
    const std::span<const double> dem(demand_.data(), static_cast<std::size_t>(demand_.size()));

    if (warm && warm->demand.size() == demand_.size() && warm->demand == demand_ &&
        warm->origin_flows.rows() == n_edges &&
        warm->origin_flows.cols() == static_cast<Eigen::Index>(net_.origins().size())) {
      flows_ = warm->origin_flows;
    } else {
      q_.setZero(n_edges);
      transform(q_, x_);
      evaluate_costs();
      load_by_origin(net_, span(c_), dem, flows_, tree_);
    }
    q_ = flows_.rowwise().sum();

    int depth = 0;  // consecutive targets usable for conjugation
    double last_step = 1.0;
    double objective = potential();
    if (cfg_.record_history) r.objective_history.push_back(objective);
    for (int it = 0;; ++it) {
      transform(q_, x_);
      evaluate_costs();
      load_by_origin(net_, span(c_), dem, y_, tree_);
      const Eigen::VectorXd y = y_.rowwise().sum();
      const double cq = c_.dot(q_);
      const double gap = cq > 0.0 ? (cq - c_.dot(y)) / cq : 0.0;
      r.rel_gap = gap;
      if (cfg_.record_history) r.gap_history.push_back(gap);
      if (gap <= cfg_.rel_gap_tol) {
        r.converged = true;
        r.iters = it;
        break;
      }
      if (it >= cfg_.max_iters) {
        r.iters = it;
        break;
      }

      // Target: bi-conjugate combination of y and the two previous targets,
      // conjugate combination with the previous target, or y itself, taking
      // the first that descends.
      bool combined = false;
      if (cfg_.conjugate && depth >= 1 && last_step < 1.0) {
        const Eigen::VectorXd s1 = target_.rowwise().sum();
        const Eigen::VectorXd d1 = s1 - q_;  // previous target seen from the new point
        const Eigen::VectorXd dy = y - q_;
        if (depth >= 2) {
          const Eigen::VectorXd s2 = prev_target_.rowwise().sum();
          const Eigen::VectorXd d2 = last_step * s1 + (1.0 - last_step) * s2 - q_;
          // Direction dy + a d1 + b d2, H-conjugate to both d1 and d2.
          const double h11 = hess_inner(d1, d1), h12 = hess_inner(d1, d2), h22 = hess_inner(d2, d2);
          const double det = h11 * h22 - h12 * h12;
          double mu = 0.0, nu = 0.0;
          if (det > 1e-12 * h11 * h22) {
            const double r1 = -hess_inner(d1, dy), r2 = -hess_inner(d2, dy);
            const double a = (r1 * h22 - r2 * h12) / det;
            const double b = (h11 * r2 - h12 * r1) / det;
            mu = std::max(0.0, b * (1.0 - last_step));
            nu = std::max(0.0, a + mu * last_step / (1.0 - last_step));
          }
          const double b0 = 1.0 / (1.0 + mu + nu);
          if (std::isfinite(b0) && (mu > 0.0 || nu > 0.0)) {
            next_ = b0 * y_ + (nu * b0) * target_ + (mu * b0) * prev_target_;
            dq_ = next_.rowwise().sum() - q_;
            combined = c_.dot(dq_) < 0.0;
          }
        }
        if (!combined) {
          const double num = hess_inner(d1, dy);
          const double den = hess_inner(d1, y - s1);
          constexpr double kDelta = 0.01;
          double a = 0.0;
          if (den != 0.0) {
            const double ratio = num / den;
            if (ratio > 1.0 - kDelta) a = 1.0 - kDelta;
            else if (ratio >= 0.0) a = ratio;
          }
          if (a > 0.0) {
            next_ = a * target_ + (1.0 - a) * y_;
            dq_ = next_.rowwise().sum() - q_;
            combined = c_.dot(dq_) < 0.0;
          }
        }
      }
      if (!combined) {
        next_ = y_;
        dq_ = y - q_;
      }
      prev_target_.swap(target_);
      target_.swap(next_);
      depth = combined ? depth + 1 : 1;

      apply(dq_, dx_);
      const std::span<const double> xs = span(x_);
      const std::span<const double> dxs = span(dx_);
      const double step =
          line_search([&](double t) { return fs_.slope(xs, dxs, t, kind_); }, cfg_.line_search_tol);
      last_step = step;
      if (step >= 1.0) depth = 0;

      for (Eigen::Index k = 0; k < flows_.cols(); ++k) {
        double* col = flows_.col(k).data();
        const double* tgt = target_.col(k).data();
        const std::span<const double> cur(col, static_cast<std::size_t>(n_edges));
        kernels::lerp(cur, {tgt, static_cast<std::size_t>(n_edges)}, step, {col, static_cast<std::size_t>(n_edges)});
      }
      q_ = flows_.rowwise().sum();

      const double next_objective = potential();
      if (next_objective > objective + 1e-12 * std::max(1.0, std::abs(objective))) {
        throw Error("Frank-Wolfe objective increased from " + std::to_string(objective) + " to " +
                    std::to_string(next_objective) + " at iteration " + std::to_string(it + 1));
      }
      objective = next_objective;
      if (cfg_.record_history) r.objective_history.push_back(objective);
    }

    r.flow.q = q_;
    r.objective = objective;
    r.aggregated_latency = fs_.aggregated(span(q_));
    r.origin_flows = std::move(flows_);
    return r;
  }

 private:
  static std::span<const double> span(const Eigen::VectorXd& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
  }
  static std::span<double> mspan(Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

  // out = Phi in; also used for search directions, which may be negative.
  void apply(const Eigen::VectorXd& in, Eigen::VectorXd& out) const {
    if (!phi_) {
      out = in;
      return;
    }
    const auto n = static_cast<std::size_t>(in.size());
    kernels::gemv(phi_->data(), n, n, span(in), mspan(out));
  }

  // x = Phi q for a flow q; round-off negatives are clipped.
  void transform(const Eigen::VectorXd& in, Eigen::VectorXd& out) const {
    apply(in, out);
    if (!phi_) return;
    for (Eigen::Index e = 0; e < out.size(); ++e) {
      if (out[e] < 0.0) {
        if (out[e] < -1e-9 * std::max(1.0, in.cwiseAbs().maxCoeff())) {
          throw Error("poisoned edge flow became negative");
        }
        out[e] = 0.0;
      }
    }
  }

  // c = Phi^T cost(Phi q), with x_ = Phi q already set.
  void evaluate_costs() {
    fs_.values(span(x_), mspan(cost_x_), kind_);
    if (!phi_) {
      c_ = cost_x_;
    } else {
      const auto n = static_cast<std::size_t>(c_.size());
      kernels::gemv_t(phi_->data(), n, n, span(cost_x_), mspan(c_));
    }
    for (Eigen::Index e = 0; e < c_.size(); ++e) {
      if (!(c_[e] >= 0.0) || !std::isfinite(c_[e])) throw DomainError("edge cost is negative or not finite");
    }
  }

  // <a, H b> with H the Hessian of the potential at x_.
  double hess_inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    fs_.derivs(span(x_), mspan(hw_), kind_);
    transform_raw(a, u_);
    transform_raw(b, v_);
    return (u_.array() * hw_.array() * v_.array()).sum();
  }

  void transform_raw(const Eigen::VectorXd& in, Eigen::VectorXd& out) const {
    if (!phi_) {
      out = in;
      return;
    }
    const auto n = static_cast<std::size_t>(in.size());
    kernels::gemv(phi_->data(), n, n, span(in), mspan(out));
  }

  double potential() {
    transform(q_, x_);
    return kind_ == CostKind::latency ? fs_.potential(span(x_)) : fs_.aggregated(span(x_));
  }

  const Network& net_;
  const LatencyVector& fs_;
  CostKind kind_;
  const Eigen::MatrixXd* phi_;
  Eigen::VectorXd demand_;
  SolverConfig cfg_;

  Eigen::MatrixXd flows_, y_, target_, prev_target_, next_;
  Eigen::VectorXd q_, x_, cost_x_, c_, dq_, dx_, hw_, u_, v_;
  ShortestPathTree tree_;
};

Eigen::VectorXd to_vector(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void check_inputs(const Network& net, const LatencyVector& fs, std::span<const double> demand) {
  if (fs.size() != net.num_edges()) throw ValidationError("one latency function per edge is required");
  if (demand.size() != net.num_od()) throw ValidationError("demand vector length differs from OD pair count");
  for (double d : demand) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw ValidationError("demand must be finite and nonnegative");
  }
}

// With path recovery the edge flow is replaced by the cycle-free flow of the
// decomposition, and path flows are rescaled per OD pair to meet the demand
// exactly, so that Lambda mu = demand and Delta mu = q hold to rounding.
EquilibriumResult finish(const Network& net, const LatencyVector& fs, EquilibriumResult r, const SolverConfig& cfg) {
  if (cfg.recover_paths) {
    PathFlows pf = recover_path_flows(net, r);
    const Eigen::VectorXd routed = pf.paths.lambda * pf.mu;
    for (Eigen::Index p = 0; p < pf.mu.size(); ++p) {
      const auto w = static_cast<Eigen::Index>(pf.paths.od_of_path[static_cast<std::size_t>(p)]);
      if (routed[w] > 0.0) pf.mu[p] *= r.demand[w] / routed[w];
    }
    r.flow.q = pf.paths.delta * pf.mu;
    r.aggregated_latency = fs.aggregated({r.flow.q.data(), static_cast<std::size_t>(r.flow.q.size())});
    r.flow.mu = std::move(pf.mu);
    r.paths = std::move(pf.paths);
  }
  return r;
}

}  // namespace

Eigen::VectorXd all_or_nothing(const Network& net, std::span<const double> edge_costs,
                               std::span<const double> demand) {
  if (edge_costs.size() != net.num_edges()) throw ValidationError("edge cost vector has the wrong length");
  if (demand.size() != net.num_od()) throw ValidationError("demand vector length differs from OD pair count");
  for (double c : edge_costs) {
    if (!(c >= 0.0)) throw DomainError("all_or_nothing: edge costs must be nonnegative");
  }
  Eigen::MatrixXd y;
  ShortestPathTree tree;
  load_by_origin(net, edge_costs, demand, y, tree);
  return y.rowwise().sum();
}

EquilibriumResult solve_we(const Network& net, const LatencyVector& fs, std::span<const double> demand,
                           const SolverConfig& cfg) {
  cfg.validate();
  check_inputs(net, fs, demand);
  FrankWolfe fw(net, fs, CostKind::latency, nullptr, to_vector(demand), cfg);
  return finish(net, fs, fw.run(nullptr), cfg);
}

EquilibriumResult solve_we(const Network& net, const SolverConfig& cfg) {
  const LatencyVector fs = net.latencies();
  return solve_we(net, fs, net.demand(), cfg);
}

EquilibriumResult solve_so(const Network& net, const LatencyVector& fs, std::span<const double> demand,
                           const SolverConfig& cfg) {
  cfg.validate();
  check_inputs(net, fs, demand);
  FrankWolfe fw(net, fs, CostKind::marginal, nullptr, to_vector(demand), cfg);
  return finish(net, fs, fw.run(nullptr), cfg);
}

EquilibriumResult solve_so(const Network& net, const SolverConfig& cfg) {
  const LatencyVector fs = net.latencies();
  return solve_so(net, fs, net.demand(), cfg);
}

EquilibriumResult solve_pwe(const Network& net, const LatencyVector& fs, std::span<const double> demand,
                            const Eigen::MatrixXd& phi_theta, const Eigen::MatrixXd& phi_d, const SolverConfig& cfg,
                            const EquilibriumResult* warm) {
  cfg.validate();
  check_inputs(net, fs, demand);
  validate_column_stochastic(phi_theta, static_cast<Eigen::Index>(net.num_edges()), "phi_theta", 1e-8);
  validate_column_stochastic(phi_d, static_cast<Eigen::Index>(net.num_od()), "phi_d", 1e-8);
  const Eigen::VectorXd effective = phi_d * to_vector(demand);
  const bool identity = phi_theta.isIdentity(0.0);
  FrankWolfe fw(net, fs, CostKind::latency, identity ? nullptr : &phi_theta, effective, cfg);
  return finish(net, fs, fw.run(warm), cfg);
}

// ---------------------------------------------------------------------------
// Path recovery

namespace {

// Removes directed cycles from a single-origin flow by cancelling the
// bottleneck amount around each cycle found by depth-first search.
void cancel_cycles(const Network& net, Eigen::Ref<Eigen::VectorXd> f) {
  const std::size_t n = net.num_nodes();
  std::vector<char> color(n);
  std::vector<EdgeId> via(n);
  std::vector<std::pair<NodeId, std::size_t>> stack;
  while (true) {
    std::fill(color.begin(), color.end(), 0);
    std::vector<EdgeId> cycle;
    for (std::size_t s = 0; s < n && cycle.empty(); ++s) {
      if (color[s]) continue;
      stack.assign(1, {static_cast<NodeId>(s), 0});
      color[s] = 1;
      while (!stack.empty() && cycle.empty()) {
        auto& [u, pos] = stack.back();
        const auto out = net.out_edges(u);
        if (pos == out.size()) {
          color[static_cast<std::size_t>(u)] = 2;
          stack.pop_back();
          continue;
        }
        const EdgeId e = out[pos++];
        if (!(f[e] > 0.0)) continue;
        const NodeId v = net.edge(e).head;
        const auto vi = static_cast<std::size_t>(v);
        if (color[vi] == 1) {
          // Back edge: the cycle is v -> ... -> u -> v along `via`.
          cycle.push_back(e);
          for (NodeId at = u; at != v;) {
            const EdgeId pe = via[static_cast<std::size_t>(at)];
            cycle.push_back(pe);
            at = net.edge(pe).tail;
          }
        } else if (color[vi] == 0) {
          color[vi] = 1;
          via[vi] = e;
          stack.emplace_back(v, 0);
        }
      }
    }
    if (cycle.empty()) return;
    double bottleneck = f[cycle.front()];
    for (EdgeId e : cycle) bottleneck = std::min(bottleneck, f[e]);
    for (EdgeId e : cycle) f[e] = (f[e] == bottleneck) ? 0.0 : f[e] - bottleneck;
  }
}

}  // namespace

PathFlows recover_path_flows(const Network& net, const EquilibriumResult& result, double tol) {
  const auto n_edges = static_cast<Eigen::Index>(net.num_edges());
  if (result.origin_flows.rows() != n_edges ||
      result.origin_flows.cols() != static_cast<Eigen::Index>(net.origins().size())) {
    throw ValidationError("result carries no per-origin flows for this network");
  }
  std::vector<std::vector<EdgeId>> in_edges(net.num_nodes());
  for (std::size_t e = 0; e < net.num_edges(); ++e) in_edges[static_cast<std::size_t>(net.edge(static_cast<EdgeId>(e)).head)].push_back(static_cast<EdgeId>(e));

  const double floor = tol * std::max(1.0, result.demand.sum());
  std::vector<std::pair<std::size_t, std::vector<EdgeId>>> paths;
  std::vector<double> mu;
  for (std::size_t k = 0; k < net.origins().size(); ++k) {
    const NodeId o = net.origins()[k];
    Eigen::VectorXd f = result.origin_flows.col(static_cast<Eigen::Index>(k)).cwiseMax(0.0);
    cancel_cycles(net, f);
    for (std::size_t w : net.od_by_origin()[k]) {
      std::map<std::vector<EdgeId>, std::size_t> index;
      double remaining = result.demand[static_cast<Eigen::Index>(w)];
      const NodeId dest = net.od_pairs()[w].destination;
      while (remaining > floor) {
        std::vector<EdgeId> path;
        double bottleneck = remaining;
        bool stuck = false;
        for (NodeId at = dest; at != o;) {
          EdgeId best = -1;
          for (EdgeId e : in_edges[static_cast<std::size_t>(at)]) {
            if (f[e] > 0.0 && (best < 0 || f[e] > f[best])) best = e;
          }
          if (best < 0) {
            stuck = true;
            break;
          }
          path.push_back(best);
          bottleneck = std::min(bottleneck, f[best]);
          at = net.edge(best).tail;
        }
        if (stuck) break;  // residue below rounding of the conservation equations
        std::reverse(path.begin(), path.end());
        for (EdgeId e : path) f[e] = (f[e] == bottleneck) ? 0.0 : std::max(0.0, f[e] - bottleneck);
        remaining -= bottleneck;
        const auto [it, inserted] = index.try_emplace(path, paths.size());
        if (inserted) {
          paths.emplace_back(w, std::move(path));
          mu.push_back(bottleneck);
        } else {
          mu[it->second] += bottleneck;
        }
      }
    }
  }
  PathFlows out;
  out.paths = PathSet::build(net, std::move(paths), false);
  out.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
  return out;
}

}  // namespace wardrop
