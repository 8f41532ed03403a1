#include <doctest.h>

#include <cmath>

#include "gradient_check.hpp"
#include "helpers.hpp"
#include "wardrop/error.hpp"
#include "wardrop/learning.hpp"

using namespace wardrop;

namespace {

SolverConfig tight() {
  SolverConfig c;
  c.rel_gap_tol = 1e-10;
  c.max_iters = 50000;
  return c;
}

double dist_to_identity(const AttackParams& a) {
  const auto n = a.phi_theta.rows(), w = a.phi_d.rows();
  return std::sqrt((a.phi_theta - Eigen::MatrixXd::Identity(n, n)).squaredNorm() +
                   (a.phi_d - Eigen::MatrixXd::Identity(w, w)).squaredNorm());
}

}  // namespace

TEST_SUITE("learning") {
  TEST_CASE("first-order learning lowers the utility and stays in C") {
    const auto in = gradcheck::instances()[3];
    const AttackContext ctx(in.net, 4.0, tight());
    LearnerConfig cfg;
    cfg.gradient_mode = GradientMode::ift;
    cfg.outer_iters = 15;
    cfg.eta0 = 0.05;
    cfg.initial = in.attack;
    std::vector<AttackParams> seen;
    const auto res = run_first_order(ctx, cfg, [&](int, const AttackParams& a) {
      seen.push_back(a);
      return std::string();
    });
    CHECK_FALSE(res.aborted);
    REQUIRE(!res.trace.rows.empty());
    CHECK(res.final_eval.eval.utility < res.trace.rows.front().utility);
    for (const auto& a : seen) CHECK_NOTHROW(a.validate(1e-8));
    CHECK((seen.back().phi_theta.array() >= 0.0).all());
  }

  TEST_CASE("gamma = 0 keeps the identity attack in place") {
    const auto in = gradcheck::instances()[1];
    const AttackContext ctx(in.net, 0.0, tight());
    LearnerConfig cfg;
    cfg.gradient_mode = GradientMode::ift;
    cfg.outer_iters = 10;
    const auto first = run_first_order(ctx, cfg);
    CHECK(dist_to_identity(first.attack) == 0.0);
    CHECK(first.stationary);

    LearnerConfig z;
    z.outer_iters = 30;
    z.rng_seed = 5;
    z.baseline = true;
    const auto zeroth = run_zeroth_order(ctx, z);
    CHECK_FALSE(zeroth.aborted);
    CHECK(dist_to_identity(zeroth.attack) <= 0.1);
  }

  TEST_CASE("seeded zeroth-order runs are reproducible across thread counts") {
    const auto in = gradcheck::instances()[2];
    const AttackContext ctx(in.net, 2.0, tight());
    LearnerConfig cfg;
    cfg.outer_iters = 8;
    cfg.m = 12;
    cfg.rng_seed = 77;
    cfg.threads = 1;
    const auto a = run_zeroth_order(ctx, cfg);
    cfg.threads = 4;
    const auto b = run_zeroth_order(ctx, cfg);
    CHECK(trace_to_csv(a.trace) == trace_to_csv(b.trace));
    CHECK(a.attack.phi_theta == b.attack.phi_theta);
    cfg.rng_seed = 78;
    const auto c = run_zeroth_order(ctx, cfg);
    CHECK(trace_to_csv(a.trace) != trace_to_csv(c.trace));
  }

  TEST_CASE("trace schema") {
    LearningTrace t;
    t.rows.push_back({});
    const auto csv = trace_to_csv(t);
    CHECK(csv.rfind("iter,ppoa,utility,cost_term,grad_norm,eta,stationarity,pwe_iters,pwe_gap,pwe_converged,dropped,checkpoint\n", 0) == 0);
    CHECK(trace_to_json(t).find("wall_ms") != std::string::npos);
    CHECK(csv.find("wall") == std::string::npos);
  }

  TEST_CASE("stationarity measure") {
    const auto id = identity_attack(3, 1);
    AttackGradient zero{Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Zero(1, 1)};
    CHECK(stationarity(id, zero, 0.1) == 0.0);
    // A gradient pushing mass out of the diagonal is blocked only by the constraints it violates.
    AttackGradient g{Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Zero(1, 1)};
    g.theta(0, 0) = 1.0;
    CHECK(stationarity(id, g, 0.1) > 0.0);
    // Pushing the diagonal upward is infeasible, so the projected step is zero.
    g.theta(0, 0) = -1.0;
    CHECK(stationarity(id, g, 0.1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS_AS(stationarity(id, g, 0.0), DomainError);
  }

  TEST_CASE("configuration validation") {
    LearnerConfig c;
    c.anneal = 0.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.r = -1.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    CHECK(c.eta(76, 0) == doctest::Approx(0.1 / std::sqrt(76.0)));
    CHECK(c.eta(76, 2) == doctest::Approx(0.1 / std::sqrt(76.0) * 0.95 * 0.95));
  }

  TEST_CASE("second-order check at the identity with gamma = 0") {
    const auto in = gradcheck::instances()[1];
    const AttackContext ctx(in.net, 0.0, tight());
    const auto rep = check_dse(identity_attack(2, 1), ctx, 1e-6);
    CHECK(rep.first_order);
    REQUIRE(rep.min_eigenvalue.has_value());
    CHECK(*rep.min_eigenvalue == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(rep.second_order);
    CHECK(rep.tangent_dim == 2);
  }
}
