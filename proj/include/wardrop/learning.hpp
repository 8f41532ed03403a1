#pragma once

// Stackelberg learning loops for the attacker: projected gradient steps on C
// with an annealed learning rate, driven either by implicit-function
// gradients (or finite differences) or by one-point bandit estimates built
// from equilibrium outcomes alone.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wardrop/equilibrium.hpp"
#include "wardrop/poisoning.hpp"
#include "wardrop/sensitivity.hpp"

namespace wardrop {

enum class GradientMode { ift, finite_difference, zeroth_order };

const char* gradient_mode_name(GradientMode m) noexcept;
const char* sampling_mode_name(SamplingMode m) noexcept;

struct LearnerConfig {
  std::optional<double> eta0;   ///< default 0.1 / sqrt(|E|)
  double anneal = 0.95;
  std::optional<double> gamma;  ///< overrides the context's gamma when set
  std::size_t m = 16;
  double r = 0.05;
  int outer_iters = 30;
  std::uint64_t rng_seed = 0;
  SamplingMode sampling_mode = SamplingMode::sphere;
  GradientMode gradient_mode = GradientMode::zeroth_order;
  bool baseline = false;         ///< subtract the centre utility in the estimator
  double stationarity_tol = 1e-4;
  bool allow_fd_fallback = false;
  double fd_step = 1e-5;
  std::size_t max_paths_per_od = 16;  ///< path enumeration cap for path-form sensitivity
  std::size_t threads = 0;
  std::optional<AttackParams> initial;  ///< identity when unset

  void validate() const;
  double eta(std::size_t n_edges, int t) const;
};

struct TraceRow {
  int iter = 0;
  double utility = 0.0;
  double ppoa = 0.0;
  double cost_term = 0.0;
  double grad_norm = 0.0;
  double step_size = 0.0;
  double stationarity = 0.0;  ///< ||z - Proj_C(z - eta g)|| / eta
  int pwe_iters = 0;
  double pwe_gap = 0.0;
  bool pwe_converged = false;
  std::size_t dropped = 0;
  double wall_ms = 0.0;
  std::string checkpoint;     ///< file the iterate was written to, if any
};

struct LearningTrace {
  std::vector<TraceRow> rows;
};

/// Fixed-schema CSV; wall time is left out so traces of seeded runs compare byte for byte.
std::string trace_to_csv(const LearningTrace& trace);
/// Full trace including wall times.
std::string trace_to_json(const LearningTrace& trace);

struct LearningResult {
  AttackParams attack;                 ///< final iterate
  LearningTrace trace;
  AttackContext::Evaluation final_eval;  ///< equilibrium and utility at the final iterate
  bool aborted = false;
  std::string abort_reason;
  bool stationary = false;             ///< halted on the stationarity test
};

/// Called after every outer iteration with the new iterate; may write checkpoints
/// and return the file name to record in the trace.
using CheckpointHook = std::function<std::string(int iter, const AttackParams&)>;

LearningResult run_first_order(const AttackContext& ctx, const LearnerConfig& cfg, const CheckpointHook& hook = {});
LearningResult run_zeroth_order(const AttackContext& ctx, const LearnerConfig& cfg, const CheckpointHook& hook = {});

/// Gradient of the utility at `attack` through the implicit-function route:
/// edge form on parallel-link networks, path form otherwise.
AttackGradient ift_gradient(const AttackContext& ctx, const AttackParams& attack,
                            const EquilibriumResult& pwe, std::size_t max_paths_per_od = 16);

/// ||z - Proj_C(z - eta g)|| / eta
double stationarity(const AttackParams& z, const AttackGradient& g, double eta);

struct DseReport {
  double grad_norm = 0.0;  ///< projected-gradient norm with eta = 1
  bool first_order = false;
  std::optional<double> min_eigenvalue;  ///< smallest tangent Hessian eigenvalue
  bool second_order = false;
  std::size_t tangent_dim = 0;
  std::string gradient_source;
  std::string note;

  std::string to_json() const;
};

/// First- and second-order stationarity of `attack` on C. The Hessian is a
/// forward-difference estimate on the tangent directions E_ij - E_kj and is
/// skipped when the tangent dimension exceeds `max_hessian_dim`.
DseReport check_dse(const AttackParams& attack, const AttackContext& ctx, double tol,
                    GradientMode mode = GradientMode::ift, std::size_t max_hessian_dim = 64, double h = 1e-4);

}  // namespace wardrop
