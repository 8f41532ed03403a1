#pragma once

// Separable edge latency functions: BPR, affine and polynomial families, their
// derivatives, closed-form Beckmann integrals and regularity diagnostics.

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "wardrop/kernels.hpp"

namespace wardrop {

/// t_f * (1 + alpha * (x / C)^beta)
struct Bpr {
  double free_flow_time = 1.0;
  double capacity = 1.0;
  double alpha = 0.15;
  double beta = 4.0;
  bool operator==(const Bpr&) const = default;
};

/// slope * x + intercept
struct Affine {
  double slope = 1.0;
  double intercept = 0.0;
  bool operator==(const Affine&) const = default;
};

/// sum_k coeffs[k] * x^k
struct Polynomial {
  std::vector<double> coeffs;
  bool operator==(const Polynomial&) const = default;
};

/// c0 + c1 * x^power, the form the SIMD kernels evaluate.
struct PowerLaw {
  double c0 = 0.0;
  double c1 = 0.0;
  std::int32_t power = 0;
};

class LatencyFamily {
 public:
  using Kind = std::variant<Bpr, Affine, Polynomial>;

  /// Throws ValidationError unless t_f > 0, C > 0, alpha >= 0, beta >= 1.
  static LatencyFamily bpr(double free_flow_time, double capacity, double alpha = 0.15, double beta = 4.0);
  static LatencyFamily affine(double slope, double intercept);
  static LatencyFamily polynomial(std::vector<double> coeffs);
  /// A flat latency; representable, but it violates strict monotonicity.
  static LatencyFamily constant(double value) { return affine(0.0, value); }

  const Kind& kind() const noexcept { return kind_; }

  /// Present when the family is exactly c0 + c1 x^p with integer p.
  std::optional<PowerLaw> power_law() const noexcept;

  bool operator==(const LatencyFamily&) const = default;

 private:
  explicit LatencyFamily(Kind kind) : kind_(std::move(kind)) {}
  Kind kind_;
};

// All four throw DomainError for x < 0.
double eval(const LatencyFamily& f, double x);
double deriv(const LatencyFamily& f, double x);
double deriv2(const LatencyFamily& f, double x);
/// Closed-form integral of the latency over [0, x].
double integral(const LatencyFamily& f, double x);

struct RegularityReport {
  double q_max = 0.0;
  double l0 = 0.0;  ///< max_e sup |l_e'| on [0, q_max]
  double l1 = 0.0;  ///< max_e sup |l_e''| on [0, q_max]
  double c0 = 0.0;  ///< max_e l_e(q_max)
  bool strictly_increasing = true;
  bool convex = true;
};

/// Regularity constants on [0, q_max]. Throws UnsupportedError for families that
/// are not twice differentiable there (BPR with 1 < beta < 2).
RegularityReport regularity(std::span<const LatencyFamily> fs, double q_max);

/// The cost a solver minimises against: user latency (equilibrium) or the
/// marginal social cost l(x) + x l'(x) (system optimum).
enum class CostKind { latency, marginal };

/// Per-edge latencies compiled for batched evaluation. When every family is a
/// power law the SIMD kernels are used; otherwise evaluation falls back to the
/// per-family scalar formulas.
class LatencyVector {
 public:
  LatencyVector() = default;
  explicit LatencyVector(std::vector<LatencyFamily> families);

  std::size_t size() const noexcept { return families_.size(); }
  const std::vector<LatencyFamily>& families() const noexcept { return families_; }
  const LatencyFamily& operator[](std::size_t e) const { return families_[e]; }
  bool vectorized() const noexcept { return vectorized_; }

  void values(std::span<const double> x, std::span<double> out, CostKind kind = CostKind::latency) const;
  /// Derivative of the selected cost.
  void derivs(std::span<const double> x, std::span<double> out, CostKind kind = CostKind::latency) const;
  /// Directional derivative sum_e dx_e * cost_e(x_e + alpha dx_e).
  double slope(std::span<const double> x, std::span<const double> dx, double alpha,
               CostKind kind = CostKind::latency) const;

  /// Beckmann potential sum_e integral_0^{x_e} l_e.
  double potential(std::span<const double> x) const;
  /// S(x) = sum_e x_e l_e(x_e).
  double aggregated(std::span<const double> x) const;

 private:
  struct Soa {
    std::vector<double> c0, c1;
    std::vector<std::int32_t> power;
    kernels::PowerLawCoeffs view() const { return {c0, c1, power}; }
    void push(const PowerLaw& p) {
      c0.push_back(p.c0);
      c1.push_back(p.c1);
      power.push_back(p.power);
    }
  };
  const Soa& table(CostKind kind, bool derivative) const;

  std::vector<LatencyFamily> families_;
  bool vectorized_ = false;
  Soa value_, deriv_, marginal_, marginal_deriv_;
};

}  // namespace wardrop
