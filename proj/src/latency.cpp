#include "wardrop/latency.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wardrop/error.hpp"

namespace wardrop {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::int32_t kMaxKernelPower = 16;

void check_domain(double x, const char* op) {
  if (!(x >= 0.0)) throw DomainError(std::string(op) + ": flow must be nonnegative, got " + std::to_string(x));
}

double bpr_scale(const Bpr& b) { return b.free_flow_time * b.alpha / std::pow(b.capacity, b.beta); }

double horner(const std::vector<double>& c, double x) {
  double v = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * x + *it;
  return v;
}

// Unchecked formulas shared by the public functions and LatencyVector.
double value_of(const LatencyFamily& f, double x) {
  return std::visit(overloaded{
                        [x](const Bpr& b) { return b.free_flow_time * (1.0 + b.alpha * std::pow(x / b.capacity, b.beta)); },
                        [x](const Affine& a) { return a.slope * x + a.intercept; },
                        [x](const Polynomial& p) { return horner(p.coeffs, x); },
                    },
                    f.kind());
}

double deriv_of(const LatencyFamily& f, double x) {
  return std::visit(overloaded{
                        [x](const Bpr& b) {
                          if (b.beta == 1.0) return bpr_scale(b);
                          return bpr_scale(b) * b.beta * std::pow(x, b.beta - 1.0);
                        },
                        [](const Affine& a) { return a.slope; },
                        [x](const Polynomial& p) {
                          double v = 0.0;
                          for (std::size_t k = p.coeffs.size(); k-- > 1;) v = v * x + static_cast<double>(k) * p.coeffs[k];
                          return v;
                        },
                    },
                    f.kind());
}

double deriv2_of(const LatencyFamily& f, double x) {
  return std::visit(overloaded{
                        [x](const Bpr& b) {
                          if (b.beta == 1.0) return 0.0;
                          if (b.beta == 2.0) return bpr_scale(b) * 2.0;
                          return bpr_scale(b) * b.beta * (b.beta - 1.0) * std::pow(x, b.beta - 2.0);
                        },
                        [](const Affine&) { return 0.0; },
                        [x](const Polynomial& p) {
                          double v = 0.0;
                          for (std::size_t k = p.coeffs.size(); k-- > 2;) {
                            v = v * x + static_cast<double>(k * (k - 1)) * p.coeffs[k];
                          }
                          return v;
                        },
                    },
                    f.kind());
}

double integral_of(const LatencyFamily& f, double x) {
  return std::visit(overloaded{
                        [x](const Bpr& b) {
                          return b.free_flow_time * x + bpr_scale(b) * std::pow(x, b.beta + 1.0) / (b.beta + 1.0);
                        },
                        [x](const Affine& a) { return 0.5 * a.slope * x * x + a.intercept * x; },
                        [x](const Polynomial& p) {
                          double v = 0.0;
                          for (std::size_t k = p.coeffs.size(); k-- > 0;) v = v * x + p.coeffs[k] / static_cast<double>(k + 1);
                          return v * x;
                        },
                    },
                    f.kind());
}

}  // namespace

LatencyFamily LatencyFamily::bpr(double free_flow_time, double capacity, double alpha, double beta) {
  if (!(free_flow_time > 0.0)) throw ValidationError("BPR free-flow time must be positive");
  if (!(capacity > 0.0)) throw ValidationError("BPR capacity must be positive");
  if (!(alpha >= 0.0)) throw ValidationError("BPR alpha must be nonnegative");
  if (!(beta >= 1.0)) throw ValidationError("BPR beta must be at least 1");
  return LatencyFamily(Bpr{free_flow_time, capacity, alpha, beta});
}

LatencyFamily LatencyFamily::affine(double slope, double intercept) {
  if (!std::isfinite(slope) || !std::isfinite(intercept)) throw ValidationError("affine latency must be finite");
  return LatencyFamily(Affine{slope, intercept});
}

LatencyFamily LatencyFamily::polynomial(std::vector<double> coeffs) {
  if (coeffs.empty()) throw ValidationError("polynomial latency needs at least one coefficient");
  for (double c : coeffs) {
    if (!std::isfinite(c)) throw ValidationError("polynomial latency coefficients must be finite");
  }
  return LatencyFamily(Polynomial{std::move(coeffs)});
}

std::optional<PowerLaw> LatencyFamily::power_law() const noexcept {
  return std::visit(overloaded{
                        [](const Bpr& b) -> std::optional<PowerLaw> {
                          if (b.beta != std::floor(b.beta) || b.beta > kMaxKernelPower) return std::nullopt;
                          return PowerLaw{b.free_flow_time, bpr_scale(b), static_cast<std::int32_t>(b.beta)};
                        },
                        [](const Affine& a) -> std::optional<PowerLaw> { return PowerLaw{a.intercept, a.slope, 1}; },
                        [](const Polynomial& p) -> std::optional<PowerLaw> {
                          std::int32_t term = 0;
                          for (std::size_t k = 1; k < p.coeffs.size(); ++k) {
                            if (p.coeffs[k] == 0.0) continue;
                            if (term != 0 || k > static_cast<std::size_t>(kMaxKernelPower)) return std::nullopt;
                            term = static_cast<std::int32_t>(k);
                          }
                          if (term == 0) return PowerLaw{p.coeffs[0], 0.0, 1};
                          return PowerLaw{p.coeffs[0], p.coeffs[static_cast<std::size_t>(term)], term};
                        },
                    },
                    kind_);
}

double eval(const LatencyFamily& f, double x) {
  check_domain(x, "eval");
  return value_of(f, x);
}

double deriv(const LatencyFamily& f, double x) {
  check_domain(x, "deriv");
  return deriv_of(f, x);
}

double deriv2(const LatencyFamily& f, double x) {
  check_domain(x, "deriv2");
  return deriv2_of(f, x);
}

double integral(const LatencyFamily& f, double x) {
  check_domain(x, "integral");
  return integral_of(f, x);
}

RegularityReport regularity(std::span<const LatencyFamily> fs, double q_max) {
  if (!(q_max > 0.0)) throw DomainError("regularity: q_max must be positive");
  RegularityReport r;
  r.q_max = q_max;
  constexpr int kSamples = 256;
  for (const auto& f : fs) {
    double l0 = 0.0;
    double l1 = 0.0;
    std::visit(overloaded{
                   [&](const Bpr& b) {
                     if (b.beta > 1.0 && b.beta < 2.0) {
                       throw UnsupportedError("BPR with 1 < beta < 2 has no bounded second derivative at zero flow");
                     }
                     // l' and l'' are nondecreasing for beta >= 2 (and l'' = 0 for beta = 1).
                     l0 = deriv_of(f, q_max);
                     l1 = deriv2_of(f, q_max);
                   },
                   [&](const Affine& a) {
                     l0 = std::abs(a.slope);
                     l1 = 0.0;
                   },
                   [&](const Polynomial& p) {
                     // sum_k |k c_k| q^{k-1} dominates |p'| on [0, q]; exact for nonnegative coefficients.
                     for (std::size_t k = 1; k < p.coeffs.size(); ++k) {
                       l0 += static_cast<double>(k) * std::abs(p.coeffs[k]) * std::pow(q_max, static_cast<double>(k - 1));
                     }
                     for (std::size_t k = 2; k < p.coeffs.size(); ++k) {
                       l1 += static_cast<double>(k * (k - 1)) * std::abs(p.coeffs[k]) *
                             std::pow(q_max, static_cast<double>(k - 2));
                     }
                   },
               },
               f.kind());
    r.l0 = std::max(r.l0, l0);
    r.l1 = std::max(r.l1, l1);
    r.c0 = std::max(r.c0, value_of(f, q_max));
    for (int k = 0; k <= kSamples; ++k) {
      const double x = q_max * static_cast<double>(k) / kSamples;
      if (k > 0 && !(deriv_of(f, x) > 0.0)) r.strictly_increasing = false;
      const double curvature = deriv2_of(f, x);
      if (curvature < -1e-14 * std::max(1.0, std::abs(deriv_of(f, x)))) r.convex = false;
    }
  }
  return r;
}

LatencyVector::LatencyVector(std::vector<LatencyFamily> families) : families_(std::move(families)) {
  vectorized_ = !families_.empty();
  for (const auto& f : families_) {
    if (!f.power_law()) {
      vectorized_ = false;
      break;
    }
  }
  if (!vectorized_) return;
  for (const auto& f : families_) {
    const PowerLaw p = *f.power_law();
    value_.push(p);
    marginal_.push({p.c0, p.c1 * (p.power + 1), p.power});
    if (p.power == 0) {
      deriv_.push({0.0, 0.0, 0});
      marginal_deriv_.push({0.0, 0.0, 0});
    } else {
      deriv_.push({0.0, p.c1 * p.power, p.power - 1});
      marginal_deriv_.push({0.0, p.c1 * p.power * (p.power + 1), p.power - 1});
    }
  }
}

const LatencyVector::Soa& LatencyVector::table(CostKind kind, bool derivative) const {
  if (kind == CostKind::latency) return derivative ? deriv_ : value_;
  return derivative ? marginal_deriv_ : marginal_;
}

void LatencyVector::values(std::span<const double> x, std::span<double> out, CostKind kind) const {
  if (vectorized_) {
    kernels::power_law(table(kind, false).view(), x, out);
    return;
  }
  for (std::size_t e = 0; e < families_.size(); ++e) {
    out[e] = value_of(families_[e], x[e]);
    if (kind == CostKind::marginal) out[e] += x[e] * deriv_of(families_[e], x[e]);
  }
}

void LatencyVector::derivs(std::span<const double> x, std::span<double> out, CostKind kind) const {
  if (vectorized_) {
    kernels::power_law(table(kind, true).view(), x, out);
    return;
  }
  for (std::size_t e = 0; e < families_.size(); ++e) {
    out[e] = deriv_of(families_[e], x[e]);
    if (kind == CostKind::marginal) out[e] = 2.0 * out[e] + x[e] * deriv2_of(families_[e], x[e]);
  }
}

double LatencyVector::slope(std::span<const double> x, std::span<const double> dx, double alpha,
                            CostKind kind) const {
  if (vectorized_) return kernels::power_law_slope(table(kind, false).view(), x, dx, alpha);
  double sum = 0.0;
  for (std::size_t e = 0; e < families_.size(); ++e) {
    const double xe = std::max(0.0, x[e] + alpha * dx[e]);
    double c = value_of(families_[e], xe);
    if (kind == CostKind::marginal) c += xe * deriv_of(families_[e], xe);
    sum += dx[e] * c;
  }
  return sum;
}

double LatencyVector::potential(std::span<const double> x) const {
  double sum = 0.0;
  for (std::size_t e = 0; e < families_.size(); ++e) sum += integral_of(families_[e], x[e]);
  return sum;
}

double LatencyVector::aggregated(std::span<const double> x) const {
  double sum = 0.0;
  for (std::size_t e = 0; e < families_.size(); ++e) sum += x[e] * value_of(families_[e], x[e]);
  return sum;
}

}  // namespace wardrop
