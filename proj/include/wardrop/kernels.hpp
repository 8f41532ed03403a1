#pragma once

// Data-parallel inner loops of the equilibrium solvers.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant. The dispatching entry points pick the best variant the running CPU
// supports; the WARDROP_SIMD environment variable ("scalar" or "avx2") or
// set_isa() pins a specific one. Variants agree to a few ulps (FMA contraction
// is the only source of difference).

#include <cstddef>
#include <cstdint>
#include <span>

namespace wardrop::kernels {

enum class Isa { scalar, avx2 };

const char* isa_name(Isa isa) noexcept;

/// True when `isa` was compiled in and the CPU supports it.
bool isa_supported(Isa isa) noexcept;

/// The variant used by the dispatching entry points.
Isa active_isa() noexcept;

/// Pins the dispatch target. Throws UnsupportedError if `isa` is unavailable.
void set_isa(Isa isa);

/// Per-edge latency of the form c0 + c1 * x^p with an integer exponent p >= 0.
/// BPR with integer power and affine latencies both compile to this form.
struct PowerLawCoeffs {
  std::span<const double> c0;
  std::span<const double> c1;
  std::span<const std::int32_t> power;
};

/// out[i] = c0[i] + c1[i] * x[i]^power[i]
void power_law(const PowerLawCoeffs& f, std::span<const double> x, std::span<double> out);

/// out[i] = c0[i] + c1[i] * (x[i] + alpha * dx[i])^power[i]; fused for line searches.
void power_law_shifted(const PowerLawCoeffs& f, std::span<const double> x,
                       std::span<const double> dx, double alpha, std::span<double> out);

/// sum_i dx[i] * (c0[i] + c1[i] * (x[i] + alpha * dx[i])^power[i])
double power_law_slope(const PowerLawCoeffs& f, std::span<const double> x,
                       std::span<const double> dx, double alpha);

double dot(std::span<const double> a, std::span<const double> b);

/// y = A x for a column-major rows x cols matrix.
void gemv(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y);

/// y = A^T x for a column-major rows x cols matrix.
void gemv_t(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y);

/// y = x + alpha * (s - x), elementwise.
void lerp(std::span<const double> x, std::span<const double> s, double alpha, std::span<double> y);

// Explicit variants, used by the equivalence tests and the dispatcher.
namespace scalar {
void power_law(const PowerLawCoeffs& f, std::span<const double> x, std::span<double> out);
void power_law_shifted(const PowerLawCoeffs& f, std::span<const double> x,
                       std::span<const double> dx, double alpha, std::span<double> out);
double power_law_slope(const PowerLawCoeffs& f, std::span<const double> x,
                       std::span<const double> dx, double alpha);
double dot(std::span<const double> a, std::span<const double> b);
void gemv(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y);
void gemv_t(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y);
void lerp(std::span<const double> x, std::span<const double> s, double alpha, std::span<double> y);
}  // namespace scalar

namespace avx2 {
void power_law(const PowerLawCoeffs& f, std::span<const double> x, std::span<double> out);
void power_law_shifted(const PowerLawCoeffs& f, std::span<const double> x,
                       std::span<const double> dx, double alpha, std::span<double> out);
double power_law_slope(const PowerLawCoeffs& f, std::span<const double> x,
                       std::span<const double> dx, double alpha);
double dot(std::span<const double> a, std::span<const double> b);
void gemv(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y);
void gemv_t(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y);
void lerp(std::span<const double> x, std::span<const double> s, double alpha, std::span<double> y);
}  // namespace avx2

}  // namespace wardrop::kernels
