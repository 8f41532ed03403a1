#include <atomic>
#include <cstdlib>
#include <string_view>

#include "wardrop/error.hpp"
#include "wardrop/kernels.hpp"

namespace wardrop::kernels {

namespace {

bool cpu_has_avx2() noexcept {
#if defined(WARDROP_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() noexcept {
  if (const char* env = std::getenv("WARDROP_SIMD")) {
    const std::string_view v(env);
    if (v == "scalar") return Isa::scalar;
  }
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() noexcept {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

inline bool use_avx2() noexcept {
#if defined(WARDROP_HAVE_AVX2)
  return current().load(std::memory_order_relaxed) == Isa::avx2;
#else
  return false;
#endif
}

}  // namespace

const char* isa_name(Isa isa) noexcept { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_supported(Isa isa) noexcept { return isa == Isa::scalar || cpu_has_avx2(); }

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) throw UnsupportedError(std::string("kernel variant not available: ") + isa_name(isa));
  current().store(isa, std::memory_order_relaxed);
}

#if defined(WARDROP_HAVE_AVX2)
#define WARDROP_DISPATCH(fn, ...) (use_avx2() ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__))
#else
#define WARDROP_DISPATCH(fn, ...) scalar::fn(__VA_ARGS__)
#endif

void power_law(const PowerLawCoeffs& f, std::span<const double> x, std::span<double> out) {
  WARDROP_DISPATCH(power_law, f, x, out);
}

void power_law_shifted(const PowerLawCoeffs& f, std::span<const double> x,
                       std::span<const double> dx, double alpha, std::span<double> out) {
  WARDROP_DISPATCH(power_law_shifted, f, x, dx, alpha, out);
}

double power_law_slope(const PowerLawCoeffs& f, std::span<const double> x,
                       std::span<const double> dx, double alpha) {
  return WARDROP_DISPATCH(power_law_slope, f, x, dx, alpha);
}

double dot(std::span<const double> a, std::span<const double> b) { return WARDROP_DISPATCH(dot, a, b); }

void gemv(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y) {
  WARDROP_DISPATCH(gemv, a, rows, cols, x, y);
}

void gemv_t(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y) {
  WARDROP_DISPATCH(gemv_t, a, rows, cols, x, y);
}

void lerp(std::span<const double> x, std::span<const double> s, double alpha, std::span<double> y) {
  WARDROP_DISPATCH(lerp, x, s, alpha, y);
}

#undef WARDROP_DISPATCH

}  // namespace wardrop::kernels
