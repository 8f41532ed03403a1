#include "wardrop/kernels.hpp"

#include <cassert>

namespace wardrop::kernels::scalar {

namespace {

// Binary exponentiation; the AVX2 variant performs the same multiplications
// lane by lane, so both agree bit for bit apart from FMA contraction.
inline double ipow(double x, std::int32_t p) {
  double result = 1.0;
  double base = x;
  while (p > 0) {
    if (p & 1) result *= base;
    base *= base;
    p >>= 1;
  }
  return result;
}

}  // namespace

void power_law(const PowerLawCoeffs& f, std::span<const double> x, std::span<double> out) {
  assert(x.size() == out.size() && f.c0.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = f.c0[i] + f.c1[i] * ipow(x[i], f.power[i]);
  }
}

void power_law_shifted(const PowerLawCoeffs& f, std::span<const double> x,
                       std::span<const double> dx, double alpha, std::span<double> out) {
  assert(x.size() == out.size() && dx.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = f.c0[i] + f.c1[i] * ipow(x[i] + alpha * dx[i], f.power[i]);
  }
}

double power_law_slope(const PowerLawCoeffs& f, std::span<const double> x,
                       std::span<const double> dx, double alpha) {
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sum += dx[i] * (f.c0[i] + f.c1[i] * ipow(x[i] + alpha * dx[i], f.power[i]));
  }
  return sum;
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

void gemv(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y) {
  assert(x.size() == cols && y.size() == rows);
  for (std::size_t i = 0; i < rows; ++i) y[i] = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double xj = x[j];
    if (xj == 0.0) continue;
    const double* col = a + j * rows;
    for (std::size_t i = 0; i < rows; ++i) y[i] += col[i] * xj;
  }
}

void gemv_t(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y) {
  assert(x.size() == rows && y.size() == cols);
  for (std::size_t j = 0; j < cols; ++j) {
    const double* col = a + j * rows;
    double sum = 0.0;
    for (std::size_t i = 0; i < rows; ++i) sum += col[i] * x[i];
    y[j] = sum;
  }
}

void lerp(std::span<const double> x, std::span<const double> s, double alpha, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + alpha * (s[i] - x[i]);
}

}  // namespace wardrop::kernels::scalar
