#include "wardrop/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cassert>

namespace wardrop::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

inline double ipow1(double x, std::int32_t p) {
  double result = 1.0;
  double base = x;
  while (p > 0) {
    if (p & 1) result *= base;
    base *= base;
    p >>= 1;
  }
  return result;
}

// Lane-wise x^p with per-lane integer exponents, same multiplication order as
// the scalar binary exponentiation.
inline __m256d ipow4(__m256d x, const std::int32_t* p) {
  const __m128i pv = _mm_loadu_si128(reinterpret_cast<const __m128i*>(p));
  const std::int32_t pmax = std::max(std::max(p[0], p[1]), std::max(p[2], p[3]));
  __m256d result = _mm256_set1_pd(1.0);
  __m256d base = x;
  for (std::int32_t bit = 1; bit <= pmax && bit > 0; bit <<= 1) {
    const __m128i has = _mm_cmpgt_epi32(_mm_and_si128(pv, _mm_set1_epi32(bit)), _mm_setzero_si128());
    const __m256d mask = _mm256_castsi256_pd(_mm256_cvtepi32_epi64(has));
    result = _mm256_blendv_pd(result, _mm256_mul_pd(result, base), mask);
    base = _mm256_mul_pd(base, base);
  }
  return result;
}

}  // namespace

void power_law(const PowerLawCoeffs& f, std::span<const double> x, std::span<double> out) {
  const std::size_t n = x.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x.data() + i);
    const __m256d pw = ipow4(xv, f.power.data() + i);
    const __m256d v = _mm256_fmadd_pd(_mm256_loadu_pd(f.c1.data() + i), pw, _mm256_loadu_pd(f.c0.data() + i));
    _mm256_storeu_pd(out.data() + i, v);
  }
  for (; i < n; ++i) out[i] = f.c0[i] + f.c1[i] * ipow1(x[i], f.power[i]);
}

void power_law_shifted(const PowerLawCoeffs& f, std::span<const double> x,
                       std::span<const double> dx, double alpha, std::span<double> out) {
  const std::size_t n = x.size();
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_fmadd_pd(av, _mm256_loadu_pd(dx.data() + i), _mm256_loadu_pd(x.data() + i));
    const __m256d pw = ipow4(xv, f.power.data() + i);
    _mm256_storeu_pd(out.data() + i,
                     _mm256_fmadd_pd(_mm256_loadu_pd(f.c1.data() + i), pw, _mm256_loadu_pd(f.c0.data() + i)));
  }
  for (; i < n; ++i) out[i] = f.c0[i] + f.c1[i] * ipow1(x[i] + alpha * dx[i], f.power[i]);
}

double power_law_slope(const PowerLawCoeffs& f, std::span<const double> x,
                       std::span<const double> dx, double alpha) {
  const std::size_t n = x.size();
  const __m256d av = _mm256_set1_pd(alpha);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dv = _mm256_loadu_pd(dx.data() + i);
    const __m256d xv = _mm256_fmadd_pd(av, dv, _mm256_loadu_pd(x.data() + i));
    const __m256d pw = ipow4(xv, f.power.data() + i);
    const __m256d lat = _mm256_fmadd_pd(_mm256_loadu_pd(f.c1.data() + i), pw, _mm256_loadu_pd(f.c0.data() + i));
    acc = _mm256_fmadd_pd(dv, lat, acc);
  }
  double sum = hsum(acc);
  for (; i < n; ++i) sum += dx[i] * (f.c0[i] + f.c1[i] * ipow1(x[i] + alpha * dx[i], f.power[i]));
  return sum;
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  const std::size_t n = a.size();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i + 4), _mm256_loadu_pd(b.data() + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i), acc0);
  }
  double sum = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void gemv(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y) {
  assert(x.size() == cols && y.size() == rows);
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t j = 0; j < cols; ++j) {
    const double xj = x[j];
    if (xj == 0.0) continue;
    const double* col = a + j * rows;
    const __m256d xv = _mm256_set1_pd(xj);
    std::size_t i = 0;
    for (; i + 4 <= rows; i += 4) {
      _mm256_storeu_pd(y.data() + i, _mm256_fmadd_pd(_mm256_loadu_pd(col + i), xv, _mm256_loadu_pd(y.data() + i)));
    }
    for (; i < rows; ++i) y[i] += col[i] * xj;
  }
}

void gemv_t(const double* a, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y) {
  assert(x.size() == rows && y.size() == cols);
  for (std::size_t j = 0; j < cols; ++j) {
    y[j] = dot(std::span<const double>(a + j * rows, rows), x);
  }
}

void lerp(std::span<const double> x, std::span<const double> s, double alpha, std::span<double> y) {
  const std::size_t n = x.size();
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x.data() + i);
    const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(s.data() + i), xv);
    _mm256_storeu_pd(y.data() + i, _mm256_fmadd_pd(av, diff, xv));
  }
  for (; i < n; ++i) y[i] = x[i] + alpha * (s[i] - x[i]);
}

}  // namespace wardrop::kernels::avx2
