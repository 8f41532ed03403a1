#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "wardrop/error.hpp"
#include "wardrop/kernels.hpp"

using namespace wardrop;

namespace {

struct Table {
  std::vector<double> c0, c1;
  std::vector<std::int32_t> p;
  kernels::PowerLawCoeffs view() const { return {c0, c1, p}; }
};

Table random_table(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::uniform_int_distribution<int> pw(0, 6);
  Table t;
  for (std::size_t i = 0; i < n; ++i) {
    t.c0.push_back(u(rng));
    t.c1.push_back(u(rng));
    t.p.push_back(pw(rng));
  }
  return t;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double lo = 0.0, double hi = 3.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

bool close(double a, double b, double rel = 1e-13) { return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("scalar kernels against direct formulas") {
    std::mt19937_64 rng(1);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 16u, 77u}) {
      const auto t = random_table(n, rng);
      const auto x = random_vec(n, rng), dx = random_vec(n, rng, -1.0, 1.0);
      std::vector<double> out(n), out2(n);
      kernels::scalar::power_law(t.view(), x, out);
      for (std::size_t i = 0; i < n; ++i) CHECK(close(out[i], t.c0[i] + t.c1[i] * std::pow(x[i], t.p[i])));
      kernels::scalar::power_law_shifted(t.view(), x, dx, 0.4, out2);
      double s2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(close(out2[i], t.c0[i] + t.c1[i] * std::pow(x[i] + 0.4 * dx[i], t.p[i])));
        s2 += dx[i] * out2[i];
      }
      CHECK(close(kernels::scalar::power_law_slope(t.view(), x, dx, 0.4), s2, 1e-12));
    }
  }

  TEST_CASE("gemv and gemv_t match Eigen") {
    std::mt19937_64 rng(2);
    for (Eigen::Index n : {1, 5, 8, 13, 76}) {
      const Eigen::MatrixXd a = Eigen::MatrixXd::Random(n, n + 2);
      const Eigen::VectorXd x = Eigen::VectorXd::Random(n + 2), z = Eigen::VectorXd::Random(n);
      Eigen::VectorXd y(n), w(n + 2);
      for (auto isa : {kernels::Isa::scalar, kernels::Isa::avx2}) {
        if (!kernels::isa_supported(isa)) continue;
        kernels::set_isa(isa);
        kernels::gemv(a.data(), static_cast<std::size_t>(n), static_cast<std::size_t>(n + 2),
                      {x.data(), static_cast<std::size_t>(n + 2)}, {y.data(), static_cast<std::size_t>(n)});
        kernels::gemv_t(a.data(), static_cast<std::size_t>(n), static_cast<std::size_t>(n + 2),
                        {z.data(), static_cast<std::size_t>(n)}, {w.data(), static_cast<std::size_t>(n + 2)});
        CHECK((y - a * x).cwiseAbs().maxCoeff() < 1e-13);
        CHECK((w - a.transpose() * z).cwiseAbs().maxCoeff() < 1e-13);
      }
    }
    kernels::set_isa(kernels::isa_supported(kernels::Isa::avx2) ? kernels::Isa::avx2 : kernels::Isa::scalar);
  }

  TEST_CASE("avx2 variants agree with scalar to a few ulps") {
    if (!kernels::isa_supported(kernels::Isa::avx2)) {
      MESSAGE("AVX2 not available; equivalence skipped");
      return;
    }
    std::mt19937_64 rng(3);
    for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 9u, 31u, 76u, 1001u}) {
      const auto t = random_table(n, rng);
      const auto x = random_vec(n, rng), dx = random_vec(n, rng, -1.0, 1.0), s = random_vec(n, rng);
      std::vector<double> a(n), b(n);
      kernels::scalar::power_law(t.view(), x, a);
      kernels::avx2::power_law(t.view(), x, b);
      for (std::size_t i = 0; i < n; ++i) CHECK(close(a[i], b[i]));
      kernels::scalar::power_law_shifted(t.view(), x, dx, 0.25, a);
      kernels::avx2::power_law_shifted(t.view(), x, dx, 0.25, b);
      for (std::size_t i = 0; i < n; ++i) CHECK(close(a[i], b[i]));
      CHECK(close(kernels::scalar::power_law_slope(t.view(), x, dx, 0.25),
                  kernels::avx2::power_law_slope(t.view(), x, dx, 0.25), 1e-12));
      CHECK(close(kernels::scalar::dot(x, s), kernels::avx2::dot(x, s), 1e-13));
      kernels::scalar::lerp(x, s, 0.37, a);
      kernels::avx2::lerp(x, s, 0.37, b);
      for (std::size_t i = 0; i < n; ++i) CHECK(close(a[i], b[i]));
    }
  }

  TEST_CASE("dispatch can be pinned") {
    const auto before = kernels::active_isa();
    kernels::set_isa(kernels::Isa::scalar);
    CHECK(kernels::active_isa() == kernels::Isa::scalar);
    CHECK(std::string(kernels::isa_name(kernels::Isa::scalar)) == "scalar");
    if (!kernels::isa_supported(kernels::Isa::avx2)) CHECK_THROWS_AS(kernels::set_isa(kernels::Isa::avx2), UnsupportedError);
    kernels::set_isa(before);
  }
}
