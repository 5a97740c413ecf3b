#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "exprk/matfun.hpp"
#include "exprk/rational.hpp"
#include "exprk/scalarphi.hpp"

using exprk::Rational;
using exprk::matfun::DenseMatrix;
using cplx = std::complex<double>;

namespace {

template <class T>
DenseMatrix<T> random_matrix(std::mt19937_64& rng, std::size_t d, double fro_norm) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  DenseMatrix<T> a(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      if constexpr (std::is_same_v<T, cplx>)
        a(i, j) = cplx(dist(rng), dist(rng));
      else
        a(i, j) = dist(rng);
    }
  a *= T(fro_norm / a.norm_fro());
  return a;
}

// reference exponential: scaling + plain Taylor series + repeated squaring,
// sharing no code with the implementation under test
template <class T>
DenseMatrix<T> exp_taylor(DenseMatrix<T> a) {
  int s = 0;
  double nrm = a.norm_inf();
  while (nrm > 0.25) {
    nrm *= 0.5;
    ++s;
  }
  a *= T(std::ldexp(1.0, -s));
  DenseMatrix<T> sum = DenseMatrix<T>::identity(a.rows());
  DenseMatrix<T> term = DenseMatrix<T>::identity(a.rows());
  for (int j = 1; j <= 32; ++j) {
    term = exprk::matfun::matmul(term, a);
    term *= T(1.0 / j);
    sum += term;
  }
  for (int i = 0; i < s; ++i) sum = exprk::matfun::matmul(sum, sum);
  return sum;
}

// phi_k(z) for k >= 1 through its integral representation, evaluated with
// composite 8-point Gauss-Legendre panels
template <class S>
S phi_quadrature(S z, int k) {
  static const double gx[8] = {-0.9602898564975363, -0.7966664774136267,
                               -0.5255324099163290, -0.1834346424956498,
                               0.1834346424956498,  0.5255324099163290,
                               0.7966664774136267,  0.9602898564975363};
  static const double gw[8] = {0.1012285362903763, 0.2223810344533745,
                               0.3137066458778873, 0.3626837833783620,
                               0.3626837833783620, 0.3137066458778873,
                               0.2223810344533745, 0.1012285362903763};
  double kfac = 1.0;
  for (int i = 2; i < k; ++i) kfac *= i;
  const int panels = 32;
  S acc{};
  for (int p = 0; p < panels; ++p) {
    const double lo = static_cast<double>(p) / panels;
    const double half = 0.5 / panels;
    for (int g = 0; g < 8; ++g) {
      const double theta = lo + half * (gx[g] + 1.0);
      S val = std::exp((1.0 - theta) * z) * std::pow(theta, k - 1) / kfac;
      acc += S(gw[g] * half) * val;
    }
  }
  return acc;
}

}  // namespace

TEST_CASE("rational arithmetic is exact and guarded") {
  CHECK(Rational(1, 2) + Rational(1, 3) == Rational(5, 6));
  CHECK(Rational(3, 10) * Rational(5, 9) == Rational(1, 6));
  CHECK(Rational(-4, -6) == Rational(2, 3));
  CHECK(Rational(1, -2) < Rational());
  CHECK(Rational(2, 3).pow(2) == Rational(4, 9));
  CHECK(Rational(2, 3).pow(-1) == Rational(3, 2));
  CHECK(Rational::factorial(5) == Rational(120));
  CHECK(Rational(5, 6).value() == doctest::Approx(5.0 / 6.0));
  CHECK(Rational(7, 3).str() == "7/3");
  CHECK_THROWS_AS(Rational(1, 0), exprk::ParameterError);
  CHECK_THROWS_AS(Rational(1) / Rational(0), exprk::ParameterError);
  CHECK_THROWS_AS(Rational::factorial(25), exprk::ConstructionError);
}

TEST_CASE("lu_solve inverts well-conditioned systems") {
  std::mt19937_64 rng(31337);
  auto a = random_matrix<double>(rng, 8, 4.0);
  for (std::size_t i = 0; i < 8; ++i) a(i, i) += 3.0;
  auto inv = exprk::matfun::lu_solve(a, DenseMatrix<double>::identity(8));
  auto prod = exprk::matfun::matmul(a, inv);
  prod -= DenseMatrix<double>::identity(8);
  CHECK(prod.norm_inf() <= 1e-12);

  DenseMatrix<double> sing(3, 3);
  for (std::size_t j = 0; j < 3; ++j) {
    sing(0, j) = 1.0;
    sing(1, j) = 2.0;
    sing(2, j) = static_cast<double>(j);
  }
  CHECK_THROWS_AS(exprk::matfun::lu_solve(sing, DenseMatrix<double>::identity(3)),
                  exprk::NumericalError);
}

TEST_CASE("expm matches an independent Taylor-and-squaring reference") {
  std::mt19937_64 rng(4242);
  for (double nrm : {0.01, 0.9, 3.0, 14.0, 45.0}) {
    auto a = random_matrix<double>(rng, 7, nrm);
    auto e = exprk::matfun::expm(a);
    auto ref = exp_taylor(a);
    ref -= e;
    CHECK(ref.norm_inf() <= 1e-12 * e.norm_inf());
  }
  for (double nrm : {0.5, 6.0, 22.0}) {
    auto a = random_matrix<cplx>(rng, 6, nrm);
    auto e = exprk::matfun::expm(a);
    auto ref = exp_taylor(a);
    ref -= e;
    CHECK(ref.norm_inf() <= 1e-12 * e.norm_inf());
  }
}

TEST_CASE("expm basic identities") {
  auto z = DenseMatrix<double>(4, 4);
  auto ez = exprk::matfun::expm(z);
  ez -= DenseMatrix<double>::identity(4);
  CHECK(ez.norm_inf() == 0.0);

  DenseMatrix<double> d(3, 3);
  d(0, 0) = -2.0;
  d(1, 1) = 0.5;
  d(2, 2) = 30.0;
  auto ed = exprk::matfun::expm(d);
  CHECK(ed(0, 0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
  CHECK(ed(1, 1) == doctest::Approx(std::exp(0.5)).epsilon(1e-14));
  CHECK(ed(2, 2) == doctest::Approx(std::exp(30.0)).epsilon(1e-13));
  CHECK(ed(0, 1) == 0.0);

  DenseMatrix<double> nil(2, 2);
  nil(0, 1) = 1.0;
  auto en = exprk::matfun::expm(nil);
  CHECK(en(0, 0) == doctest::Approx(1.0));
  CHECK(en(0, 1) == doctest::Approx(1.0));
  CHECK(en(1, 0) == doctest::Approx(0.0));

  std::mt19937_64 rng(99);
  auto a = random_matrix<double>(rng, 5, 2.0);
  auto am = a;
  am *= -1.0;
  auto prod = exprk::matfun::matmul(exprk::matfun::expm(a), exprk::matfun::expm(am));
  prod -= DenseMatrix<double>::identity(5);
  CHECK(prod.norm_inf() <= 1e-13);
}

TEST_CASE("expm input validation") {
  CHECK_THROWS_AS(exprk::matfun::expm(DenseMatrix<double>(2, 3)), exprk::DimensionError);
  DenseMatrix<double> bad(2, 2);
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(exprk::matfun::expm(bad), exprk::InvalidInputError);
}

TEST_CASE("phi stacks satisfy closed forms at scalar arguments") {
  DenseMatrix<double> one(1, 1);
  one(0, 0) = 1.0;
  auto st1 = exprk::matfun::phi_stack(one, 2);
  CHECK(st1[0](0, 0) == doctest::Approx(std::exp(1.0)).epsilon(1e-14));
  CHECK(st1[1](0, 0) == doctest::Approx(std::expm1(1.0)).epsilon(1e-14));

  DenseMatrix<double> m2(1, 1);
  m2(0, 0) = -2.0;
  auto st2 = exprk::matfun::phi_stack(m2, 2);
  // phi_1(-2) = (e^{-2} - 1)/(-2); phi_2(-2) = (e^{-2} - 1 + 2)/4
  CHECK(st2[1](0, 0) == doctest::Approx(std::expm1(-2.0) / -2.0).epsilon(1e-14));
  CHECK(st2[2](0, 0) == doctest::Approx((std::expm1(-2.0) + 2.0) / 4.0).epsilon(1e-14));

  // phi_k(0) = 1/k!
  DenseMatrix<double> z(3, 3);
  auto st0 = exprk::matfun::phi_stack(z, 5);
  double kfac = 1.0;
  for (int k = 0; k <= 5; ++k) {
    if (k > 0) kfac *= k;
    CHECK(st0[k](1, 1) == doctest::Approx(1.0 / kfac).epsilon(1e-15));
    CHECK(st0[k](0, 1) == doctest::Approx(0.0));
  }
}

TEST_CASE("scalar phi values match Gauss-Legendre quadrature of the integral form") {
  for (double z : {-20.0, -2.0, -0.4, 0.3, 3.0, 20.0}) {
    auto st = exprk::matfun::phi_scalar_stack(z, 6);
    CHECK(std::abs(st[0] - std::exp(z)) <= 1e-13 * std::max(1.0, std::exp(z)));
    for (int k = 1; k <= 6; ++k) {
      const double ref = phi_quadrature(z, k);
      CHECK(std::abs(st[k] - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
    }
  }
  for (cplx z : {cplx(0.0, 2.0), cplx(-3.0, 5.0), cplx(0.2, -0.3), cplx(-14.0, 9.0)}) {
    auto st = exprk::matfun::phi_scalar_stack(z, 5);
    for (int k = 1; k <= 5; ++k) {
      const cplx ref = phi_quadrature(z, k);
      CHECK(std::abs(st[k] - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
    }
  }
  CHECK_THROWS_AS(exprk::matfun::phi_scalar_stack(1.0, 17), exprk::ParameterError);
  CHECK_THROWS_AS(exprk::matfun::phi_scalar_stack(1.0, -1), exprk::ParameterError);
}

TEST_CASE("matrix phi stack agrees with scalar phi on diagonal input") {
  DenseMatrix<double> d(4, 4);
  const double lam[4] = {-40.0, -0.3, 0.0, 2.5};
  for (std::size_t i = 0; i < 4; ++i) d(i, i) = lam[i];
  auto st = exprk::matfun::phi_stack(d, 4);
  for (int k = 0; k <= 4; ++k)
    for (std::size_t i = 0; i < 4; ++i) {
      const double ref = exprk::matfun::phi_scalar(lam[i], k);
      CHECK(std::abs(st[k](i, i) - ref) <= 1e-13 * std::max(1.0, std::abs(ref)));
    }
}

TEST_CASE("phi recurrence holds to near machine precision") {
  std::mt19937_64 rng(777);
  for (int rep = 0; rep < 3; ++rep) {
    auto a = random_matrix<double>(rng, 6, 3.0);
    auto st = exprk::matfun::phi_stack(a, 6);
    const double scale = std::max(1.0, a.norm_inf());
    double kfac = 1.0;
    for (int k = 0; k < 6; ++k) {
      if (k > 0) kfac *= k;
      auto lhs = exprk::matfun::matmul(a, st[k + 1]);
      auto id = DenseMatrix<double>::identity(6);
      id *= 1.0 / kfac;
      lhs += id;
      lhs -= st[k];
      CHECK(lhs.norm_inf() <= 1e-12 * scale * std::max(1.0, st[k].norm_inf()));
    }
  }
}

TEST_CASE("phi stack argument validation") {
  CHECK_THROWS_AS(exprk::matfun::phi_stack(DenseMatrix<double>(2, 3), 1),
                  exprk::DimensionError);
  CHECK_THROWS_AS(exprk::matfun::phi_stack(DenseMatrix<double>(2, 2), 9),
                  exprk::ParameterError);
}

TEST_CASE("dense phi combinations match the block companion construction") {
  std::mt19937_64 rng(2024);
  for (int q : {0, 1, 3, 4}) {
    for (double rho : {0.25, 1.0}) {
      const std::size_t n = 5;
      auto a = random_matrix<double>(rng, n, 4.0);
      std::vector<std::vector<double>> vecs(q + 1, std::vector<double>(n));
      std::uniform_real_distribution<double> dist(-1.0, 1.0);
      for (auto& v : vecs)
        for (auto& x : v) x = dist(rng);

      auto got = exprk::matfun::phi_combination_dense(a, vecs, rho);

      // companion block: exp(rho*[[A, W],[0, J]]) applied to [v_0; e_q]
      // where W columns are [v_q, ..., v_1] and J is the upper shift
      const std::size_t m = n + static_cast<std::size_t>(q);
      DenseMatrix<double> c(m, m);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) c(i, j) = rho * a(i, j);
      for (int col = 0; col < q; ++col)
        for (std::size_t i = 0; i < n; ++i)
          c(i, n + static_cast<std::size_t>(col)) =
              rho * vecs[static_cast<std::size_t>(q - col)][i];
      for (int j = 0; j + 1 < q; ++j)
        c(n + static_cast<std::size_t>(j), n + static_cast<std::size_t>(j) + 1) = rho;
      auto e = exprk::matfun::expm(c);
      std::vector<double> ref(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += e(i, j) * vecs[0][j];
        if (q > 0) s += e(i, m - 1);
        ref[i] = s;
      }

      double scale = 0.0, diff = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        scale = std::max(scale, std::abs(ref[i]));
        diff = std::max(diff, std::abs(ref[i] - got[i]));
      }
      CAPTURE(q);
      CAPTURE(rho);
      CHECK(diff <= 1e-12 * std::max(1.0, scale));
    }
  }
}

TEST_CASE("dense phi combination input validation") {
  DenseMatrix<double> a(3, 3);
  std::vector<std::vector<double>> vecs = {{1.0, 2.0, 3.0}};
  CHECK_THROWS_AS(exprk::matfun::phi_combination_dense(a, vecs, 0.0),
                  exprk::ParameterError);
  CHECK_THROWS_AS(exprk::matfun::phi_combination_dense(a, vecs, 1.5),
                  exprk::ParameterError);
  CHECK_THROWS_AS(exprk::matfun::phi_combination_dense(a, {}, 1.0),
                  exprk::InvalidInputError);
  std::vector<std::vector<double>> wrong = {{1.0, 2.0}};
  CHECK_THROWS_AS(exprk::matfun::phi_combination_dense(a, wrong, 1.0),
                  exprk::DimensionError);
}
