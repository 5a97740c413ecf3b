#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "exprk/krylov.hpp"
#include "exprk/matfun.hpp"

using exprk::matfun::DenseMatrix;
using cplx = std::complex<double>;
namespace kry = exprk::krylov;

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

template <class T>
std::vector<T> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) {
    if constexpr (std::is_same_v<T, cplx>)
      x = cplx(dist(rng), dist(rng));
    else
      x = dist(rng);
  }
  return v;
}

template <class T>
double rel_max_err(const std::vector<T>& got, const std::vector<T>& ref) {
  double scale = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    scale = std::max(scale, std::abs(ref[i]));
    diff = std::max(diff, std::abs(got[i] - ref[i]));
  }
  return diff / std::max(1.0, scale);
}

template <class T>
void check_against_dense(std::mt19937_64& rng, std::size_t n, int q, double norm,
                         std::vector<double> rhos, double bound) {
  auto a = random_matrix<T>(rng, n, norm);
  auto op = kry::make_dense_operator(a);
  kry::PhiCombinationTask<T> task;
  task.op = &op;
  task.scalings = rhos;
  for (int k = 0; k <= q; ++k) task.vectors.push_back(random_vec<T>(rng, n));
  auto res = kry::evaluate_combination(task);
  REQUIRE(res.outputs.size() == rhos.size());
  for (std::size_t s = 0; s < rhos.size(); ++s) {
    auto ref = exprk::matfun::phi_combination_dense(a, task.vectors, rhos[s]);
    CAPTURE(n);
    CAPTURE(q);
    CAPTURE(norm);
    CAPTURE(rhos[s]);
    CHECK(rel_max_err(res.outputs[s], ref) <= bound);
  }
}

}  // namespace

TEST_CASE("full orthogonalization produces an orthonormal basis") {
  std::mt19937_64 rng(11);
  auto a = random_matrix<double>(rng, 20, 5.0);
  auto op = kry::make_dense_operator(a);
  auto seed = random_vec<double>(rng, 20);
  auto r = kry::arnoldi_iom(
      op, std::span<const double>(seed), 12, 64);
  REQUIRE(r.dim == 12);
  REQUIRE(r.basis.size() == 13);
  for (std::size_t i = 0; i < r.basis.size(); ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double g = exprk::kernels::dot(r.basis[i], r.basis[j]);
      CHECK(std::abs(g - (i == j ? 1.0 : 0.0)) <= 1e-12);
    }
}

TEST_CASE("the factorization identity holds for full and incomplete runs") {
  std::mt19937_64 rng(12);
  auto a = random_matrix<double>(rng, 24, 8.0);
  auto op = kry::make_dense_operator(a);
  auto seed = random_vec<double>(rng, 24);
  for (int iom : {2, 3, 64}) {
    auto r = kry::arnoldi_iom(op, std::span<const double>(seed), 10, iom);
    REQUIRE(r.dim == 10);
    // op(V_m) == V_{m+1} Hbar_m column by column
    double worst = 0.0;
    for (std::size_t j = 0; j < r.dim; ++j) {
      std::vector<double> av(24);
      op.apply(r.basis[j], av);
      for (std::size_t i = 0; i < r.basis.size(); ++i)
        exprk::kernels::axpy(-r.h(i, j), std::span<const double>(r.basis[i]),
                             std::span<double>(av));
      worst = std::max(worst, exprk::kernels::nrm2(std::span<const double>(av)));
    }
    CAPTURE(iom);
    CHECK(worst <= 1e-10 * a.norm_fro());
  }
}

TEST_CASE("entries above the orthogonalization band are never written") {
  std::mt19937_64 rng(13);
  auto a = random_matrix<double>(rng, 16, 4.0);
  auto op = kry::make_dense_operator(a);
  auto seed = random_vec<double>(rng, 16);
  auto r = kry::arnoldi_iom(op, std::span<const double>(seed), 10, 2);
  for (std::size_t j = 0; j < r.dim; ++j)
    for (std::size_t i = 0; i + 1 < j; ++i) CHECK(r.h(i, j) == 0.0);
}

TEST_CASE("an invariant subspace triggers breakdown") {
  DenseMatrix<double> d(3, 3);
  d(0, 0) = 2.0;
  d(1, 1) = 2.0;
  d(2, 2) = 3.0;
  auto op = kry::make_dense_operator(d);
  std::vector<double> seed = {1.0, 0.0, 0.0};
  auto r = kry::arnoldi_iom(op, std::span<const double>(seed), 3, 8);
  CHECK(r.breakdown);
  CHECK(r.dim == 1);
  CHECK(r.h(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("arnoldi input validation") {
  DenseMatrix<double> a(4, 4);
  auto op = kry::make_dense_operator(a);
  std::vector<double> zero(4, 0.0);
  CHECK_THROWS_AS(kry::arnoldi_iom(op, std::span<const double>(zero), 2, 2), exprk::InvalidInputError);
  std::vector<double> seed = {1.0, 0.0, 0.0, 0.0};
  CHECK_THROWS_AS(kry::arnoldi_iom(op, std::span<const double>(seed), 0, 2), exprk::ParameterError);
  CHECK_THROWS_AS(kry::arnoldi_iom(op, std::span<const double>(seed), 5, 2), exprk::ParameterError);
  CHECK_THROWS_AS(kry::arnoldi_iom(op, std::span<const double>(seed), 2, 0), exprk::ParameterError);
  std::vector<double> wrong = {1.0, 2.0};
  CHECK_THROWS_AS(kry::arnoldi_iom(op, std::span<const double>(wrong), 2, 2), exprk::DimensionError);
}

TEST_CASE("combinations match the dense reference") {
  std::mt19937_64 rng(20250101);
  check_against_dense<double>(rng, 3, 3, 2.0, {1.0}, 1e-8);
  check_against_dense<double>(rng, 8, 1, 6.0, {0.5, 1.0}, 1e-8);
  check_against_dense<double>(rng, 30, 0, 10.0, {0.3, 0.7, 1.0}, 1e-8);
  check_against_dense<double>(rng, 30, 2, 10.0, {0.25, 1.0}, 1e-8);
  check_against_dense<double>(rng, 30, 4, 15.0, {1.0}, 1e-8);
  check_against_dense<cplx>(rng, 3, 3, 2.0, {1.0}, 1e-8);
  check_against_dense<cplx>(rng, 8, 2, 6.0, {0.5, 1.0}, 1e-8);
  check_against_dense<cplx>(rng, 25, 1, 12.0, {0.4, 1.0}, 1e-8);
  check_against_dense<cplx>(rng, 25, 4, 8.0, {0.2, 0.9}, 1e-8);
}

TEST_CASE("evaluation is a pure function of its task") {
  std::mt19937_64 rng(42);
  auto a = random_matrix<double>(rng, 12, 7.0);
  auto op = kry::make_dense_operator(a);
  kry::PhiCombinationTask<double> task;
  task.op = &op;
  task.scalings = {0.5, 1.0};
  for (int k = 0; k <= 2; ++k) task.vectors.push_back(random_vec<double>(rng, 12));
  auto r1 = kry::evaluate_combination(task);
  auto r2 = kry::evaluate_combination(task);
  for (std::size_t s = 0; s < r1.outputs.size(); ++s)
    for (std::size_t i = 0; i < 12; ++i) CHECK(r1.outputs[s][i] == r2.outputs[s][i]);
}

TEST_CASE("combination output is linear in the vectors") {
  std::mt19937_64 rng(55);
  auto a = random_matrix<double>(rng, 15, 5.0);
  auto op = kry::make_dense_operator(a);
  kry::PhiCombinationTask<double> task;
  task.op = &op;
  task.scalings = {1.0};
  for (int k = 0; k <= 2; ++k) task.vectors.push_back(random_vec<double>(rng, 15));
  auto base = kry::evaluate_combination(task);

  auto scaled = task;
  for (auto& v : scaled.vectors)
    exprk::kernels::scal(3.0, std::span<double>(v));
  auto r3 = kry::evaluate_combination(scaled);
  double scale = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < 15; ++i) {
    scale = std::max(scale, std::abs(base.outputs[0][i]));
    diff = std::max(diff, std::abs(r3.outputs[0][i] - 3.0 * base.outputs[0][i]));
  }
  CHECK(diff <= 1e-11 * std::max(1.0, 3.0 * scale));
}

TEST_CASE("joint evaluation agrees with one scaling at a time") {
  std::mt19937_64 rng(66);
  auto a = random_matrix<double>(rng, 20, 9.0);
  auto op = kry::make_dense_operator(a);
  kry::PhiCombinationTask<double> task;
  task.op = &op;
  task.scalings = {0.25, 0.5, 1.0};
  for (int k = 0; k <= 3; ++k) task.vectors.push_back(random_vec<double>(rng, 20));
  auto joint = kry::evaluate_combination(task);

  for (std::size_t s = 0; s < task.scalings.size(); ++s) {
    auto single = task;
    single.scalings = {task.scalings[s]};
    auto r = kry::evaluate_combination(single);
    double scale = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      scale = std::max(scale, std::abs(r.outputs[0][i]));
      diff = std::max(diff, std::abs(r.outputs[0][i] - joint.outputs[s][i]));
    }
    CHECK(diff <= 1e-11 * std::max(1.0, scale));
  }
}

TEST_CASE("diagonal operators get bitwise-reproducible exact evaluation") {
  std::mt19937_64 rng(77);
  const std::size_t n = 24;
  std::vector<cplx> diag(n);
  for (std::size_t j = 0; j < n; ++j)
    diag[j] = cplx(0.0, -static_cast<double>(j * j) / 8.0);
  auto op = kry::make_diagonal_operator(diag);

  kry::PhiCombinationTask<cplx> task;
  task.op = &op;
  task.scalings = {0.5, 1.0};
  for (int k = 0; k <= 2; ++k) task.vectors.push_back(random_vec<cplx>(rng, n));

  auto fast = kry::diagonal_fast_path(task);
  DenseMatrix<cplx> dm(n, n);
  for (std::size_t j = 0; j < n; ++j) dm(j, j) = diag[j];
  for (std::size_t s = 0; s < task.scalings.size(); ++s) {
    auto ref = exprk::matfun::phi_combination_dense(dm, task.vectors, task.scalings[s]);
    CHECK(rel_max_err(fast.outputs[s], ref) <= 1e-12);
  }

  auto again = kry::diagonal_fast_path(task);
  for (std::size_t s = 0; s < fast.outputs.size(); ++s)
    for (std::size_t i = 0; i < n; ++i) CHECK(fast.outputs[s][i] == again.outputs[s][i]);

  auto dense_op = kry::make_dense_operator(dm);
  auto bad = task;
  bad.op = &dense_op;
  CHECK_THROWS_AS(kry::diagonal_fast_path(bad), exprk::ContractError);
}

TEST_CASE("a nilpotent operator is evaluated exactly through breakdown") {
  const std::size_t n = 6;
  DenseMatrix<double> shift(n, n);
  for (std::size_t i = 0; i + 1 < n; ++i) shift(i, i + 1) = 1.0;
  auto op = kry::make_dense_operator(shift);

  kry::PhiCombinationTask<double> task;
  task.op = &op;
  task.scalings = {1.0};
  task.vectors.assign(2, std::vector<double>(n, 0.0));
  task.vectors[1][n - 1] = 1.0;  // seeds the power chain e_6 -> e_5 -> ...
  auto res = kry::evaluate_combination(task);
  auto ref = exprk::matfun::phi_combination_dense(shift, task.vectors, 1.0);
  CHECK(rel_max_err(res.outputs[0], ref) <= 1e-13);
}

TEST_CASE("a zero operator reduces to the exact Taylor polynomial") {
  const std::size_t n = 5;
  DenseMatrix<double> zero(n, n);
  auto op = kry::make_dense_operator(zero);
  kry::PhiCombinationTask<double> task;
  task.op = &op;
  task.scalings = {0.5, 1.0};
  std::mt19937_64 rng(88);
  for (int k = 0; k <= 3; ++k) task.vectors.push_back(random_vec<double>(rng, n));
  auto res = kry::evaluate_combination(task);
  for (std::size_t s = 0; s < task.scalings.size(); ++s) {
    const double rho = task.scalings[s];
    for (std::size_t i = 0; i < n; ++i) {
      // phi_k(0) = 1/k!
      double ref = 0.0, kfac = 1.0, rk = 1.0;
      for (int k = 0; k <= 3; ++k) {
        if (k > 0) {
          kfac *= k;
          rk *= rho;
        }
        ref += rk / kfac * task.vectors[static_cast<std::size_t>(k)][i];
      }
      CHECK(res.outputs[s][i] == doctest::Approx(ref).epsilon(1e-13));
    }
  }
}

TEST_CASE("an all-zero task returns zeros without iteration") {
  DenseMatrix<double> a(4, 4);
  a(0, 1) = 5.0;
  auto op = kry::make_dense_operator(a);
  kry::PhiCombinationTask<double> task;
  task.op = &op;
  task.scalings = {1.0};
  task.vectors.assign(3, std::vector<double>(4, 0.0));
  auto res = kry::evaluate_combination(task);
  for (double x : res.outputs[0]) CHECK(x == 0.0);
  CHECK(res.stats.operator_applications == 0);
}

TEST_CASE("tighter tolerances never reduce the work") {
  std::mt19937_64 rng(99);
  auto a = random_matrix<double>(rng, 40, 12.0);
  auto op = kry::make_dense_operator(a);
  kry::PhiCombinationTask<double> task;
  task.op = &op;
  task.scalings = {0.3, 1.0};
  for (int k = 0; k <= 2; ++k) task.vectors.push_back(random_vec<double>(rng, 40));

  long long prev = -1;
  for (double tol : {1e-4, 1e-7, 1e-10, 1e-13}) {
    task.tolerance = tol;
    auto res = kry::evaluate_combination(task);
    CHECK(res.stats.operator_applications >= prev);
    prev = res.stats.operator_applications;
  }
}

TEST_CASE("the initial substep hint is honored") {
  std::mt19937_64 rng(111);
  auto a = random_matrix<double>(rng, 10, 3.0);
  auto op = kry::make_dense_operator(a);
  kry::PhiCombinationTask<double> task;
  task.op = &op;
  task.scalings = {1.0};
  for (int k = 0; k <= 1; ++k) task.vectors.push_back(random_vec<double>(rng, 10));
  task.initial_substep = 0.05;
  auto res = kry::evaluate_combination(task);
  CHECK(res.stats.substeps >= 3);  // 0.05 with growth capped at 5x needs several
}

TEST_CASE("exhausted budgets raise a convergence error with a trace") {
  std::mt19937_64 rng(222);
  auto a = random_matrix<double>(rng, 20, 60.0);
  auto op = kry::make_dense_operator(a);
  kry::PhiCombinationTask<double> task;
  task.op = &op;
  task.scalings = {1.0};
  for (int k = 0; k <= 1; ++k) task.vectors.push_back(random_vec<double>(rng, 20));
  task.tolerance = 1e-13;

  auto strict = task;
  strict.max_attempts = 1;
  try {
    kry::evaluate_combination(strict);
    FAIL("expected a convergence error");
  } catch (const exprk::ConvergenceError& e) {
    CHECK(std::string(e.what()).find("trace") != std::string::npos);
  }

  auto floor = task;
  floor.max_krylov_dim = 2;
  floor.min_substep_fraction = 0.5;
  CHECK_THROWS_AS(kry::evaluate_combination(floor), exprk::ConvergenceError);
}

TEST_CASE("task validation rejects malformed inputs") {
  std::mt19937_64 rng(333);
  auto a = random_matrix<double>(rng, 6, 2.0);
  auto op = kry::make_dense_operator(a);
  kry::PhiCombinationTask<double> task;
  task.op = &op;
  task.scalings = {0.5, 1.0};
  task.vectors.push_back(random_vec<double>(rng, 6));

  auto bad = task;
  bad.scalings = {};
  CHECK_THROWS_AS(kry::evaluate_combination(bad), exprk::ParameterError);
  bad = task;
  bad.scalings = {0.5, 0.5};
  CHECK_THROWS_AS(kry::evaluate_combination(bad), exprk::ParameterError);
  bad = task;
  bad.scalings = {0.5, 1.5};
  CHECK_THROWS_AS(kry::evaluate_combination(bad), exprk::ParameterError);
  bad = task;
  bad.scalings = {-0.5, 1.0};
  CHECK_THROWS_AS(kry::evaluate_combination(bad), exprk::ParameterError);
  bad = task;
  bad.vectors.clear();
  CHECK_THROWS_AS(kry::evaluate_combination(bad), exprk::InvalidInputError);
  bad = task;
  bad.vectors[0].pop_back();
  CHECK_THROWS_AS(kry::evaluate_combination(bad), exprk::DimensionError);
  bad = task;
  bad.vectors[0][0] = std::nan("");
  CHECK_THROWS_AS(kry::evaluate_combination(bad), exprk::InvalidInputError);
  bad = task;
  bad.tolerance = 0.0;
  CHECK_THROWS_AS(kry::evaluate_combination(bad), exprk::ParameterError);
  bad = task;
  bad.op = nullptr;
  CHECK_THROWS_AS(kry::evaluate_combination(bad), exprk::InvalidInputError);
}

TEST_CASE("stats reflect the amount of work done") {
  std::mt19937_64 rng(444);
  auto a = random_matrix<double>(rng, 30, 10.0);
  auto op = kry::make_dense_operator(a);
  kry::PhiCombinationTask<double> task;
  task.op = &op;
  task.scalings = {0.5, 1.0};
  for (int k = 0; k <= 2; ++k) task.vectors.push_back(random_vec<double>(rng, 30));
  auto res = kry::evaluate_combination(task);
  CHECK(res.stats.substeps >= 2);
  CHECK(res.stats.operator_applications > 0);
  CHECK(res.stats.max_dimension >= 1);
  CHECK(res.stats.krylov_vectors >= res.stats.max_dimension);
}
