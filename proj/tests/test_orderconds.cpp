#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "exprk/errors.hpp"
#include "exprk/matfun.hpp"
#include "exprk/orderconds.hpp"
#include "exprk/schemes.hpp"

namespace oc = exprk::orderconds;
namespace sch = exprk::schemes;
namespace mf = exprk::matfun;
using exprk::Rational;
using sch::ConditionStatus;

TEST_CASE("every catalog method matches its claimed condition pattern") {
  for (const auto& name : sch::method_names()) {
    CAPTURE(name);
    const auto m = sch::method_by_name(name);
    std::string details;
    const bool ok = oc::verify_claims(m, &details);
    CAPTURE(details);
    CHECK(ok);
    CHECK(details.empty());
  }
}

TEST_CASE("verification distinguishes weak-at-zero from failing second-order nodes") {
  const auto probes = oc::default_probes();
  // at c2 = 2/3 the third-order row only holds at zero stiffness
  const auto good = sch::build_expRK2s2(Rational(2, 3));
  const auto rep_good = oc::check_conditions(good, probes);
  CHECK(rep_good.row(1).status == ConditionStatus::strong);
  CHECK(rep_good.row(2).status == ConditionStatus::weak_at_zero);

  // any other node breaks it outright
  const auto off = sch::build_expRK2s2(Rational(1, 2));
  const auto rep_off = oc::check_conditions(off, probes);
  CHECK(rep_off.row(1).status == ConditionStatus::strong);
  CHECK(rep_off.row(2).status == ConditionStatus::fail);
  CHECK(oc::psi_zero(off, 3) == Rational(-1, 24));  // c2/4 - 1/6 at c2 = 1/2
  CHECK(oc::psi_zero(good, 3).is_zero());
  CHECK(oc::verify_claims(off));  // its claims already record the failure
}

TEST_CASE("stage psi matches its closed form on the first internal stage") {
  const auto m = sch::build_expRK4s6();
  const auto probe = oc::make_probe(424242);
  const auto got = oc::psi_stage(m, 2, 2, probe.z);
  // psi_{2,2} has no tableau part, only -c2^2 phi_2(c2 Z)
  const Rational c2 = m.nodes[2];
  mf::DenseMatrix<double> sz = probe.z;
  sz *= c2.value();
  auto want = mf::phi_stack(sz, 2)[2];
  want *= -c2.pow(2).value();
  double diff = 0.0;
  for (std::size_t i = 0; i < got.rows(); ++i)
    for (std::size_t j = 0; j < got.cols(); ++j) diff = std::max(diff, std::abs(got(i, j) - want(i, j)));
  CHECK(diff <= 1e-14);
  CHECK(got.norm_fro() > 1e-2);  // genuinely nonzero, not a trivial identity
}

TEST_CASE("interpolation stages annihilate their second and third order defects") {
  const auto m = sch::build_expRK4s6();
  const auto probe = oc::make_probe(7);
  for (int i : {5, 6}) {
    CAPTURE(i);
    CHECK(oc::psi_stage(m, 2, i, probe.z).norm_fro() <= 1e-12);
    CHECK(oc::psi_stage(m, 3, i, probe.z).norm_fro() <= 1e-12);
  }
  // while the plain second stage does not
  CHECK(oc::psi_stage(m, 2, 2, probe.z).norm_fro() > 1e-2);
}

TEST_CASE("residuals scale linearly in the probe operator") {
  // on a second-order method conditions 3, 5 and 9 have honest nonzero
  // residuals, and each contains the J probe exactly once
  const auto m = sch::build_expRK2s2();
  const auto p1 = oc::make_probe(1001);
  auto p2 = p1;
  p2.j *= 2.0;
  for (int index : {3, 5, 9}) {
    CAPTURE(index);
    const auto r1 = oc::condition_sample(m, index, p1);
    const auto r2 = oc::condition_sample(m, index, p2);
    REQUIRE(r1.residual > 0.0);
    CHECK(r2.residual == doctest::Approx(2.0 * r1.residual).epsilon(1e-12));
  }
}

TEST_CASE("condition statuses are stable across probe draws") {
  for (const auto& name : {"expRK4s6", "expRK5s8"}) {
    CAPTURE(name);
    const auto m = sch::method_by_name(name);
    const auto base = oc::check_conditions(m, oc::default_probes(5, 6, 100));
    for (std::uint64_t seed : {200, 300, 400, 500}) {
      const auto rep = oc::check_conditions(m, oc::default_probes(5, 6, seed));
      for (int c = 1; c <= 16; ++c) CHECK(rep.row(c).status == base.row(c).status);
    }
  }
}

TEST_CASE("the corrupted variant fails exactly the final-row conditions") {
  const auto bad = sch::method_by_name("expRK4s6-corrupted");
  std::string details;
  CHECK_FALSE(oc::verify_claims(bad, &details));
  CHECK(details.find("condition 1") != std::string::npos);
  CHECK(details.find("condition 2") != std::string::npos);

  const auto rep = oc::check_conditions(bad, oc::default_probes());
  CHECK(rep.row(1).status == ConditionStatus::fail);
  CHECK(rep.row(2).status == ConditionStatus::fail);
  // stage-row conditions are untouched by a final-row perturbation
  for (int c : {3, 5, 6, 7}) CHECK(rep.row(c).status == ConditionStatus::strong);
}

TEST_CASE("perturbing any single tableau coefficient flips some condition") {
  const auto probes = oc::default_probes();
  const auto clean = sch::build_expRK4s6();
  const auto base = oc::check_conditions(clean, probes);
  const int terms = sch::term_count(clean);
  REQUIRE(terms == 14);
  for (int idx = 0; idx < terms; ++idx) {
    CAPTURE(idx);
    auto mutant = sch::build_expRK4s6();
    sch::perturb_term(mutant, idx);
    const auto rep = oc::check_conditions(mutant, probes);
    int flips = 0;
    for (int c = 1; c <= 16; ++c)
      if (rep.row(c).status != base.row(c).status) ++flips;
    CHECK(flips >= 1);
  }
}

TEST_CASE("conditions above the requested order are skipped") {
  const auto m = sch::build_expRK3s3();
  const auto rep = oc::check_conditions(m, oc::default_probes(), 1e-9, 3);
  for (int c = 1; c <= 16; ++c) {
    if (oc::condition_order(c) <= 3) {
      CHECK_FALSE(rep.row(c).skipped);
    } else {
      CHECK(rep.row(c).skipped);
    }
  }
  const auto text = oc::render_report(rep);
  CHECK(text.find("skipped") != std::string::npos);
  CHECK(text.find("strong") != std::string::npos);
  CHECK(text.find("expRK3s3") != std::string::npos);
}

TEST_CASE("checker validates its inputs") {
  const auto m = sch::build_expRK2s2();
  const auto two = oc::default_probes(2);
  CHECK_THROWS_AS(oc::check_conditions(m, two), exprk::ParameterError);
  auto bad = oc::default_probes(3);
  bad[1].x.resize(5);
  CHECK_THROWS_AS(oc::check_conditions(m, bad), exprk::DimensionError);
  auto mixed = oc::default_probes(3);
  mixed[2] = oc::make_probe(9, 7);
  CHECK_THROWS_AS(oc::check_conditions(m, mixed), exprk::DimensionError);
  const auto p = oc::make_probe(3);
  CHECK_THROWS_AS(oc::condition_sample(m, 0, p), exprk::ParameterError);
  CHECK_THROWS_AS(oc::condition_sample(m, 17, p), exprk::ParameterError);
  CHECK_THROWS_AS(oc::condition_order(17), exprk::ParameterError);
  CHECK_THROWS_AS(oc::psi(m, 6, p.z), exprk::ParameterError);
  CHECK_THROWS_AS(oc::psi_stage(m, 2, 1, p.z), exprk::ParameterError);
  CHECK_THROWS_AS(oc::make_probe(1, 1), exprk::ParameterError);
}

TEST_CASE("weakened evaluation really is the scalar-weight substitution") {
  // condition 5 of the five-stage fourth-order scheme holds only with scalar
  // weights: its strong residual must sit far above tolerance while the
  // substituted form collapses it
  const auto m = sch::build_expRK4s5();
  const auto probes = oc::default_probes();
  const auto rep = oc::check_conditions(m, probes);
  CHECK(rep.row(5).status == ConditionStatus::weakened_b0);
  CHECK(rep.row(5).strong_residual > 1e-4);
  CHECK(rep.row(5).weak_residual <= 1e-9);
  CHECK(rep.row(4).status == ConditionStatus::weak_at_zero);
  for (int c : {1, 2, 3, 6, 7}) CHECK(rep.row(c).status == ConditionStatus::strong);

  // same split on the eight-stage scheme: fourth-order stage defects force
  // scalar weights in rows 9 and 10, everything else is strong
  const auto rep8 = oc::check_conditions(sch::build_expRK5s8(), probes);
  for (int c : {9, 10}) {
    CAPTURE(c);
    CHECK(rep8.row(c).status == ConditionStatus::weakened_b0);
    CHECK(rep8.row(c).strong_residual > 1e-6);
  }
  for (int c : {11, 12, 13, 14, 15, 16}) {
    CAPTURE(c);
    CHECK(rep8.row(c).status == ConditionStatus::strong);
  }
}
