#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "exprk/errors.hpp"
#include "exprk/phipoly.hpp"
#include "exprk/rational.hpp"

namespace exprk::schemes {

enum class ConditionStatus { strong, weak_at_zero, weakened_b0, fail };

inline std::string condition_status_name(ConditionStatus s) {
  switch (s) {
    case ConditionStatus::strong: return "strong";
    case ConditionStatus::weak_at_zero: return "weak-at-zero";
    case ConditionStatus::weakened_b0: return "weakened-b(0)";
    case ConditionStatus::fail: return "fail";
  }
  return "?";
}

// Stage 0 stands for the time-step update u_{n+1}.
struct BatchTarget {
  int stage = 0;
  Rational rho = Rational(1);
};

// One engine call: outputs sum_k phi_k(rho * hA) rho^k v_k for every target,
// with shared vectors v_k = sum_col weights[k][col] * basis[col], where
// basis[0] = h F(t_n, u_n) and basis[j] = h D_nj.
struct EvaluationBatch {
  std::vector<BatchTarget> targets;  // strictly ascending in rho
  int q = 0;
  std::vector<std::vector<Rational>> weights;  // (q+1) x (s+1)
};

struct ExpRKMethod {
  std::string name;
  int order = 0;
  int stages = 0;
  std::vector<Rational> nodes;                    // nodes[i] = c_i, nodes[1] = 0
  std::vector<std::vector<PhiPolynomial>> a;      // a[i][j] for 2 <= j < i
  std::vector<PhiPolynomial> b;                   // b[i] for 2 <= i <= stages
  std::vector<EvaluationBatch> plan;
  std::map<int, ConditionStatus> claims;          // Table-row index -> expected status

  // Full coefficient row of stage i: column 0 carries the leading
  // c_i * phi_1(c_i z) weight on h F(t_n, u_n), column j the weight on h D_nj.
  std::vector<PhiPolynomial> stage_row(int i) const {
    if (i < 2 || i > stages) throw ParameterError("stage index out of range");
    std::vector<PhiPolynomial> row(static_cast<std::size_t>(stages) + 1);
    row[0] = PhiPolynomial::term(1, nodes[static_cast<std::size_t>(i)],
                                 nodes[static_cast<std::size_t>(i)]);
    for (int j = 2; j < i; ++j)
      row[static_cast<std::size_t>(j)] = a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return row;
  }

  std::vector<PhiPolynomial> final_row() const {
    std::vector<PhiPolynomial> row(static_cast<std::size_t>(stages) + 1);
    row[0] = PhiPolynomial::term(1, Rational(1), Rational(1));
    for (int i = 2; i <= stages; ++i)
      row[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(i)];
    return row;
  }
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConstructionError(what);
}

inline void check_node(const Rational& c, const std::string& name) {
  require(c > Rational(0) && c <= Rational(1), name + " must lie in (0, 1]");
}

inline ExpRKMethod skeleton(const std::string& name, int order, int stages) {
  ExpRKMethod m;
  m.name = name;
  m.order = order;
  m.stages = stages;
  m.nodes.assign(static_cast<std::size_t>(stages) + 1, Rational(0));
  m.a.assign(static_cast<std::size_t>(stages) + 1,
             std::vector<PhiPolynomial>(static_cast<std::size_t>(stages) + 1));
  m.b.assign(static_cast<std::size_t>(stages) + 1, PhiPolynomial());
  return m;
}

}  // namespace detail

// Derives every batch's phi_weights from the tableau. Each batch target
// claims exactly the row terms whose scaling equals the target's rho; weights
// are coeff / rho^k and must agree across all targets of the batch. The plan
// must claim every tableau term exactly once and may only reference stage
// differences assembled by earlier batches.
inline void derive_plan(ExpRKMethod& m, const std::vector<std::vector<BatchTarget>>& groups) {
  const int s = m.stages;
  int final_targets = 0;
  std::map<int, std::size_t> stage_last;
  for (std::size_t bi = 0; bi < groups.size(); ++bi) {
    const auto& g = groups[bi];
    detail::require(!g.empty(), "empty evaluation batch");
    for (std::size_t t = 0; t + 1 < g.size(); ++t)
      detail::require(g[t].rho < g[t + 1].rho, "batch scalings must be strictly increasing");
    for (const auto& t : g) {
      if (t.stage == 0) {
        ++final_targets;
        detail::require(t.rho == Rational(1), "the update target must use scaling 1");
      } else {
        detail::require(t.stage >= 2 && t.stage <= s, "batch target references an invalid stage");
      }
      detail::require(t.rho > Rational(0) && t.rho <= Rational(1), "batch scaling out of (0, 1]");
      stage_last[t.stage] = bi;
    }
  }
  detail::require(final_targets == 1, "plan must contain exactly one update target");

  std::set<std::tuple<int, int, int, std::int64_t, std::int64_t>> claimed;
  m.plan.clear();
  for (std::size_t bi = 0; bi < groups.size(); ++bi) {
    EvaluationBatch batch;
    batch.targets = groups[bi];
    std::map<std::pair<int, int>, Rational> w;
    int q = 0;
    for (const auto& t : batch.targets) {
      const auto row = t.stage == 0 ? m.final_row() : m.stage_row(t.stage);
      int claimed_here = 0;
      for (int col = 0; col <= s; ++col) {
        for (const auto& term : row[static_cast<std::size_t>(col)].terms()) {
          if (!(term.scale == t.rho)) continue;
          const Rational weight = term.coeff / t.rho.pow(term.order);
          const auto key = std::make_pair(term.order, col);
          auto it = w.find(key);
          if (it == w.end())
            w.emplace(key, weight);
          else
            detail::require(it->second == weight, "batch weight disagreement between targets");
          detail::require(
              claimed
                  .insert(std::make_tuple(t.stage, col, term.order, term.scale.num(),
                                          term.scale.den()))
                  .second,
              "tableau term claimed twice by the plan");
          q = std::max(q, term.order);
          ++claimed_here;
        }
      }
      detail::require(claimed_here > 0, "batch target matches no tableau terms");
    }
    batch.q = q;
    batch.weights.assign(static_cast<std::size_t>(q) + 1,
                         std::vector<Rational>(static_cast<std::size_t>(s) + 1, Rational(0)));
    for (const auto& [key, weight] : w)
      batch.weights[static_cast<std::size_t>(key.first)][static_cast<std::size_t>(key.second)] =
          weight;
    for (int col = 2; col <= s; ++col) {
      bool used = false;
      for (int k = 0; k <= q; ++k)
        if (!batch.weights[static_cast<std::size_t>(k)][static_cast<std::size_t>(col)].is_zero())
          used = true;
      if (!used) continue;
      auto it = stage_last.find(col);
      detail::require(it != stage_last.end() && it->second < bi,
                      "batch uses a stage difference not yet assembled");
    }
    m.plan.push_back(std::move(batch));
  }

  const auto check_row = [&](int stage) {
    const auto row = stage == 0 ? m.final_row() : m.stage_row(stage);
    for (int col = 0; col <= s; ++col)
      for (const auto& term : row[static_cast<std::size_t>(col)].terms())
        detail::require(claimed.count(std::make_tuple(stage, col, term.order, term.scale.num(),
                                                      term.scale.den())) != 0,
                        "tableau term not covered by the plan");
  };
  check_row(0);
  for (int i = 2; i <= s; ++i) check_row(i);
}

// Symbolic execution of the plan: accumulates, per stage, the phi polynomial
// applied to each basis column. Row 0 is the update row. Must reproduce
// stage_row / final_row exactly.
inline std::vector<std::vector<PhiPolynomial>> plan_rows(const ExpRKMethod& m) {
  std::vector<std::vector<PhiPolynomial>> rows(
      static_cast<std::size_t>(m.stages) + 1,
      std::vector<PhiPolynomial>(static_cast<std::size_t>(m.stages) + 1));
  for (const auto& batch : m.plan)
    for (const auto& t : batch.targets)
      for (int k = 1; k <= batch.q; ++k)
        for (int col = 0; col <= m.stages; ++col) {
          const Rational& w =
              batch.weights[static_cast<std::size_t>(k)][static_cast<std::size_t>(col)];
          if (w.is_zero()) continue;
          rows[static_cast<std::size_t>(t.stage)][static_cast<std::size_t>(col)].add_term(
              k, t.rho, w * t.rho.pow(k));
        }
  return rows;
}

inline void rebuild_plan(ExpRKMethod& m) {
  std::vector<std::vector<BatchTarget>> groups;
  groups.reserve(m.plan.size());
  for (const auto& batch : m.plan) groups.push_back(batch.targets);
  m.plan.clear();
  derive_plan(m, groups);
}

inline ExpRKMethod build_expRK2s2(const Rational& c2 = Rational(2, 3)) {
  detail::check_node(c2, "c2");
  ExpRKMethod m = detail::skeleton("expRK2s2", 2, 2);
  m.nodes[2] = c2;
  m.b[2] = PhiPolynomial::term(2, Rational(1), Rational(1) / c2);
  derive_plan(m, {{{2, c2}}, {{0, Rational(1)}}});
  m.claims = {{1, ConditionStatus::strong},
              {2, c2 == Rational(2, 3) ? ConditionStatus::weak_at_zero : ConditionStatus::fail}};
  return m;
}

inline ExpRKMethod build_expRK3s3(const Rational& c2 = Rational(1, 2)) {
  detail::check_node(c2, "c2");
  detail::require(!(c2 == Rational(2, 3)), "c2 must differ from 2/3");
  ExpRKMethod m = detail::skeleton("expRK3s3", 3, 3);
  m.nodes[2] = c2;
  m.nodes[3] = Rational(2, 3);
  m.a[3][2] = PhiPolynomial::term(2, Rational(2, 3), Rational(4, 9) / c2);
  m.b[3] = PhiPolynomial::term(2, Rational(1), Rational(3, 2));
  derive_plan(m, {{{2, c2}}, {{3, Rational(2, 3)}}, {{0, Rational(1)}}});
  m.claims = {{1, ConditionStatus::strong},
              {2, ConditionStatus::weak_at_zero},
              {3, ConditionStatus::strong}};
  return m;
}

inline ExpRKMethod build_expRK4s5() {
  const Rational half(1, 2), one(1);
  ExpRKMethod m = detail::skeleton("expRK4s5", 4, 5);
  m.nodes[2] = half;
  m.nodes[3] = half;
  m.nodes[4] = one;
  m.nodes[5] = half;
  m.a[3][2] = PhiPolynomial::term(2, half, one);
  m.a[4][2] = PhiPolynomial::term(2, one, one);
  m.a[4][3] = PhiPolynomial::term(2, one, one);
  for (int j : {2, 3}) {
    auto& e = m.a[5][static_cast<std::size_t>(j)];
    e.add_term(2, half, Rational(1, 2));
    e.add_term(3, half, Rational(-1, 2));
    e.add_term(2, one, Rational(1, 4));
    e.add_term(3, one, Rational(-1));
  }
  m.a[5][4].add_term(2, half, Rational(-1, 4));
  m.a[5][4].add_term(3, half, Rational(1, 2));
  m.a[5][4].add_term(2, one, Rational(-1, 4));
  m.a[5][4].add_term(3, one, Rational(1));
  m.b[4].add_term(2, one, Rational(-1));
  m.b[4].add_term(3, one, Rational(4));
  m.b[5].add_term(2, one, Rational(4));
  m.b[5].add_term(3, one, Rational(-8));
  derive_plan(m, {{{2, half}},
                  {{3, half}},
                  {{4, one}},
                  {{5, half}},
                  {{5, one}},
                  {{0, one}}});
  // The derivation only needs 5-7 with scalar weights, but 6 and 7 come out
  // strong for free: the last two stages have vanishing second-order defects,
  // and the shared entries of columns 2 and 3 cancel the rest.
  m.claims = {{1, ConditionStatus::strong},      {2, ConditionStatus::strong},
              {3, ConditionStatus::strong},      {4, ConditionStatus::weak_at_zero},
              {5, ConditionStatus::weakened_b0}, {6, ConditionStatus::strong},
              {7, ConditionStatus::strong}};
  return m;
}

inline ExpRKMethod build_expRK5s8() {
  const Rational half(1, 2), quarter(1, 4), fifth(1, 5), two3(2, 3), one(1);
  ExpRKMethod m = detail::skeleton("expRK5s8", 5, 8);
  m.nodes[2] = half;
  m.nodes[3] = half;
  m.nodes[4] = quarter;
  m.nodes[5] = half;
  m.nodes[6] = fifth;
  m.nodes[7] = two3;
  m.nodes[8] = one;
  m.a[3][2] = PhiPolynomial::term(2, half, half);
  m.a[4][3] = PhiPolynomial::term(2, quarter, Rational(1, 8));
  m.a[5][3].add_term(2, half, Rational(-1, 2));
  m.a[5][3].add_term(3, half, Rational(2));
  m.a[5][4].add_term(2, half, Rational(2));
  m.a[5][4].add_term(3, half, Rational(-4));
  m.a[6][4].add_term(2, fifth, Rational(8, 25));
  m.a[6][4].add_term(3, fifth, Rational(-32, 125));
  m.a[6][5].add_term(2, fifth, Rational(-2, 25));
  m.a[6][5].add_term(3, fifth, Rational(16, 125));
  m.a[7][4].add_term(2, fifth, Rational(-20, 81));
  m.a[7][4].add_term(3, fifth, Rational(16, 81));
  m.a[7][5].add_term(2, two3, Rational(-16, 27));
  m.a[7][5].add_term(3, two3, Rational(320, 81));
  m.a[7][5].add_term(2, fifth, Rational(5, 243));
  m.a[7][5].add_term(3, fifth, Rational(-4, 243));
  m.a[7][6].add_term(2, two3, Rational(100, 27));
  m.a[7][6].add_term(3, two3, Rational(-800, 81));
  m.a[7][6].add_term(2, fifth, Rational(125, 486));
  m.a[7][6].add_term(3, fifth, Rational(-50, 243));
  m.a[8][5].add_term(2, one, Rational(-16, 3));
  m.a[8][5].add_term(3, one, Rational(208, 3));
  m.a[8][5].add_term(4, one, Rational(-240));
  m.a[8][5].add_term(2, fifth, Rational(-4, 7));
  m.a[8][5].add_term(3, fifth, Rational(8, 5));
  m.a[8][5].add_term(4, fifth, Rational(-48, 35));
  m.a[8][5].add_term(2, two3, Rational(-288, 35));
  m.a[8][5].add_term(3, two3, Rational(384, 5));
  m.a[8][5].add_term(4, two3, Rational(-1536, 7));
  m.a[8][6].add_term(2, one, Rational(250, 21));
  m.a[8][6].add_term(3, one, Rational(-250, 3));
  m.a[8][6].add_term(4, one, Rational(1500, 7));
  m.a[8][6].add_term(2, fifth, Rational(25, 49));
  m.a[8][6].add_term(3, fifth, Rational(-10, 7));
  m.a[8][6].add_term(4, fifth, Rational(60, 49));
  m.a[8][6].add_term(2, two3, Rational(360, 49));
  m.a[8][6].add_term(3, two3, Rational(-480, 7));
  m.a[8][6].add_term(4, two3, Rational(9600, 49));
  m.a[8][7].add_term(2, one, Rational(27, 14));
  m.a[8][7].add_term(3, one, Rational(-27));
  m.a[8][7].add_term(4, one, Rational(810, 7));
  m.a[8][7].add_term(2, fifth, Rational(27, 98));
  m.a[8][7].add_term(3, fifth, Rational(-27, 35));
  m.a[8][7].add_term(4, fifth, Rational(162, 245));
  m.a[8][7].add_term(2, two3, Rational(972, 245));
  m.a[8][7].add_term(3, two3, Rational(-1296, 35));
  m.a[8][7].add_term(4, two3, Rational(5184, 49));
  m.b[6].add_term(2, one, Rational(125, 14));
  m.b[6].add_term(3, one, Rational(-625, 14));
  m.b[6].add_term(4, one, Rational(1125, 14));
  m.b[7].add_term(2, one, Rational(-27, 14));
  m.b[7].add_term(3, one, Rational(162, 7));
  m.b[7].add_term(4, one, Rational(-405, 7));
  m.b[8].add_term(2, one, Rational(1, 2));
  m.b[8].add_term(3, one, Rational(-13, 2));
  m.b[8].add_term(4, one, Rational(45, 2));
  derive_plan(m, {{{2, half}},
                  {{3, half}},
                  {{4, quarter}},
                  {{5, half}},
                  {{6, fifth}},
                  {{7, two3}},
                  {{7, fifth}},
                  {{8, one}},
                  {{8, fifth}},
                  {{8, two3}},
                  {{0, one}}});
  m.claims = {{1, ConditionStatus::strong},  {2, ConditionStatus::strong},
              {3, ConditionStatus::strong},  {4, ConditionStatus::strong},
              {5, ConditionStatus::strong},  {6, ConditionStatus::strong},
              {7, ConditionStatus::strong},  {8, ConditionStatus::weak_at_zero}};
  // Scalar weights are needed only where fourth-order stage defects enter
  // (conditions 9 and 10); rows 11-16 touch nothing beyond the second- and
  // third-order defects, which the quadrature stages annihilate outright.
  m.claims[9] = ConditionStatus::weakened_b0;
  m.claims[10] = ConditionStatus::weakened_b0;
  for (int c = 11; c <= 16; ++c) m.claims[c] = ConditionStatus::strong;
  return m;
}

inline ExpRKMethod build_expRK4s6(const Rational& c2 = Rational(1, 2),
                                  const Rational& c3 = Rational(1, 2),
                                  const Rational& c4 = Rational(1, 3),
                                  const Rational& c6 = Rational(1, 3)) {
  detail::check_node(c2, "c2");
  detail::check_node(c3, "c3");
  detail::check_node(c4, "c4");
  detail::check_node(c6, "c6");
  detail::require(!(c3 == c4), "nodes c3 and c4 must be distinct");
  detail::require(!(c6 == Rational(2, 3)), "c6 = 2/3 makes the c5 formula singular");
  const Rational c5 = (Rational(4) * c6 - Rational(3)) / (Rational(6) * c6 - Rational(4));
  detail::require(c5 > Rational(0) && c5 <= Rational(1),
                  "derived node c5 = " + c5.str() + " falls outside (0, 1]");
  detail::require(!(c5 == c6), "derived node c5 coincides with c6");

  ExpRKMethod m = detail::skeleton("expRK4s6", 4, 6);
  m.nodes[2] = c2;
  m.nodes[3] = c3;
  m.nodes[4] = c4;
  m.nodes[5] = c5;
  m.nodes[6] = c6;
  m.a[3][2] = PhiPolynomial::term(2, c3, c3 * c3 / c2);
  m.a[4][2] = PhiPolynomial::term(2, c4, c4 * c4 / c2);
  for (int j : {5, 6}) {
    const Rational cj = m.nodes[static_cast<std::size_t>(j)];
    const Rational s2 = cj * cj / (c3 - c4);
    const Rational s3 = Rational(2) * cj.pow(3) / (c3 - c4);
    auto& r3 = m.a[static_cast<std::size_t>(j)][3];
    auto& r4 = m.a[static_cast<std::size_t>(j)][4];
    r3.add_term(2, cj, s2 * (-c4 / c3));
    r3.add_term(3, cj, s3 / c3);
    r4.add_term(2, cj, s2 * (c3 / c4));
    r4.add_term(3, cj, -s3 / c4);
  }
  const Rational w2 = Rational(1) / (c5 - c6);
  const Rational w3 = Rational(2) / (c5 - c6);
  m.b[5].add_term(2, Rational(1), w2 * (-c6 / c5));
  m.b[5].add_term(3, Rational(1), w3 / c5);
  m.b[6].add_term(2, Rational(1), w2 * (c5 / c6));
  m.b[6].add_term(3, Rational(1), -w3 / c6);

  std::vector<BatchTarget> pair34 = {{3, c3}, {4, c4}};
  if (c4 < c3) std::swap(pair34[0], pair34[1]);
  std::vector<BatchTarget> pair56 = {{5, c5}, {6, c6}};
  if (c6 < c5) std::swap(pair56[0], pair56[1]);
  derive_plan(m, {{{2, c2}}, pair34, pair56, {{0, Rational(1)}}});
  m.claims = {{1, ConditionStatus::strong},       {2, ConditionStatus::strong},
              {3, ConditionStatus::strong},       {4, ConditionStatus::weak_at_zero},
              {5, ConditionStatus::strong},       {6, ConditionStatus::strong},
              {7, ConditionStatus::strong}};
  return m;
}

inline ExpRKMethod build_expRK5s10(
    const Rational& c2 = Rational(1, 2), const Rational& c3 = Rational(1, 2),
    const Rational& c4 = Rational(1, 3), const Rational& c5 = Rational(1, 2),
    const Rational& c6 = Rational(1, 3), const Rational& c7 = Rational(1, 4),
    const Rational& c8 = Rational(3, 10), const Rational& c9 = Rational(3, 4),
    const Rational& c10 = Rational(1)) {
  const Rational cs[] = {c2, c3, c4, c5, c6, c7, c8, c9, c10};
  const char* names[] = {"c2", "c3", "c4", "c5", "c6", "c7", "c8", "c9", "c10"};
  for (int i = 0; i < 9; ++i) detail::check_node(cs[i], names[i]);
  detail::require(!(c3 == c4), "nodes c3 and c4 must be distinct");
  detail::require(!(c5 == c6) && !(c5 == c7) && !(c6 == c7),
                  "nodes c5, c6, c7 must be distinct");
  detail::require(!(c8 == c9) && !(c8 == c10) && !(c9 == c10),
                  "nodes c8, c9, c10 must be distinct");
  const Rational residual = (c8 + c9 + c10) / Rational(4) -
                            (c8 * c9 + c8 * c10 + c9 * c10) / Rational(3) +
                            c8 * c9 * c10 / Rational(2) - Rational(1, 5);
  if (!(residual.is_zero()) && std::abs(residual.value()) > 1e-12) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.6e", residual.value());
    throw ConstructionError(std::string("final-node constraint violated, residual = ") + buf);
  }

  ExpRKMethod m = detail::skeleton("expRK5s10", 5, 10);
  m.nodes[2] = c2;
  m.nodes[3] = c3;
  m.nodes[4] = c4;
  m.nodes[5] = c5;
  m.nodes[6] = c6;
  m.nodes[7] = c7;
  m.nodes[8] = c8;
  m.nodes[9] = c9;
  m.nodes[10] = c10;
  m.a[3][2] = PhiPolynomial::term(2, c3, c3 * c3 / c2);
  m.a[4][2] = PhiPolynomial::term(2, c4, c4 * c4 / c2);
  for (int i : {5, 6, 7}) {
    const Rational ci = m.nodes[static_cast<std::size_t>(i)];
    auto& r3 = m.a[static_cast<std::size_t>(i)][3];
    auto& r4 = m.a[static_cast<std::size_t>(i)][4];
    r3.add_term(2, ci, ci * ci * c4 / (c3 * (c4 - c3)));
    r3.add_term(3, ci, Rational(2) * ci.pow(3) / (c3 * (c3 - c4)));
    r4.add_term(2, ci, ci * ci * c3 / (c4 * (c3 - c4)));
    r4.add_term(3, ci, Rational(-2) * ci.pow(3) / (c4 * (c3 - c4)));
  }
  // Second-kind Lagrange weights over a triple of distinct nodes.
  const auto lagrange3 = [](const Rational& ci, const Rational& ck, const Rational& cl) {
    const Rational d = ci * (ci - ck) * (ci - cl);
    return std::array<Rational, 3>{ck * cl / d, Rational(2) * (ck + cl) / d, Rational(6) / d};
  };
  for (int i : {8, 9, 10}) {
    const Rational ci = m.nodes[static_cast<std::size_t>(i)];
    for (int j : {5, 6, 7}) {
      int k = 0, l = 0;
      for (int o : {5, 6, 7})
        if (o != j) (k == 0 ? k : l) = o;
      const auto abc = lagrange3(m.nodes[static_cast<std::size_t>(j)],
                                 m.nodes[static_cast<std::size_t>(k)],
                                 m.nodes[static_cast<std::size_t>(l)]);
      auto& e = m.a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      e.add_term(2, ci, ci.pow(2) * abc[0]);
      e.add_term(3, ci, -(ci.pow(3) * abc[1]));
      e.add_term(4, ci, ci.pow(4) * abc[2]);
    }
  }
  for (int i : {8, 9, 10}) {
    int k = 0, l = 0;
    for (int o : {8, 9, 10})
      if (o != i) (k == 0 ? k : l) = o;
    const auto abc = lagrange3(m.nodes[static_cast<std::size_t>(i)],
                               m.nodes[static_cast<std::size_t>(k)],
                               m.nodes[static_cast<std::size_t>(l)]);
    auto& e = m.b[static_cast<std::size_t>(i)];
    e.add_term(2, Rational(1), abc[0]);
    e.add_term(3, Rational(1), -abc[1]);
    e.add_term(4, Rational(1), abc[2]);
  }

  const auto sorted_group = [&](std::vector<int> idx) {
    std::vector<BatchTarget> g;
    for (int i : idx) g.push_back({i, m.nodes[static_cast<std::size_t>(i)]});
    std::sort(g.begin(), g.end(),
              [](const BatchTarget& x, const BatchTarget& y) { return x.rho < y.rho; });
    return g;
  };
  derive_plan(m, {{{2, c2}},
                  sorted_group({3, 4}),
                  sorted_group({5, 6, 7}),
                  sorted_group({8, 9, 10}),
                  {{0, Rational(1)}}});
  for (int c = 1; c <= 16; ++c) m.claims[c] = ConditionStatus::strong;
  m.claims[8] = ConditionStatus::weak_at_zero;
  return m;
}

// Stable enumeration of tableau terms: a-rows by (i, j, term position), then
// the b-row. Used to address individual coefficients for perturbation.
inline int term_count(const ExpRKMethod& m) {
  int n = 0;
  for (int i = 2; i <= m.stages; ++i)
    for (int j = 2; j < i; ++j)
      n += static_cast<int>(
          m.a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].terms().size());
  for (int i = 2; i <= m.stages; ++i)
    n += static_cast<int>(m.b[static_cast<std::size_t>(i)].terms().size());
  return n;
}

// Multiplies one tableau coefficient by `factor` and drops the now-stale
// batch plan (weight consistency across a batch generally breaks).
inline void perturb_term(ExpRKMethod& m, int index, const Rational& factor = Rational(101, 100)) {
  if (index < 0 || index >= term_count(m)) throw ParameterError("tableau term index out of range");
  m.plan.clear();
  for (int i = 2; i <= m.stages; ++i)
    for (int j = 2; j < i; ++j) {
      auto& e = m.a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      const int k = static_cast<int>(e.terms().size());
      if (index < k) {
        e.scale_term(index, factor);
        return;
      }
      index -= k;
    }
  for (int i = 2; i <= m.stages; ++i) {
    auto& e = m.b[static_cast<std::size_t>(i)];
    const int k = static_cast<int>(e.terms().size());
    if (index < k) {
      e.scale_term(index, factor);
      return;
    }
    index -= k;
  }
}

inline ExpRKMethod build_legacy(const std::string& name) {
  if (name == "expRK2s2") return build_expRK2s2();
  if (name == "expRK3s3") return build_expRK3s3();
  if (name == "expRK4s5") return build_expRK4s5();
  if (name == "expRK5s8") return build_expRK5s8();
  throw LookupError("unknown legacy method: " + name);
}

inline std::vector<std::string> method_names() {
  return {"expRK2s2", "expRK3s3", "expRK4s5", "expRK5s8", "expRK4s6", "expRK5s10"};
}

inline ExpRKMethod method_by_name(const std::string& name) {
  if (name == "expRK4s6") return build_expRK4s6();
  if (name == "expRK5s10") return build_expRK5s10();
  if (name == "expRK4s6-corrupted") {
    ExpRKMethod m = build_expRK4s6();
    m.name = "expRK4s6-corrupted";
    m.b[5].scale_term(0, Rational(101, 100));
    rebuild_plan(m);
    return m;
  }
  return build_legacy(name);
}

inline std::string tableau_text(const ExpRKMethod& m) {
  std::string out = m.name + " (order " + std::to_string(m.order) + ", " +
                    std::to_string(m.stages) + " stages, " + std::to_string(m.plan.size()) +
                    " evaluations per step)\n";
  out += "nodes:";
  for (int i = 2; i <= m.stages; ++i)
    out += " c" + std::to_string(i) + "=" + m.nodes[static_cast<std::size_t>(i)].str();
  out += "\n";
  for (int i = 2; i <= m.stages; ++i)
    for (int j = 2; j < i; ++j) {
      const auto& e = m.a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (!e.empty())
        out += "  a[" + std::to_string(i) + "][" + std::to_string(j) + "] = " + e.str() + "\n";
    }
  for (int i = 2; i <= m.stages; ++i)
    if (!m.b[static_cast<std::size_t>(i)].empty())
      out += "  b[" + std::to_string(i) + "]    = " + m.b[static_cast<std::size_t>(i)].str() + "\n";
  return out;
}

}  // namespace exprk::schemes
