#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "exprk/matfun.hpp"
#include "exprk/schemes.hpp"

namespace exprk::orderconds {

using matfun::DenseMatrix;
using schemes::ConditionStatus;
using schemes::ExpRKMethod;
using schemes::PhiPolynomial;

// Random sample for one verification pass. Z drives the method coefficients;
// J, K, L sit between factors; B is a bilinear form probed on the fixed pair
// (x, y). Entries are iid uniform on [-1, 1]; Z is rescaled to Frobenius norm
// 3/2 and J, K, L to norm 1, which bounds every spectral radius by 2.
struct ConditionProbe {
  DenseMatrix<double> z, j, k, l;
  std::vector<double> b;  // d*d*d tensor, index [m*d*d + a*d + c]
  std::vector<double> x, y;
  std::uint64_t seed = 0;
};

inline ConditionProbe make_probe(std::uint64_t seed, std::size_t d = 6) {
  if (d < 2) throw ParameterError("probe dimension must be >= 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const auto matrix = [&](double fro) {
    DenseMatrix<double> m(d, d);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) m(r, c) = dist(rng);
    m *= fro / m.norm_fro();
    return m;
  };
  ConditionProbe p;
  p.seed = seed;
  p.z = matrix(1.5);
  p.j = matrix(1.0);
  p.k = matrix(1.0);
  p.l = matrix(1.0);
  p.b.resize(d * d * d);
  for (auto& v : p.b) v = dist(rng);
  p.x.resize(d);
  p.y.resize(d);
  for (auto& v : p.x) v = dist(rng);
  for (auto& v : p.y) v = dist(rng);
  return p;
}

inline std::vector<ConditionProbe> default_probes(std::size_t count = 5, std::size_t d = 6,
                                                  std::uint64_t seed = 20240811) {
  std::vector<ConditionProbe> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_probe(seed + i, d));
  return out;
}

namespace detail {

// Matrix value of a quantity together with the pre-cancellation magnitude of
// the sum that produced it. Conditions are judged relative to that magnitude,
// so a value that vanishes through exact cancellation still reads as zero.
struct Valued {
  DenseMatrix<double> m;
  double mag = 0.0;
};

class ProbeContext {
 public:
  ProbeContext(const ExpRKMethod& method, const DenseMatrix<double>& z)
      : method_(method), z_(z), d_(z.rows()) {
    if (!z.is_square()) throw DimensionError("probe matrix must be square");
    const int s = method.stages;
    bz_.resize(static_cast<std::size_t>(s) + 1);
    bnorm_.assign(static_cast<std::size_t>(s) + 1, 0.0);
    b0_.assign(static_cast<std::size_t>(s) + 1, 0.0);
    az_.assign(static_cast<std::size_t>(s) + 1,
               std::vector<DenseMatrix<double>>(static_cast<std::size_t>(s) + 1));
    anorm_.assign(static_cast<std::size_t>(s) + 1,
                  std::vector<double>(static_cast<std::size_t>(s) + 1, 0.0));
    for (int i = 2; i <= s; ++i) {
      const auto& bi = method.b[static_cast<std::size_t>(i)];
      bz_[static_cast<std::size_t>(i)] = eval(bi);
      bnorm_[static_cast<std::size_t>(i)] = bz_[static_cast<std::size_t>(i)].norm_fro();
      b0_[static_cast<std::size_t>(i)] = bi.eval_zero().value();
      for (int j = 2; j < i; ++j) {
        const auto& aij = method.a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        az_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = eval(aij);
        anorm_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            az_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].norm_fro();
      }
    }
    psi_.assign(6, Valued{});
    for (int j = 2; j <= 5; ++j) psi_[static_cast<std::size_t>(j)] = build_psi(j);
    psi_stage_.assign(5, std::vector<Valued>(static_cast<std::size_t>(s) + 1));
    for (int j = 2; j <= 4; ++j)
      for (int i = 2; i <= s; ++i)
        psi_stage_[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = build_psi_stage(j, i);
  }

  std::size_t dim() const { return d_; }
  int stages() const { return method_.stages; }
  double node(int i) const { return method_.nodes[static_cast<std::size_t>(i)].value(); }

  const Valued& psi(int j) const { return psi_[static_cast<std::size_t>(j)]; }
  const Valued& psi_stage(int j, int i) const {
    return psi_stage_[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
  }
  const DenseMatrix<double>& a_at(int i, int j) const {
    return az_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  double a_norm(int i, int j) const {
    return anorm_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  bool a_empty(int i, int j) const {
    return method_.a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].empty();
  }

  // Left factor b_i, either as the full matrix b_i(Z) or, in the weakened
  // reading, as the scalar b_i(0).
  DenseMatrix<double> apply_b(int i, const DenseMatrix<double>& rhs, bool weakened) const {
    if (!weakened) return matfun::matmul(bz_[static_cast<std::size_t>(i)], rhs);
    DenseMatrix<double> out = rhs;
    out *= b0_[static_cast<std::size_t>(i)];
    return out;
  }
  std::vector<double> apply_b(int i, const std::vector<double>& rhs, bool weakened) const {
    if (!weakened)
      return matfun::matvec(bz_[static_cast<std::size_t>(i)], std::span<const double>(rhs));
    std::vector<double> out = rhs;
    for (auto& v : out) v *= b0_[static_cast<std::size_t>(i)];
    return out;
  }
  double b_norm(int i, bool weakened) const {
    if (!weakened) return bnorm_[static_cast<std::size_t>(i)];
    return std::abs(b0_[static_cast<std::size_t>(i)]) * std::sqrt(static_cast<double>(d_));
  }

 private:
  DenseMatrix<double> eval(const PhiPolynomial& p) {
    DenseMatrix<double> out(d_, d_);
    for (const auto& t : p.terms()) {
      const auto& st = stack(t.scale);
      DenseMatrix<double> term = st[static_cast<std::size_t>(t.order)];
      term *= t.coeff.value();
      out += term;
    }
    return out;
  }

  const matfun::PhiStack<double>& stack(const Rational& scale) {
    const auto key = std::make_pair(scale.num(), scale.den());
    auto it = stacks_.find(key);
    if (it != stacks_.end()) return it->second;
    DenseMatrix<double> sz = z_;
    sz *= scale.value();
    return stacks_.emplace(key, matfun::phi_stack(sz, 5)).first->second;
  }

  Valued build_psi(int j) {
    Valued v;
    const auto& phi = stack(Rational(1))[static_cast<std::size_t>(j)];
    v.m = phi;
    v.m *= -1.0;
    v.mag = phi.norm_fro();
    double fact = 1.0;
    for (int t = 2; t < j; ++t) fact *= t;  // (j-1)!
    for (int i = 2; i <= method_.stages; ++i) {
      const double w = std::pow(node(i), j - 1) / fact;
      if (w == 0.0) continue;
      DenseMatrix<double> term = bz_[static_cast<std::size_t>(i)];
      term *= w;
      v.m += term;
      v.mag += std::abs(w) * bnorm_[static_cast<std::size_t>(i)];
    }
    return v;
  }

  Valued build_psi_stage(int j, int i) {
    Valued v;
    const Rational ci = method_.nodes[static_cast<std::size_t>(i)];
    const auto& phi = stack(ci)[static_cast<std::size_t>(j)];
    const double lead = std::pow(ci.value(), j);
    v.m = phi;
    v.m *= -lead;
    v.mag = lead * phi.norm_fro();
    double fact = 1.0;
    for (int t = 2; t < j; ++t) fact *= t;
    for (int k = 2; k < i; ++k) {
      if (a_empty(i, k)) continue;
      const double w = std::pow(node(k), j - 1) / fact;
      DenseMatrix<double> term = az_[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      term *= w;
      v.m += term;
      v.mag += std::abs(w) * anorm_[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    return v;
  }

  const ExpRKMethod& method_;
  DenseMatrix<double> z_;
  std::size_t d_;
  std::map<std::pair<std::int64_t, std::int64_t>, matfun::PhiStack<double>> stacks_;
  std::vector<DenseMatrix<double>> bz_;
  std::vector<double> bnorm_;
  std::vector<double> b0_;
  std::vector<std::vector<DenseMatrix<double>>> az_;
  std::vector<std::vector<double>> anorm_;
  std::vector<Valued> psi_;                    // psi_[j], j = 2..5
  std::vector<std::vector<Valued>> psi_stage_; // psi_stage_[j][i], j = 2..4
};

}  // namespace detail

inline int condition_order(int index) {
  if (index == 1) return 2;
  if (index <= 3) return 3;
  if (index <= 7) return 4;
  if (index <= 16) return 5;
  throw ParameterError("condition index must lie in [1, 16]");
}

// True for the pure psi_p(Z) = 0 conditions, whose weakened reading is the
// scalar identity psi_p(0) = 0; the rest weaken by substituting b_i(0).
inline bool condition_is_psi_type(int index) {
  return index == 1 || index == 2 || index == 4 || index == 8;
}

inline DenseMatrix<double> psi(const ExpRKMethod& m, int j, const DenseMatrix<double>& z) {
  if (j < 2 || j > 5) throw ParameterError("psi order must lie in [2, 5]");
  return detail::ProbeContext(m, z).psi(j).m;
}

inline DenseMatrix<double> psi_stage(const ExpRKMethod& m, int j, int i,
                                     const DenseMatrix<double>& z) {
  if (j < 2 || j > 4) throw ParameterError("stage psi order must lie in [2, 4]");
  if (i < 2 || i > m.stages) throw ParameterError("stage index out of range");
  return detail::ProbeContext(m, z).psi_stage(j, i).m;
}

// Exact value of psi_p at Z = 0 (rational, since nodes and weights are).
inline Rational psi_zero(const ExpRKMethod& m, int j) {
  Rational sum(0);
  for (int i = 2; i <= m.stages; ++i)
    sum = sum + m.b[static_cast<std::size_t>(i)].eval_zero() *
                    m.nodes[static_cast<std::size_t>(i)].pow(j - 1) / Rational::factorial(j - 1);
  return sum - Rational(1) / Rational::factorial(j);
}

struct ResidualSample {
  double residual = 0.0;
  double scale = 0.0;
};

inline void validate_probe(const ConditionProbe& p) {
  const std::size_t d = p.z.rows();
  if (!p.z.is_square() || p.j.rows() != d || !p.j.is_square() || p.k.rows() != d ||
      !p.k.is_square() || p.l.rows() != d || !p.l.is_square() || p.b.size() != d * d * d ||
      p.x.size() != d || p.y.size() != d)
    throw DimensionError("probe matrices must share one square dimension");
}

namespace detail {

// Left-hand side of one Table row at one probe, with the magnitude a
// cancellation-free evaluation would have had. `weakened` substitutes b_i(0)
// for b_i(Z).
inline ResidualSample eval_condition(const ProbeContext& ctx, int index, const ConditionProbe& p,
                                     bool weakened) {
  if (index < 1 || index > 16) throw ParameterError("condition index must lie in [1, 16]");
  const std::size_t d = p.z.rows();
  const int s = ctx.stages();
  const double jn = p.j.norm_fro(), kn = p.k.norm_fro(), ln = p.l.norm_fro();
  ResidualSample out;

  const auto psi_condition = [&](int j) {
    out.residual = ctx.psi(j).m.norm_fro();
    out.scale = ctx.psi(j).mag;
  };
  // sum_i w_i * b_i * M * psi_{j,i} with a per-stage scalar weight w_i
  const auto single_sum = [&](int j, const DenseMatrix<double>& mid, double midn,
                              auto stage_weight) {
    DenseMatrix<double> total(d, d);
    for (int i = 2; i <= s; ++i) {
      const double w = stage_weight(i);
      if (w == 0.0) continue;
      const auto& ps = ctx.psi_stage(j, i);
      DenseMatrix<double> term = ctx.apply_b(i, matfun::matmul(mid, ps.m), weakened);
      term *= w;
      total += term;
      out.scale += std::abs(w) * ctx.b_norm(i, weakened) * midn * ps.mag;
    }
    out.residual = total.norm_fro();
  };

  switch (index) {
    case 1: psi_condition(2); break;
    case 2: psi_condition(3); break;
    case 4: psi_condition(4); break;
    case 8: psi_condition(5); break;
    case 3: single_sum(2, p.j, jn, [](int) { return 1.0; }); break;
    case 5: single_sum(3, p.j, jn, [](int) { return 1.0; }); break;
    case 9: single_sum(4, p.j, jn, [](int) { return 1.0; }); break;
    case 7: single_sum(2, p.k, kn, [&](int i) { return ctx.node(i); }); break;
    case 13: single_sum(3, p.k, kn, [&](int i) { return ctx.node(i); }); break;
    case 16: single_sum(2, p.l, ln, [&](int i) { return ctx.node(i) * ctx.node(i); }); break;
    case 6:
    case 10: {
      const int j = index == 6 ? 2 : 3;
      DenseMatrix<double> total(d, d);
      for (int i = 2; i <= s; ++i) {
        DenseMatrix<double> inner(d, d);
        double inner_mag = 0.0;
        for (int jj = 2; jj < i; ++jj) {
          if (ctx.a_empty(i, jj)) continue;
          const auto& ps = ctx.psi_stage(j, jj);
          inner += matfun::matmul(ctx.a_at(i, jj), matfun::matmul(p.j, ps.m));
          inner_mag += ctx.a_norm(i, jj) * jn * ps.mag;
        }
        if (inner_mag == 0.0) continue;
        total += ctx.apply_b(i, matfun::matmul(p.j, inner), weakened);
        out.scale += ctx.b_norm(i, weakened) * jn * inner_mag;
      }
      out.residual = total.norm_fro();
      break;
    }
    case 11: {
      DenseMatrix<double> total(d, d);
      for (int i = 2; i <= s; ++i) {
        DenseMatrix<double> inner(d, d);
        double inner_mag = 0.0;
        for (int jj = 2; jj < i; ++jj) {
          if (ctx.a_empty(i, jj)) continue;
          DenseMatrix<double> inner2(d, d);
          double inner2_mag = 0.0;
          for (int kk = 2; kk < jj; ++kk) {
            if (ctx.a_empty(jj, kk)) continue;
            const auto& ps = ctx.psi_stage(2, kk);
            inner2 += matfun::matmul(ctx.a_at(jj, kk), matfun::matmul(p.j, ps.m));
            inner2_mag += ctx.a_norm(jj, kk) * jn * ps.mag;
          }
          if (inner2_mag == 0.0) continue;
          inner += matfun::matmul(ctx.a_at(i, jj), matfun::matmul(p.j, inner2));
          inner_mag += ctx.a_norm(i, jj) * jn * inner2_mag;
        }
        if (inner_mag == 0.0) continue;
        total += ctx.apply_b(i, matfun::matmul(p.j, inner), weakened);
        out.scale += ctx.b_norm(i, weakened) * jn * inner_mag;
      }
      out.residual = total.norm_fro();
      break;
    }
    case 12:
    case 14: {
      // 12: b_i J sum_j a_ij c_j K psi_{2,j};  14: b_i c_i K sum_j a_ij J psi_{2,j}
      const bool twelve = index == 12;
      DenseMatrix<double> total(d, d);
      for (int i = 2; i <= s; ++i) {
        DenseMatrix<double> inner(d, d);
        double inner_mag = 0.0;
        for (int jj = 2; jj < i; ++jj) {
          if (ctx.a_empty(i, jj)) continue;
          const auto& ps = ctx.psi_stage(2, jj);
          const double w = twelve ? ctx.node(jj) : 1.0;
          if (w == 0.0) continue;
          DenseMatrix<double> term =
              matfun::matmul(ctx.a_at(i, jj), matfun::matmul(twelve ? p.k : p.j, ps.m));
          term *= w;
          inner += term;
          inner_mag += std::abs(w) * ctx.a_norm(i, jj) * (twelve ? kn : jn) * ps.mag;
        }
        if (inner_mag == 0.0) continue;
        const double w = twelve ? 1.0 : ctx.node(i);
        if (w == 0.0) continue;
        DenseMatrix<double> term =
            ctx.apply_b(i, matfun::matmul(twelve ? p.j : p.k, inner), weakened);
        term *= w;
        total += term;
        out.scale += std::abs(w) * ctx.b_norm(i, weakened) * (twelve ? jn : kn) * inner_mag;
      }
      out.residual = total.norm_fro();
      break;
    }
    case 15: {
      double bt_norm = 0.0;
      for (double v : p.b) bt_norm += v * v;
      bt_norm = std::sqrt(bt_norm);
      const double xn = kernels::nrm2(std::span<const double>(p.x));
      const double yn = kernels::nrm2(std::span<const double>(p.y));
      std::vector<double> total(d, 0.0);
      for (int i = 2; i <= s; ++i) {
        const auto& ps = ctx.psi_stage(2, i);
        const std::vector<double> u = matfun::matvec(ps.m, std::span<const double>(p.x));
        const std::vector<double> v = matfun::matvec(ps.m, std::span<const double>(p.y));
        std::vector<double> w(d, 0.0);
        for (std::size_t mm = 0; mm < d; ++mm)
          for (std::size_t aa = 0; aa < d; ++aa)
            for (std::size_t cc = 0; cc < d; ++cc)
              w[mm] += p.b[(mm * d + aa) * d + cc] * u[aa] * v[cc];
        const std::vector<double> term = ctx.apply_b(i, w, weakened);
        for (std::size_t mm = 0; mm < d; ++mm) total[mm] += term[mm];
        out.scale += ctx.b_norm(i, weakened) * bt_norm * (ps.mag * xn) * (ps.mag * yn);
      }
      out.residual = kernels::nrm2(std::span<const double>(total));
      break;
    }
    default:
      throw ParameterError("condition index must lie in [1, 16]");
  }
  return out;
}

}  // namespace detail

inline ResidualSample condition_sample(const ExpRKMethod& m, int index, const ConditionProbe& p,
                                       bool weakened = false) {
  if (index < 1 || index > 16) throw ParameterError("condition index must lie in [1, 16]");
  validate_probe(p);
  detail::ProbeContext ctx(m, p.z);
  return detail::eval_condition(ctx, index, p, weakened);
}

struct ConditionResult {
  int index = 0;
  int order = 0;
  bool skipped = false;
  ConditionStatus status = ConditionStatus::fail;
  double strong_residual = 0.0;  // max over probes, relative to the term magnitude
  double weak_residual = 0.0;    // residual of the weakened form actually tried
};

struct OrderConditionReport {
  std::string method;
  double tolerance = 0.0;
  std::vector<ConditionResult> rows;

  const ConditionResult& row(int index) const {
    for (const auto& r : rows)
      if (r.index == index) return r;
    throw LookupError("condition index not present in report");
  }
};

inline OrderConditionReport check_conditions(const ExpRKMethod& m,
                                             const std::vector<ConditionProbe>& probes,
                                             double tol = 1e-9, int max_order = 5) {
  if (probes.size() < 3) throw ParameterError("condition checking needs at least 3 probes");
  if (!(tol > 0.0)) throw ParameterError("tolerance must be positive");
  for (const auto& p : probes) {
    validate_probe(p);
    if (p.z.rows() != probes.front().z.rows())
      throw DimensionError("all probes must share one dimension");
  }
  std::vector<detail::ProbeContext> contexts;
  contexts.reserve(probes.size());
  for (const auto& p : probes) contexts.emplace_back(m, p.z);

  OrderConditionReport report;
  report.method = m.name;
  report.tolerance = tol;
  for (int index = 1; index <= 16; ++index) {
    ConditionResult row;
    row.index = index;
    row.order = condition_order(index);
    if (row.order > max_order) {
      row.skipped = true;
      report.rows.push_back(row);
      continue;
    }
    double rel = 0.0;
    for (std::size_t pi = 0; pi < probes.size(); ++pi) {
      const auto smp = detail::eval_condition(contexts[pi], index, probes[pi], false);
      rel = std::max(rel, smp.residual / std::max(smp.scale, 1e-300));
    }
    row.strong_residual = rel;
    if (rel <= tol) {
      row.status = ConditionStatus::strong;
      report.rows.push_back(row);
      continue;
    }
    if (condition_is_psi_type(index)) {
      const Rational at_zero = psi_zero(m, index == 1 ? 2 : index == 2 ? 3 : index == 4 ? 4 : 5);
      row.weak_residual = std::abs(at_zero.value());
      row.status =
          at_zero.is_zero() ? ConditionStatus::weak_at_zero : ConditionStatus::fail;
    } else {
      double wrel = 0.0;
      for (std::size_t pi = 0; pi < probes.size(); ++pi) {
        const auto smp = detail::eval_condition(contexts[pi], index, probes[pi], true);
        wrel = std::max(wrel, smp.residual / std::max(smp.scale, 1e-300));
      }
      row.weak_residual = wrel;
      row.status = wrel <= tol ? ConditionStatus::weakened_b0 : ConditionStatus::fail;
    }
    report.rows.push_back(row);
  }
  return report;
}

inline bool verify_claims(const ExpRKMethod& m, std::string* details = nullptr,
                          const std::vector<ConditionProbe>* probes = nullptr, double tol = 1e-9) {
  const std::vector<ConditionProbe> own = probes ? std::vector<ConditionProbe>() : default_probes();
  const auto& used = probes ? *probes : own;
  const auto report = check_conditions(m, used, tol);
  bool ok = true;
  std::string text;
  for (const auto& [index, claimed] : m.claims) {
    const auto& row = report.row(index);
    if (row.skipped || row.status != claimed) {
      ok = false;
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "condition %d: claimed %s, observed %s (strong residual %.3e, weak %.3e)\n",
                    index, schemes::condition_status_name(claimed).c_str(),
                    row.skipped ? "skipped" : schemes::condition_status_name(row.status).c_str(),
                    row.strong_residual, row.weak_residual);
      text += buf;
    }
  }
  if (details) *details = text;
  return ok;
}

inline std::string render_report(const OrderConditionReport& report) {
  std::string out = "order conditions for " + report.method + " (tolerance ";
  char tolbuf[32];
  std::snprintf(tolbuf, sizeof(tolbuf), "%.1e", report.tolerance);
  out += tolbuf;
  out += ")\n  no. order form           strong-resid   weak-resid\n";
  for (const auto& r : report.rows) {
    char line[160];
    if (r.skipped) {
      std::snprintf(line, sizeof(line), "  %2d  %d    %-14s %-14s %s\n", r.index, r.order,
                    "skipped", "-", "-");
    } else {
      std::snprintf(line, sizeof(line), "  %2d  %d    %-14s %-14.3e %.3e\n", r.index, r.order,
                    schemes::condition_status_name(r.status).c_str(), r.strong_residual,
                    r.weak_residual);
    }
    out += line;
  }
  return out;
}

}  // namespace exprk::orderconds
