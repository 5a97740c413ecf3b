#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "exprk/errors.hpp"
#include "exprk/kernels.hpp"
#include "exprk/matfun.hpp"
#include "exprk/scalarphi.hpp"

// Iterative engine for linear combinations sum_k phi_k(rho*M) rho^k v_k,
// evaluated for several scalings rho in one pass.  The combination at scaling
// tau solves the linear ODE  w'(tau) = M w + sum_{k>=1} tau^{k-1}/(k-1)! v_k,
// which is advanced by adaptive substeps; each substep reduces to a single
// phi_q product approximated in a Krylov subspace built with incomplete
// orthogonalization.  Substeps land exactly on every requested scaling.

namespace exprk::krylov {

using matfun::DenseMatrix;

template <class T>
struct LinearOperator {
  std::size_t n = 0;
  std::function<void(std::span<const T>, std::span<T>)> apply_fn;
  std::vector<T> diagonal;  // populated iff structure is diagonal
  bool is_diagonal = false;

  void apply(std::span<const T> x, std::span<T> y) const {
    if (x.size() != n || y.size() != n)
      throw DimensionError("operator applied to vector of wrong length");
    if (!apply_fn) throw ContractError("operator has no action");
    apply_fn(x, y);
  }
};

template <class T>
LinearOperator<T> make_dense_operator(const DenseMatrix<T>& a) {
  if (!a.is_square()) throw DimensionError("operator matrix must be square");
  LinearOperator<T> op;
  op.n = a.rows();
  op.apply_fn = [m = a](std::span<const T> x, std::span<T> y) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      T s{};
      auto ri = m.row(i);
      for (std::size_t j = 0; j < m.cols(); ++j) s += ri[j] * x[j];
      y[i] = s;
    }
  };
  return op;
}

template <class T>
LinearOperator<T> make_diagonal_operator(std::vector<T> diag) {
  LinearOperator<T> op;
  op.n = diag.size();
  op.is_diagonal = true;
  op.diagonal = std::move(diag);
  op.apply_fn = [d = op.diagonal](std::span<const T> x, std::span<T> y) {
    for (std::size_t i = 0; i < d.size(); ++i) y[i] = d[i] * x[i];
  };
  return op;
}

// View of base scaled by a real factor.  The base operator must outlive the
// returned object.
template <class T>
LinearOperator<T> scaled_operator(const LinearOperator<T>* base, double factor) {
  LinearOperator<T> op;
  op.n = base->n;
  op.is_diagonal = base->is_diagonal;
  if (base->is_diagonal) {
    op.diagonal = base->diagonal;
    for (T& d : op.diagonal) d *= T(factor);
    op.apply_fn = [d = op.diagonal](std::span<const T> x, std::span<T> y) {
      for (std::size_t i = 0; i < d.size(); ++i) y[i] = d[i] * x[i];
    };
  } else {
    op.apply_fn = [base, factor](std::span<const T> x, std::span<T> y) {
      base->apply(x, y);
      kernels::scal(T(factor), y);
    };
  }
  return op;
}

// ------------------------------------------------------------
// Arnoldi with incomplete orthogonalization
// ------------------------------------------------------------

template <class T>
struct ArnoldiResult {
  std::vector<std::vector<T>> basis;  // dim (+1 residual direction if no breakdown)
  DenseMatrix<T> h;                   // (dim+1) x dim; last row zero on breakdown
  std::size_t dim = 0;
  bool breakdown = false;
};

// Incremental process so a controller can extend the same subspace across
// retries.  Column j orthogonalizes M*v_j against the last min(iom, j+1)
// basis vectors only; entries above that band are never written.
template <class T>
class ArnoldiProcess {
 public:
  ArnoldiProcess(const LinearOperator<T>& op, std::vector<T> seed, double seed_norm,
                 int max_dim, int iom)
      : op_(op), max_dim_(max_dim), iom_(iom), h_(max_dim + 1, std::max(max_dim, 1)) {
    kernels::scal(T(1.0 / seed_norm), std::span<T>(seed));
    basis_.push_back(std::move(seed));
  }

  // Grow the factorization to m columns (or fewer on breakdown).
  void extend(int m) {
    m = std::min(m, max_dim_);
    while (dim_ < m && !breakdown_) {
      const int j = dim_;
      std::vector<T> w;
      if (mv_cached_) {
        w = std::move(mv_cache_);
        mv_cached_ = false;
      } else {
        w.resize(op_.n);
        op_.apply(basis_[static_cast<std::size_t>(j)], w);
        ++matvecs_;
      }
      norm_scale_ = std::max(norm_scale_, kernels::nrm2(std::span<const T>(w)));
      const int lo = std::max(0, j - iom_ + 1);
      for (int i = lo; i <= j; ++i) {
        const T hij = kernels::inner(std::span<const T>(basis_[static_cast<std::size_t>(i)]),
                                     std::span<const T>(w));
        h_(i, j) = hij;
        kernels::axpy(-hij, std::span<const T>(basis_[static_cast<std::size_t>(i)]),
                      std::span<T>(w));
      }
      const double hn = kernels::nrm2(std::span<const T>(w));
      if (hn <= 1e-13 * std::max(norm_scale_, 1e-300)) {
        breakdown_ = true;
        ++dim_;
        break;
      }
      h_(j + 1, j) = T(hn);
      kernels::scal(T(1.0 / hn), std::span<T>(w));
      basis_.push_back(std::move(w));
      ++dim_;
    }
  }

  // ||M v_dim|| for the first unused basis direction; the product is cached
  // and consumed by the next extension, so this costs one application once.
  double residual_operator_norm() {
    if (breakdown_) return 0.0;
    if (!mv_cached_) {
      mv_cache_.resize(op_.n);
      op_.apply(basis_[static_cast<std::size_t>(dim_)], mv_cache_);
      mv_cached_ = true;
      ++matvecs_;
      avnorm_ = kernels::nrm2(std::span<const T>(mv_cache_));
    }
    return avnorm_;
  }

  int dim() const { return dim_; }
  bool breakdown() const { return breakdown_; }
  // |h_{k+1,k}| for the current dimension (0 after breakdown).
  double tail_norm() const {
    return breakdown_ ? 0.0 : matfun::abs_val(h_(dim_, dim_ - 1));
  }
  const DenseMatrix<T>& h() const { return h_; }
  const std::vector<std::vector<T>>& basis() const { return basis_; }
  long long matvecs() const { return matvecs_; }
  int max_dim() const { return max_dim_; }

 private:
  const LinearOperator<T>& op_;
  int max_dim_;
  int iom_;
  DenseMatrix<T> h_;
  std::vector<std::vector<T>> basis_;
  std::vector<T> mv_cache_;
  bool mv_cached_ = false;
  double avnorm_ = 0.0;
  double norm_scale_ = 0.0;
  int dim_ = 0;
  bool breakdown_ = false;
  long long matvecs_ = 0;
};

template <class T>
ArnoldiResult<T> arnoldi_iom(const LinearOperator<T>& op, std::span<const T> seed,
                             int max_dim, int iom_length) {
  if (op.n == 0 || seed.size() != op.n)
    throw DimensionError("arnoldi seed length must match operator dimension");
  if (max_dim < 1 || static_cast<std::size_t>(max_dim) > op.n)
    throw ParameterError("arnoldi dimension must lie in [1, n]");
  if (iom_length < 1) throw ParameterError("orthogonalization window must be >= 1");
  for (const T& v : seed)
    if (!matfun::finite_val(v)) throw InvalidInputError("arnoldi seed has non-finite entries");
  const double beta = kernels::nrm2(seed);
  if (beta == 0.0) throw InvalidInputError("arnoldi seed is the zero vector");

  ArnoldiProcess<T> proc(op, std::vector<T>(seed.begin(), seed.end()), beta, max_dim,
                         iom_length);
  proc.extend(max_dim);

  ArnoldiResult<T> r;
  r.dim = static_cast<std::size_t>(proc.dim());
  r.breakdown = proc.breakdown();
  r.basis = proc.basis();
  r.h = DenseMatrix<T>(r.dim + 1, r.dim);
  for (std::size_t i = 0; i <= r.dim; ++i)
    for (std::size_t j = 0; j < r.dim; ++j) r.h(i, j) = proc.h()(i, j);
  return r;
}

// ------------------------------------------------------------
// adaptive combination evaluation
// ------------------------------------------------------------

struct KrylovStats {
  long long operator_applications = 0;
  long long substeps = 0;
  long long rejections = 0;
  long long krylov_vectors = 0;
  int max_dimension = 0;
  int final_dimension = 0;
  double final_substep = 0.0;
};

template <class T>
struct PhiCombinationTask {
  const LinearOperator<T>* op = nullptr;
  std::vector<double> scalings;            // strictly increasing, in (0, 1]
  std::vector<std::vector<T>> vectors;     // v_0 .. v_q
  double tolerance = 1e-12;
  int initial_krylov_dim = 1;
  int iom_length = 2;

  // controller settings; defaults documented here, not tuned per problem
  int max_krylov_dim = 128;       // subspace cap (also capped by n)
  int max_attempts = 500;         // total accept+reject attempts
  double safety = 0.8;            // error-estimate safety factor
  double initial_substep = 0.0;   // 0 = try the whole interval first
  double min_substep_fraction = 1e-12;
};

template <class T>
struct PhiCombinationResult {
  std::vector<std::vector<T>> outputs;  // one per scaling
  KrylovStats stats;
};

namespace detail {

struct ControllerTrace {
  std::vector<std::string> lines;
  void log(double tau, double dt, int m, double err, double budget, const char* what) {
    if (lines.size() > 64) lines.erase(lines.begin());
    char buf[160];
    std::snprintf(buf, sizeof buf, "tau=%.6e dt=%.6e m=%d err=%.3e budget=%.3e %s", tau,
                  dt, m, err, budget, what);
    lines.emplace_back(buf);
  }
  std::string str() const {
    std::string s = "controller trace (most recent last):";
    for (const auto& l : lines) {
      s += "\n  ";
      s += l;
    }
    return s;
  }
};

}  // namespace detail

template <class T>
void validate_task(const PhiCombinationTask<T>& task) {
  if (!task.op || task.op->n == 0) throw InvalidInputError("task needs an operator");
  if (task.scalings.empty()) throw ParameterError("task needs at least one scaling");
  double prev = 0.0;
  for (double r : task.scalings) {
    if (!(r > prev) || r > 1.0)
      throw ParameterError("scalings must be strictly increasing within (0, 1]");
    prev = r;
  }
  if (task.vectors.empty()) throw InvalidInputError("task needs v_0 (may be zero)");
  if (static_cast<int>(task.vectors.size()) - 1 > matfun::kMaxPhiOrder)
    throw ParameterError("phi order above supported maximum");
  for (const auto& v : task.vectors) {
    if (v.size() != task.op->n) throw DimensionError("task vector length mismatch");
    for (const T& x : v)
      if (!matfun::finite_val(x)) throw InvalidInputError("task vector has non-finite entries");
  }
  if (!(task.tolerance > 0.0)) throw ParameterError("tolerance must be positive");
  if (task.initial_krylov_dim < 1) throw ParameterError("initial dimension must be >= 1");
  if (task.iom_length < 1) throw ParameterError("orthogonalization window must be >= 1");
}

// Exact evaluation when the operator is diagonal: scalar phi stacks per
// entry, fixed evaluation order, no iteration.
template <class T>
PhiCombinationResult<T> diagonal_fast_path(const PhiCombinationTask<T>& task) {
  validate_task(task);
  const LinearOperator<T>& op = *task.op;
  if (!op.is_diagonal || op.diagonal.size() != op.n)
    throw ContractError("diagonal path invoked on a non-diagonal operator");
  const std::size_t n = op.n;
  const int q = static_cast<int>(task.vectors.size()) - 1;

  PhiCombinationResult<T> res;
  res.outputs.assign(task.scalings.size(), std::vector<T>(n, T{}));
  for (std::size_t s = 0; s < task.scalings.size(); ++s) {
    const double rho = task.scalings[s];
    auto& out = res.outputs[s];
    for (std::size_t j = 0; j < n; ++j) {
      const T z = T(rho) * op.diagonal[j];
      const std::vector<T> st = matfun::phi_scalar_stack(z, q);
      T acc{};
      double rk = 1.0;
      for (int k = 0; k <= q; ++k) {
        acc += st[static_cast<std::size_t>(k)] * T(rk) * task.vectors[static_cast<std::size_t>(k)][j];
        rk *= rho;
      }
      out[j] = acc;
    }
  }
  return res;
}

template <class T>
PhiCombinationResult<T> evaluate_combination(const PhiCombinationTask<T>& task) {
  validate_task(task);
  const LinearOperator<T>& op = *task.op;
  const std::size_t n = op.n;

  // drop trailing exactly-zero vectors; they change nothing
  std::vector<std::vector<T>> vecs = task.vectors;
  auto is_zero = [](const std::vector<T>& v) {
    for (const T& x : v)
      if (x != T{}) return false;
    return true;
  };
  while (vecs.size() > 1 && is_zero(vecs.back())) vecs.pop_back();
  const int q = static_cast<int>(vecs.size()) - 1;

  const double tau_end = task.scalings.back();
  const int m_max = static_cast<int>(std::min<std::size_t>(task.max_krylov_dim, n));

  PhiCombinationResult<T> res;
  res.outputs.reserve(task.scalings.size());
  KrylovStats& st = res.stats;

  std::vector<T> w = vecs[0];
  double tau = 0.0;

  double scale_ref = 1e-300;
  for (const auto& v : vecs)
    scale_ref = std::max(scale_ref, kernels::nrm2(std::span<const T>(v)));
  if (scale_ref <= 1e-300) {
    // all-zero task
    for (std::size_t i = 0; i < task.scalings.size(); ++i) res.outputs.push_back(w);
    return res;
  }

  double dt = task.initial_substep > 0.0 ? std::min(task.initial_substep, tau_end) : tau_end;
  int m_hint = std::clamp(task.initial_krylov_dim, 1, m_max);
  int attempts = 0;
  detail::ControllerTrace trace;

  std::vector<std::vector<T>> ladder(static_cast<std::size_t>(q) + 1);
  std::vector<double> inv_fact(static_cast<std::size_t>(q) + 3, 1.0);
  for (std::size_t k = 1; k < inv_fact.size(); ++k)
    inv_fact[k] = inv_fact[k - 1] / static_cast<double>(k);

  for (std::size_t target = 0; target < task.scalings.size(); ++target) {
    const double rho = task.scalings[target];
    while (tau < rho) {
      scale_ref = std::max(scale_ref, kernels::nrm2(std::span<const T>(w)));

      // ladder: w_0 = w, w_j = M w_{j-1} + vtilde_j with
      // vtilde_j = sum_{l=j}^{q} tau^{l-j}/(l-j)! v_l
      ladder[0] = w;
      for (int j = 1; j <= q; ++j) {
        auto& wj = ladder[static_cast<std::size_t>(j)];
        wj.assign(n, T{});
        op.apply(ladder[static_cast<std::size_t>(j - 1)], wj);
        ++st.operator_applications;
        double tp = 1.0;
        for (int l = j; l <= q; ++l) {
          kernels::axpy(T(tp * inv_fact[static_cast<std::size_t>(l - j)]),
                        std::span<const T>(vecs[static_cast<std::size_t>(l)]),
                        std::span<T>(wj));
          tp *= tau;
        }
      }

      const std::vector<T>& seed = ladder[static_cast<std::size_t>(q)];
      const double beta = kernels::nrm2(std::span<const T>(seed));

      bool hit = false;
      auto clamp_dt = [&](double d) {
        if (d >= rho - tau - 1e-14 * tau_end) {
          hit = true;
          return rho - tau;
        }
        hit = false;
        return d;
      };

      if (beta <= 1e-290) {
        // phi_q term vanishes: the substep is the explicit polynomial part
        double d = clamp_dt(dt);
        std::vector<T> y(n, T{});
        double dj = 1.0;
        for (int j = 0; j < q; ++j) {
          kernels::axpy(T(dj * inv_fact[static_cast<std::size_t>(j)]),
                        std::span<const T>(ladder[static_cast<std::size_t>(j)]),
                        std::span<T>(y));
          dj *= d;
        }
        if (q == 0) y = w;
        w = std::move(y);
        tau = hit ? rho : tau + d;
        ++st.substeps;
        continue;
      }

      ArnoldiProcess<T> proc(op, seed, beta, m_max, task.iom_length);
      int m_target = m_hint;
      double err = 0.0, omega = 0.0, d = 0.0;
      const int p_ladder = std::max(q, 1) + 2;  // phi slots: 1 .. q+2

      for (;;) {
        if (++attempts > task.max_attempts)
          throw ConvergenceError("combination evaluation exceeded its attempt budget",
                                 trace.str());
        proc.extend(m_target);
        const int k = proc.dim();
        const double hk1 = proc.tail_norm();
        const double avnorm = proc.breakdown() ? 0.0 : proc.residual_operator_norm();

        d = clamp_dt(dt);

        // small exponential of the (k + p_ladder) augmented matrix
        const int kg = k + p_ladder;
        DenseMatrix<T> g(static_cast<std::size_t>(kg), static_cast<std::size_t>(kg));
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) g(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = T(d) * proc.h()(i, j);
        g(0, static_cast<std::size_t>(k)) = T(d);
        for (int j = 0; j + 1 < p_ladder; ++j)
          g(static_cast<std::size_t>(k + j), static_cast<std::size_t>(k + j + 1)) = T(d);
        DenseMatrix<T> f(1, 1);
        bool exp_failed = false;
        try {
          f = matfun::expm(g);
        } catch (const NumericalError&) {
          exp_failed = true;  // substep too large for this subspace; force a reject
        }

        const double budget = task.tolerance * scale_ref * (d / tau_end);
        if (exp_failed) {
          err = omega = std::numeric_limits<double>::infinity();
        } else if (proc.breakdown()) {
          err = 0.0;
          omega = 0.0;
        } else {
          const std::size_t row = static_cast<std::size_t>(k - 1);
          const double err1 =
              beta * hk1 * matfun::abs_val(f(row, static_cast<std::size_t>(k + q)));
          const double err2 = beta * hk1 * avnorm *
                              matfun::abs_val(f(row, static_cast<std::size_t>(k + q + 1)));
          if (err1 > 10.0 * err2)
            err = err2;
          else if (err1 > err2)
            err = err1 * err2 / (err1 - err2);
          else
            err = err1;
          omega = err / budget;
          if (!std::isfinite(err)) err = omega = std::numeric_limits<double>::infinity();
        }

        if (omega <= 1.0) {
          // accept
          std::vector<T> y(n, T{});
          double dj = 1.0;
          for (int j = 0; j < q; ++j) {
            kernels::axpy(T(dj * inv_fact[static_cast<std::size_t>(j)]),
                          std::span<const T>(ladder[static_cast<std::size_t>(j)]),
                          std::span<T>(y));
            dj *= d;
          }
          const std::size_t col =
              q >= 1 ? static_cast<std::size_t>(k + q - 1) : std::size_t{0};
          for (int i = 0; i < k; ++i)
            kernels::axpy(T(beta) * f(static_cast<std::size_t>(i), col),
                          std::span<const T>(proc.basis()[static_cast<std::size_t>(i)]),
                          std::span<T>(y));
          for (const T& x : y)
            if (!matfun::finite_val(x))
              throw NumericalError("combination evaluation produced non-finite values");

          w = std::move(y);
          tau = hit ? rho : tau + d;
          ++st.substeps;
          st.max_dimension = std::max(st.max_dimension, k);
          st.final_dimension = k;
          st.final_substep = d;
          m_hint = k;
          trace.log(tau, d, k, err, budget, "accept");

          // next substep size
          const int p_est = k + q;
          double factor = task.safety * std::pow(1.0 / std::max(omega, 1e-16),
                                                 1.0 / static_cast<double>(p_est));
          if (omega == 0.0)
            factor = 5.0;
          else if (omega < 0.01)
            factor = std::max(factor, 1.5);
          dt = d * std::clamp(factor, 1.0, 5.0);
          break;
        }

        // reject: grow the subspace or shrink the substep, whichever costs
        // fewer operator applications per unit tau
        ++st.rejections;
        trace.log(tau, d, k, err, budget, "reject");
        const int p_est = k + q;
        const double om = std::min(omega, 1e12);
        double dt_opt =
            d * std::clamp(task.safety * std::pow(1.0 / om, 1.0 / p_est), 0.2,
                           task.safety);
        int m_opt = k + static_cast<int>(std::ceil(std::log2(std::max(om, 2.0))));
        m_opt = std::min({m_opt, std::max(2 * k, k + 8), m_max});
        const double cost_dt = (k + q + 1) / dt_opt;
        const double cost_m = (m_opt + q + 1) / d;
        if (m_opt > k && cost_m <= cost_dt) {
          m_target = m_opt;
        } else if (dt_opt < d) {
          dt = dt_opt;
        } else {
          dt = 0.5 * d;
        }
        if (dt < task.min_substep_fraction * tau_end)
          throw ConvergenceError("combination evaluation substep underflow", trace.str());
      }

      st.krylov_vectors += proc.dim();
      st.operator_applications += proc.matvecs();
    }
    res.outputs.push_back(w);
  }
  return res;
}

}  // namespace exprk::krylov
