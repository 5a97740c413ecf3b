#pragma once

#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "exprk/errors.hpp"
#include "exprk/kernels.hpp"
#include "exprk/krylov.hpp"
#include "exprk/matfun.hpp"
#include "exprk/schemes.hpp"

namespace exprk::schemes {

struct WorkCounters {
  long long engine_calls = 0;
  long long operator_applications = 0;
  long long g_evaluations = 0;
  long long steps = 0;
};

enum class EngineKind { krylov, dense };

struct EngineSettings {
  double tolerance = 1e-12;
  int iom_length = 2;
  int max_krylov_dim = 128;
  // Evaluate each scaling of a batch by its own engine call instead of one
  // joint call. Results must agree with the joint mode to engine tolerance.
  bool split_scalings = false;
  // Carry Krylov dimension / substep size from one call to the next.
  bool warm_start = true;
};

// Evaluates w(rho) = sum_k phi_k(rho * hA) rho^k v_k for a shared vector set
// and several scalings at once.
template <class T>
class PhiEngine {
 public:
  virtual ~PhiEngine() = default;
  virtual std::vector<std::vector<T>> combine(const std::vector<double>& rhos,
                                              const std::vector<std::vector<T>>& vectors) = 0;
  virtual long long calls() const = 0;
  virtual long long operator_applications() const = 0;
};

template <class T>
class KrylovEngine final : public PhiEngine<T> {
 public:
  KrylovEngine(const krylov::LinearOperator<T>* base, double h, const EngineSettings& settings)
      : op_(krylov::scaled_operator(base, h)), settings_(settings) {}

  std::vector<std::vector<T>> combine(const std::vector<double>& rhos,
                                      const std::vector<std::vector<T>>& vectors) override {
    if (op_.is_diagonal) {
      auto task = make_task(rhos, vectors);
      ++calls_;
      return krylov::diagonal_fast_path(task).outputs;
    }
    if (settings_.split_scalings && rhos.size() > 1) {
      // Every split call starts from the hints captured at batch entry, so the
      // outputs do not depend on the order the scalings are evaluated in.
      const int entry_dim = hint_dim_;
      const double entry_substep = hint_substep_;
      std::vector<std::vector<T>> outputs(rhos.size());
      krylov::KrylovStats last_stats;
      for (std::size_t i = 0; i < rhos.size(); ++i) {
        auto task = make_task({rhos[i]}, vectors);
        task.initial_krylov_dim = entry_dim;
        task.initial_substep = entry_substep;
        auto res = krylov::evaluate_combination(task);
        outputs[i] = std::move(res.outputs[0]);
        ops_ += res.stats.operator_applications;
        ++calls_;
        if (i + 1 == rhos.size()) last_stats = res.stats;
      }
      remember(last_stats);
      return outputs;
    }
    auto task = make_task(rhos, vectors);
    task.initial_krylov_dim = hint_dim_;
    task.initial_substep = hint_substep_;
    auto res = krylov::evaluate_combination(task);
    ops_ += res.stats.operator_applications;
    ++calls_;
    remember(res.stats);
    return std::move(res.outputs);
  }

  long long calls() const override { return calls_; }
  long long operator_applications() const override { return ops_; }

 private:
  krylov::PhiCombinationTask<T> make_task(const std::vector<double>& rhos,
                                          const std::vector<std::vector<T>>& vectors) const {
    krylov::PhiCombinationTask<T> task;
    task.op = &op_;
    task.scalings = rhos;
    task.vectors = vectors;
    task.tolerance = settings_.tolerance;
    task.iom_length = settings_.iom_length;
    task.max_krylov_dim = settings_.max_krylov_dim;
    return task;
  }

  void remember(const krylov::KrylovStats& stats) {
    if (!settings_.warm_start) return;
    if (stats.final_dimension > 0) hint_dim_ = stats.final_dimension;
    if (stats.final_substep > 0.0) hint_substep_ = stats.final_substep;
  }

  krylov::LinearOperator<T> op_;
  EngineSettings settings_;
  int hint_dim_ = 1;
  double hint_substep_ = 0.0;
  long long calls_ = 0;
  long long ops_ = 0;
};

// Reference engine: materializes hA once and evaluates combinations through
// dense phi stacks, cached per scaling. Intended for small systems where the
// time-integration error should be isolated from Krylov error.
template <class T>
class DenseEngine final : public PhiEngine<T> {
 public:
  DenseEngine(const krylov::LinearOperator<T>* base, double h) : ha_(base->n, base->n) {
    const std::size_t n = base->n;
    std::vector<T> unit(n, T{}), col(n);
    for (std::size_t j = 0; j < n; ++j) {
      unit[j] = T(1);
      base->apply(unit, col);
      unit[j] = T{};
      ops_ += 1;
      for (std::size_t i = 0; i < n; ++i) ha_(i, j) = T(h) * col[i];
    }
  }

  DenseEngine(const matfun::DenseMatrix<T>& a, double h) : ha_(a) { ha_ *= T(h); }

  std::vector<std::vector<T>> combine(const std::vector<double>& rhos,
                                      const std::vector<std::vector<T>>& vectors) override {
    if (vectors.empty()) throw InvalidInputError("combination needs at least v_0");
    const std::size_t n = ha_.rows();
    const int q = static_cast<int>(vectors.size()) - 1;
    ++calls_;
    std::vector<std::vector<T>> outputs;
    outputs.reserve(rhos.size());
    for (double rho : rhos) {
      if (!(rho > 0.0) || rho > 1.0) throw ParameterError("scaling must lie in (0, 1]");
      auto& entry = cache_[rho];
      if (entry.order < q || entry.stack.phi.empty()) {
        matfun::DenseMatrix<T> scaled = ha_;
        scaled *= T(rho);
        entry.stack = matfun::phi_stack(scaled, q);
        entry.order = q;
      }
      std::vector<T> out(n, T{});
      double rk = 1.0;
      for (int k = 0; k <= q; ++k) {
        if (k > 0) rk *= rho;
        const auto& vk = vectors[static_cast<std::size_t>(k)];
        if (vk.size() != n) throw DimensionError("combination vector length mismatch");
        std::vector<T> pv = matfun::matvec(entry.stack[static_cast<std::size_t>(k)],
                                           std::span<const T>(vk));
        kernels::axpy(T(rk), std::span<const T>(pv), std::span<T>(out));
      }
      outputs.push_back(std::move(out));
    }
    return outputs;
  }

  long long calls() const override { return calls_; }
  long long operator_applications() const override { return ops_; }

 private:
  struct CacheEntry {
    int order = -1;
    matfun::PhiStack<T> stack;
  };

  matfun::DenseMatrix<T> ha_;
  std::map<double, CacheEntry> cache_;
  long long calls_ = 0;
  long long ops_ = 0;
};

template <class T>
std::unique_ptr<PhiEngine<T>> make_engine(EngineKind kind, const krylov::LinearOperator<T>* base,
                                          double h, const EngineSettings& settings) {
  if (kind == EngineKind::dense) return std::make_unique<DenseEngine<T>>(base, h);
  return std::make_unique<KrylovEngine<T>>(base, h, settings);
}

template <class T>
using SemilinearG = std::function<void(double, std::span<const T>, std::span<T>)>;

// One constant step of the scheme: assembles stage values batch by batch,
// forming D_ni = g(t_n + c_i h, U_ni) - g(t_n, u_n) as each stage completes.
template <class T>
std::vector<T> step(const ExpRKMethod& m, const krylov::LinearOperator<T>& op,
                    const SemilinearG<T>& g, double t, std::span<const T> u, double h,
                    PhiEngine<T>& engine, WorkCounters& work) {
  if (!(h > 0.0)) throw ParameterError("step size must be positive");
  if (m.plan.empty()) throw ContractError("method has no evaluation plan");
  const std::size_t n = u.size();
  const int s = m.stages;

  std::vector<T> gn(n);
  g(t, u, std::span<T>(gn));
  ++work.g_evaluations;
  std::vector<T> hf(n);
  op.apply(u, hf);
  ++work.operator_applications;
  for (std::size_t i = 0; i < n; ++i) hf[i] = T(h) * (hf[i] + gn[i]);

  // basis[0] = h F_n, basis[j] = h D_nj once stage j is assembled
  std::vector<std::vector<T>> basis(static_cast<std::size_t>(s) + 1);
  basis[0] = std::move(hf);
  std::vector<int> pending(static_cast<std::size_t>(s) + 1, 0);
  for (const auto& batch : m.plan)
    for (const auto& tg : batch.targets)
      if (tg.stage > 0) ++pending[static_cast<std::size_t>(tg.stage)];
  std::vector<std::vector<T>> stage_value(static_cast<std::size_t>(s) + 1);
  std::vector<T> result;

  const long long calls_before = engine.calls();
  const long long ops_before = engine.operator_applications();
  for (std::size_t bi = 0; bi < m.plan.size(); ++bi) {
    const auto& batch = m.plan[bi];
    std::vector<std::vector<T>> vectors(static_cast<std::size_t>(batch.q) + 1,
                                        std::vector<T>(n, T{}));
    std::vector<double> rhos;
    rhos.reserve(batch.targets.size());
    for (const auto& tg : batch.targets) rhos.push_back(tg.rho.value());
    for (int k = 0; k <= batch.q; ++k)
      for (int col = 0; col <= s; ++col) {
        const Rational& w =
            batch.weights[static_cast<std::size_t>(k)][static_cast<std::size_t>(col)];
        if (w.is_zero()) continue;
        const auto& src = basis[static_cast<std::size_t>(col)];
        if (src.empty())
          throw ContractError("batch references a stage difference that is not assembled");
        kernels::axpy(T(w.value()), std::span<const T>(src),
                      std::span<T>(vectors[static_cast<std::size_t>(k)]));
      }

    std::vector<std::vector<T>> outputs;
    try {
      outputs = engine.combine(rhos, vectors);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("batch " + std::to_string(bi) + ": " + e.what(), e.trace());
    } catch (const Error& e) {
      throw NumericalError("batch " + std::to_string(bi) + ": " + e.what());
    }
    if (outputs.size() != batch.targets.size())
      throw ContractError("engine returned the wrong number of outputs");

    for (std::size_t ti = 0; ti < batch.targets.size(); ++ti) {
      const auto& tg = batch.targets[ti];
      if (tg.stage == 0) {
        result.assign(u.begin(), u.end());
        kernels::axpy(T(1), std::span<const T>(outputs[ti]), std::span<T>(result));
        continue;
      }
      auto& sv = stage_value[static_cast<std::size_t>(tg.stage)];
      if (sv.empty()) sv.assign(u.begin(), u.end());
      kernels::axpy(T(1), std::span<const T>(outputs[ti]), std::span<T>(sv));
      if (--pending[static_cast<std::size_t>(tg.stage)] == 0) {
        std::vector<T> gs(n);
        g(t + m.nodes[static_cast<std::size_t>(tg.stage)].value() * h, sv, std::span<T>(gs));
        ++work.g_evaluations;
        for (std::size_t i = 0; i < n; ++i) gs[i] = T(h) * (gs[i] - gn[i]);
        basis[static_cast<std::size_t>(tg.stage)] = std::move(gs);
      }
    }
  }
  work.engine_calls += engine.calls() - calls_before;
  work.operator_applications += engine.operator_applications() - ops_before;
  if (result.empty()) throw ContractError("plan produced no update");
  ++work.steps;
  return result;
}

template <class T>
struct IntegrationResult {
  std::vector<T> u;
  WorkCounters work;
};

template <class T>
IntegrationResult<T> integrate(const ExpRKMethod& m, const krylov::LinearOperator<T>& op,
                               const SemilinearG<T>& g, double t0, double t_end,
                               std::span<const T> u0, long long steps, PhiEngine<T>& engine) {
  if (steps < 1) throw ParameterError("step count must be >= 1");
  if (!(t_end > t0)) throw ParameterError("integration interval must have positive length");
  const double h = (t_end - t0) / static_cast<double>(steps);
  IntegrationResult<T> out;
  out.u.assign(u0.begin(), u0.end());
  for (long long i = 0; i < steps; ++i) {
    const double t = t0 + static_cast<double>(i) * h;
    try {
      out.u = step(m, op, g, t, std::span<const T>(out.u), h, engine, out.work);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("step " + std::to_string(i) + ": " + e.what(), e.trace());
    }
  }
  return out;
}

}  // namespace exprk::schemes
