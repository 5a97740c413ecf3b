#include "exprk/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>

namespace exprk::kernels {

// ============================================================
// scalar reference kernels
// ============================================================

namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double nrm2_d_scalar(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return std::sqrt(s);
}

void axpy_d_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scal_d_scalar(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

double amax_diff_d_scalar(const double* x, const double* y, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = std::fabs(x[i] - y[i]);
    if (d > m) m = d;
  }
  return m;
}

cplx dotc_scalar(const cplx* x, const cplx* y, std::size_t n) {
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // conj(x)*y accumulated as separate real sums
    re += x[i].real() * y[i].real() + x[i].imag() * y[i].imag();
    im += x[i].real() * y[i].imag() - x[i].imag() * y[i].real();
  }
  return {re, im};
}

double nrm2_z_scalar(const cplx* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    s += x[i].real() * x[i].real() + x[i].imag() * x[i].imag();
  return std::sqrt(s);
}

void axpy_z_scalar(cplx a, const cplx* x, cplx* y, std::size_t n) {
  const double ar = a.real(), ai = a.imag();
  for (std::size_t i = 0; i < n; ++i) {
    const double xr = x[i].real(), xi = x[i].imag();
    y[i] += cplx(ar * xr - ai * xi, ar * xi + ai * xr);
  }
}

void scal_z_scalar(cplx a, cplx* x, std::size_t n) {
  const double ar = a.real(), ai = a.imag();
  for (std::size_t i = 0; i < n; ++i) {
    const double xr = x[i].real(), xi = x[i].imag();
    x[i] = cplx(ar * xr - ai * xi, ar * xi + ai * xr);
  }
}

double amax_diff_z_scalar(const cplx* x, const cplx* y, std::size_t n) {
  double m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dr = x[i].real() - y[i].real();
    const double di = x[i].imag() - y[i].imag();
    const double d2 = dr * dr + di * di;
    if (d2 > m2) m2 = d2;
  }
  return std::sqrt(m2);
}

}  // namespace

namespace detail {

const KernelTable& scalar_table() {
  static const KernelTable t = {
      dot_scalar,    nrm2_d_scalar, axpy_d_scalar, scal_d_scalar, amax_diff_d_scalar,
      dotc_scalar,   nrm2_z_scalar, axpy_z_scalar, scal_z_scalar, amax_diff_z_scalar,
  };
  return t;
}

}  // namespace detail

// ============================================================
// dispatch
// ============================================================

namespace {

std::atomic<const KernelTable*> g_active{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::scalar:
      return &detail::scalar_table();
    case Backend::avx2:
#ifdef EXPRK_HAVE_AVX2
      if (detail::avx2_supported()) return &detail::avx2_table();
#endif
      return nullptr;
  }
  return nullptr;
}

const KernelTable* init_active() {
  Backend want = Backend::scalar;
#ifdef EXPRK_HAVE_AVX2
  if (detail::avx2_supported()) want = Backend::avx2;
#endif
  if (const char* env = std::getenv("EXPRK_KERNEL_BACKEND")) {
    if (std::strcmp(env, "scalar") == 0) want = Backend::scalar;
    else if (std::strcmp(env, "avx2") == 0 && table_for(Backend::avx2)) want = Backend::avx2;
  }
  const KernelTable* t = table_for(want);
  if (!t) {
    want = Backend::scalar;
    t = table_for(want);
  }
  g_backend.store(want);
  return t;
}

inline const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (!t) {
    t = init_active();
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

}  // namespace

Backend active_backend() {
  active();
  return g_backend.load();
}

bool backend_available(Backend b) { return table_for(b) != nullptr; }

bool select_backend(Backend b) {
  const KernelTable* t = table_for(b);
  if (!t) return false;
  g_active.store(t, std::memory_order_release);
  g_backend.store(b);
  return true;
}

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
  }
  return "?";
}

// ============================================================
// public entry points
// ============================================================

double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
double nrm2(std::span<const double> x) { return active().nrm2_d(x.data(), x.size()); }
void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy_d(a, x.data(), y.data(), x.size());
}
void scal(double a, std::span<double> x) { active().scal_d(a, x.data(), x.size()); }
double amax_diff(std::span<const double> x, std::span<const double> y) {
  return active().amax_diff_d(x.data(), y.data(), x.size());
}

cplx dotc(std::span<const cplx> x, std::span<const cplx> y) {
  return active().dotc(x.data(), y.data(), x.size());
}
double nrm2(std::span<const cplx> x) { return active().nrm2_z(x.data(), x.size()); }
void axpy(cplx a, std::span<const cplx> x, std::span<cplx> y) {
  active().axpy_z(a, x.data(), y.data(), x.size());
}
void scal(cplx a, std::span<cplx> x) { active().scal_z(a, x.data(), x.size()); }
double amax_diff(std::span<const cplx> x, std::span<const cplx> y) {
  return active().amax_diff_z(x.data(), y.data(), x.size());
}

}  // namespace exprk::kernels
