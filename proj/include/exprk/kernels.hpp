#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string_view>

// Vector kernels used by the hot loops (Krylov orthogonalization, stage
// assembly, norms).  Every kernel has a scalar reference implementation and,
// on x86-64 hardware that supports it, an AVX2+FMA variant.  The active
// variant is chosen once at runtime; tests pin either backend explicitly and
// check the two agree.

namespace exprk::kernels {

using cplx = std::complex<double>;

enum class Backend { scalar, avx2 };

// Currently active backend.
Backend active_backend();

// Force a backend.  Returns false (and changes nothing) if the requested
// backend is not available on this machine.
bool select_backend(Backend b);

// True if the backend is compiled in and supported by the CPU.
bool backend_available(Backend b);

std::string_view backend_name(Backend b);

// ---- real double ----
double dot(std::span<const double> x, std::span<const double> y);
double nrm2(std::span<const double> x);
void axpy(double a, std::span<const double> x, std::span<double> y);   // y += a*x
void scal(double a, std::span<double> x);                              // x *= a
double amax_diff(std::span<const double> x, std::span<const double> y);

// ---- complex double (interleaved re,im layout) ----
cplx dotc(std::span<const cplx> x, std::span<const cplx> y);  // sum conj(x)*y
double nrm2(std::span<const cplx> x);
void axpy(cplx a, std::span<const cplx> x, std::span<cplx> y);
void scal(cplx a, std::span<cplx> x);
double amax_diff(std::span<const cplx> x, std::span<const cplx> y);

// Field-generic aliases so templated callers read uniformly.  inner()
// conjugates its first argument in the complex case.
inline double inner(std::span<const double> x, std::span<const double> y) { return dot(x, y); }
inline cplx inner(std::span<const cplx> x, std::span<const cplx> y) { return dotc(x, y); }

// Function-pointer table; one per backend.  Exposed for the dispatcher and
// the AVX2 translation unit only.
struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  double (*nrm2_d)(const double*, std::size_t);
  void (*axpy_d)(double, const double*, double*, std::size_t);
  void (*scal_d)(double, double*, std::size_t);
  double (*amax_diff_d)(const double*, const double*, std::size_t);
  cplx (*dotc)(const cplx*, const cplx*, std::size_t);
  double (*nrm2_z)(const cplx*, std::size_t);
  void (*axpy_z)(cplx, const cplx*, cplx*, std::size_t);
  void (*scal_z)(cplx, cplx*, std::size_t);
  double (*amax_diff_z)(const cplx*, const cplx*, std::size_t);
};

namespace detail {
const KernelTable& scalar_table();
#ifdef EXPRK_HAVE_AVX2
const KernelTable& avx2_table();
bool avx2_supported();
#endif
}  // namespace detail

}  // namespace exprk::kernels
