// AVX2+FMA kernel variants.  This translation unit is the only one compiled
// with -mavx2 -mfma; it must not be entered unless the CPU supports both
// (detail::avx2_supported() guards dispatch).

#include "exprk/kernels.hpp"

#ifdef EXPRK_HAVE_AVX2

#include <immintrin.h>

#include <cmath>

namespace exprk::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d h = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, h));
}

inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  __m128d h = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_max_sd(lo, h));
}

const __m256d kAbsMask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double nrm2_d_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_fmadd_pd(v, v, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] * x[i];
  return std::sqrt(s);
}

void axpy_d_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d r = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, r);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void scal_d_avx2(double a, double* x, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

double amax_diff_d_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_max_pd(acc, _mm256_and_pd(d, kAbsMask));
  }
  double m = hmax(acc);
  for (; i < n; ++i) {
    double d = std::fabs(x[i] - y[i]);
    if (d > m) m = d;
  }
  return m;
}

// Complex kernels work on the interleaved [re,im] layout: one __m256d holds
// two complex values.  The pair-swapped permute (imm 0b0101) turns [r,i] into
// [i,r] inside each value, and addsub realizes the +/- sign pattern of
// complex multiplication.

cplx dotc_avx2(const cplx* x, const cplx* y, std::size_t n) {
  const double* xd = reinterpret_cast<const double*>(x);
  const double* yd = reinterpret_cast<const double*>(y);
  __m256d re_acc = _mm256_setzero_pd();
  __m256d im_acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    __m256d xv = _mm256_loadu_pd(xd + 2 * i);
    __m256d yv = _mm256_loadu_pd(yd + 2 * i);
    re_acc = _mm256_fmadd_pd(xv, yv, re_acc);              // xr*yr, xi*yi
    __m256d xs = _mm256_permute_pd(xv, 0b0101);            // xi, xr
    im_acc = _mm256_addsub_pd(im_acc, _mm256_mul_pd(yv, xs));  // -yr*xi, +yi*xr
  }
  double re = hsum(re_acc);
  double im = hsum(im_acc);
  for (; i < n; ++i) {
    re += x[i].real() * y[i].real() + x[i].imag() * y[i].imag();
    im += x[i].real() * y[i].imag() - x[i].imag() * y[i].real();
  }
  return {re, im};
}

double nrm2_z_avx2(const cplx* x, std::size_t n) {
  const double* xd = reinterpret_cast<const double*>(x);
  return nrm2_d_avx2(xd, 2 * n);
}

void axpy_z_avx2(cplx a, const cplx* x, cplx* y, std::size_t n) {
  const double* xd = reinterpret_cast<const double*>(x);
  double* yd = reinterpret_cast<double*>(y);
  const __m256d ar = _mm256_set1_pd(a.real());
  const __m256d ai = _mm256_set1_pd(a.imag());
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    __m256d xv = _mm256_loadu_pd(xd + 2 * i);
    __m256d yv = _mm256_loadu_pd(yd + 2 * i);
    __m256d t = _mm256_fmadd_pd(ar, xv, yv);               // y + ar*x
    __m256d xs = _mm256_permute_pd(xv, 0b0101);
    __m256d r = _mm256_addsub_pd(t, _mm256_mul_pd(ai, xs));  // -+ ai*swap(x)
    _mm256_storeu_pd(yd + 2 * i, r);
  }
  for (; i < n; ++i) {
    const double xr = x[i].real(), xi = x[i].imag();
    y[i] += cplx(a.real() * xr - a.imag() * xi, a.real() * xi + a.imag() * xr);
  }
}

void scal_z_avx2(cplx a, cplx* x, std::size_t n) {
  double* xd = reinterpret_cast<double*>(x);
  const __m256d ar = _mm256_set1_pd(a.real());
  const __m256d ai = _mm256_set1_pd(a.imag());
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    __m256d xv = _mm256_loadu_pd(xd + 2 * i);
    __m256d t = _mm256_mul_pd(ar, xv);
    __m256d xs = _mm256_permute_pd(xv, 0b0101);
    _mm256_storeu_pd(xd + 2 * i, _mm256_addsub_pd(t, _mm256_mul_pd(ai, xs)));
  }
  for (; i < n; ++i) {
    const double xr = x[i].real(), xi = x[i].imag();
    x[i] = cplx(a.real() * xr - a.imag() * xi, a.real() * xi + a.imag() * xr);
  }
}

double amax_diff_z_avx2(const cplx* x, const cplx* y, std::size_t n) {
  const double* xd = reinterpret_cast<const double*>(x);
  const double* yd = reinterpret_cast<const double*>(y);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(xd + 2 * i), _mm256_loadu_pd(yd + 2 * i));
    __m256d s = _mm256_mul_pd(d, d);
    acc = _mm256_max_pd(acc, _mm256_hadd_pd(s, s));  // dr*dr + di*di per value
  }
  double m2 = hmax(acc);
  for (; i < n; ++i) {
    const double dr = x[i].real() - y[i].real();
    const double di = x[i].imag() - y[i].imag();
    const double d2 = dr * dr + di * di;
    if (d2 > m2) m2 = d2;
  }
  return std::sqrt(m2);
}

}  // namespace

namespace detail {

bool avx2_supported() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

const KernelTable& avx2_table() {
  static const KernelTable t = {
      dot_avx2,  nrm2_d_avx2, axpy_d_avx2, scal_d_avx2, amax_diff_d_avx2,
      dotc_avx2, nrm2_z_avx2, axpy_z_avx2, scal_z_avx2, amax_diff_z_avx2,
  };
  return t;
}

}  // namespace detail
}  // namespace exprk::kernels

#endif  // EXPRK_HAVE_AVX2
