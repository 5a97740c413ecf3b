#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "exprk/errors.hpp"
#include "exprk/kernels.hpp"

// Dense small-matrix kernels: the matrix exponential, the stacked phi
// functions obtained from one block-augmented exponential, and the dense
// evaluation of phi-function linear combinations.  These serve two roles:
// backend for the projected small problems inside the Krylov engine, and
// brute-force oracle for everything the Krylov engine computes.

namespace exprk::matfun {

template <class T>
struct real_of {
  using type = T;
};
template <class R>
struct real_of<std::complex<R>> {
  using type = R;
};
template <class T>
using real_t = typename real_of<T>::type;

template <class T>
inline double abs_val(const T& v) {
  return std::abs(v);
}

template <class T>
inline bool finite_val(const T& v) {
  if constexpr (std::is_same_v<T, std::complex<double>>)
    return std::isfinite(v.real()) && std::isfinite(v.imag());
  else
    return std::isfinite(v);
}

// Row-major dense matrix over double or complex<double>.
template <class T>
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, T init = T{})
      : rows_(r), cols_(c), data_(r * c, init) {}

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool is_square() const { return rows_ == cols_; }

  bool is_finite() const {
    for (const T& v : data_)
      if (!finite_val(v)) return false;
    return true;
  }

  DenseMatrix& operator+=(const DenseMatrix& o) {
    check_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  DenseMatrix& operator-=(const DenseMatrix& o) {
    check_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  DenseMatrix& operator*=(T s) {
    for (T& v : data_) v *= s;
    return *this;
  }
  friend DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
  friend DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
  friend DenseMatrix operator*(DenseMatrix a, T s) { return a *= s; }
  friend DenseMatrix operator*(T s, DenseMatrix a) { return a *= s; }

  // Max absolute column sum.
  double norm_1() const {
    double best = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < rows_; ++i) s += abs_val((*this)(i, j));
      best = std::max(best, s);
    }
    return best;
  }

  // Max absolute row sum.
  double norm_inf() const {
    double best = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols_; ++j) s += abs_val((*this)(i, j));
      best = std::max(best, s);
    }
    return best;
  }

  double norm_fro() const {
    double s = 0.0;
    for (const T& v : data_) s += abs_val(v) * abs_val(v);
    return std::sqrt(s);
  }

 private:
  void check_same_shape(const DenseMatrix& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_)
      throw DimensionError("matrix shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// C = A*B, accumulating rows of B scaled by entries of A (kernels do the
// contiguous work).
template <class T>
DenseMatrix<T> matmul(const DenseMatrix<T>& a, const DenseMatrix<T>& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul shape mismatch");
  DenseMatrix<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      if (aik == T{}) continue;
      kernels::axpy(aik, b.row(k), ci);
    }
  }
  return c;
}

template <class T>
std::vector<T> matvec(const DenseMatrix<T>& a, std::span<const T> x) {
  if (a.cols() != x.size()) throw DimensionError("matvec shape mismatch");
  std::vector<T> y(a.rows(), T{});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T s{};
    auto ri = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) s += ri[j] * x[j];
    y[i] = s;
  }
  return y;
}

// In-place LU factorization with partial pivoting; solves A*X = B for the
// matrix right-hand side B.  Used by the rational approximant in expm().
template <class T>
DenseMatrix<T> lu_solve(DenseMatrix<T> a, DenseMatrix<T> b) {
  if (!a.is_square() || a.rows() != b.rows())
    throw DimensionError("lu_solve shape mismatch");
  const std::size_t n = a.rows();
  std::vector<std::size_t> piv(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = abs_val(a(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double v = abs_val(a(i, k));
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (best == 0.0) throw NumericalError("singular matrix in lu_solve");
    piv[k] = p;
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(p, j));
      for (std::size_t j = 0; j < b.cols(); ++j) std::swap(b(k, j), b(p, j));
    }
    const T pivot = a(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const T m = a(i, k) / pivot;
      a(i, k) = m;
      if (m == T{}) continue;
      kernels::axpy(-m, a.row(k).subspan(k + 1), a.row(i).subspan(k + 1));
      kernels::axpy(-m, b.row(k), b.row(i));
    }
  }
  // back substitution
  for (std::size_t jj = n; jj-- > 0;) {
    const T d = a(jj, jj);
    for (std::size_t col = 0; col < b.cols(); ++col) b(jj, col) /= d;
    for (std::size_t i = 0; i < jj; ++i) {
      const T m = a(i, jj);
      if (m == T{}) continue;
      kernels::axpy(-m, b.row(jj), b.row(i));
    }
  }
  return b;
}

namespace detail {

// Diagonal Pade approximant coefficients for exp, degrees 3..13.
inline const double* pade_coeffs(int m) {
  static const double b3[] = {120., 60., 12., 1.};
  static const double b5[] = {30240., 15120., 3360., 420., 30., 1.};
  static const double b7[] = {17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.};
  static const double b9[] = {17643225600., 8821612800., 2075673600., 302702400., 30270240.,
                              2162160.,     110880.,     3960.,       90.,        1.};
  static const double b13[] = {64764752532480000., 32382376266240000., 7771770303897600.,
                               1187353796428800.,  129060195264000.,   10559470521600.,
                               670442572800.,      33522128640.,       1323241920.,
                               40840800.,          960960.,            16380.,
                               182.,               1.};
  switch (m) {
    case 3: return b3;
    case 5: return b5;
    case 7: return b7;
    case 9: return b9;
    default: return b13;
  }
}

}  // namespace detail

// Matrix exponential by scaling and squaring with diagonal Pade approximants
// (degree chosen from the 1-norm, degree 13 above the largest threshold).
template <class T>
DenseMatrix<T> expm(const DenseMatrix<T>& a) {
  if (!a.is_square()) throw DimensionError("expm requires a square matrix");
  if (!a.is_finite()) throw InvalidInputError("expm input has non-finite entries");
  const std::size_t n = a.rows();
  if (n == 0) return DenseMatrix<T>();

  const double theta[] = {1.495585217958292e-2, 2.539398330063230e-1, 9.504178996162932e-1,
                          2.097847961257068e0, 5.371920351148152e0};
  const int degrees[] = {3, 5, 7, 9, 13};
  const double norm = a.norm_1();

  int m = 13;
  int squarings = 0;
  DenseMatrix<T> as = a;
  for (int k = 0; k < 4; ++k) {
    if (norm <= theta[k]) {
      m = degrees[k];
      break;
    }
  }
  if (norm > theta[4]) {
    squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm / theta[4]))));
    as *= T(1.0 / std::ldexp(1.0, squarings));
  }

  const double* b = detail::pade_coeffs(m);
  const DenseMatrix<T> ident = DenseMatrix<T>::identity(n);
  const DenseMatrix<T> a2 = matmul(as, as);

  DenseMatrix<T> u(n, n), v(n, n);
  if (m < 13) {
    // U = A*(sum_{odd} b_k A^{k-1}), V = sum_{even} b_k A^k
    DenseMatrix<T> pow = ident;  // A^0
    u = ident * T(b[1]);
    v = ident * T(b[0]);
    for (int k = 2; k <= m; k += 2) {
      pow = matmul(pow, a2);  // A^k
      v += pow * T(b[k]);
      if (k + 1 <= m) u += pow * T(b[k + 1]);
    }
    u = matmul(as, u);
  } else {
    const DenseMatrix<T> a4 = matmul(a2, a2);
    const DenseMatrix<T> a6 = matmul(a2, a4);
    DenseMatrix<T> w = a6 * T(b[13]) + a4 * T(b[11]) + a2 * T(b[9]);
    w = matmul(a6, w);
    w += a6 * T(b[7]) + a4 * T(b[5]) + a2 * T(b[3]) + ident * T(b[1]);
    u = matmul(as, w);
    DenseMatrix<T> z = a6 * T(b[12]) + a4 * T(b[10]) + a2 * T(b[8]);
    z = matmul(a6, z);
    v = z + a6 * T(b[6]) + a4 * T(b[4]) + a2 * T(b[2]) + ident * T(b[0]);
  }

  DenseMatrix<T> num = v + u;
  DenseMatrix<T> den = v - u;
  DenseMatrix<T> r = lu_solve(std::move(den), std::move(num));
  for (int s = 0; s < squarings; ++s) r = matmul(r, r);
  if (!r.is_finite()) throw NumericalError("expm produced non-finite entries");
  return r;
}

// phi_0..phi_q of A, all from the exponential of one block matrix: A in the
// top-left corner, identity blocks on the block superdiagonal, zeros
// elsewhere.  The top block row of its exponential is [phi_0, ..., phi_q](A).
template <class T>
struct PhiStack {
  std::vector<DenseMatrix<T>> phi;  // phi[k], k = 0..q
  const DenseMatrix<T>& operator[](std::size_t k) const { return phi[k]; }
  std::size_t order() const { return phi.size() - 1; }
};

inline constexpr int kMaxPhiOrder = 8;

template <class T>
PhiStack<T> phi_stack(const DenseMatrix<T>& a, int q) {
  if (!a.is_square()) throw DimensionError("phi_stack requires a square matrix");
  if (q < 0 || q > kMaxPhiOrder) throw ParameterError("phi_stack order out of range");
  if (!a.is_finite()) throw InvalidInputError("phi_stack input has non-finite entries");
  const std::size_t n = a.rows();

  PhiStack<T> st;
  if (q == 0) {
    st.phi.push_back(expm(a));
    return st;
  }

  const std::size_t na = n * static_cast<std::size_t>(q + 1);
  DenseMatrix<T> aug(na, na);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) aug(i, j) = a(i, j);
  for (int blk = 0; blk < q; ++blk) {
    const std::size_t r0 = static_cast<std::size_t>(blk) * n;
    const std::size_t c0 = r0 + n;
    for (std::size_t i = 0; i < n; ++i) aug(r0 + i, c0 + i) = T(1);
  }

  DenseMatrix<T> e = expm(aug);
  st.phi.reserve(q + 1);
  for (int k = 0; k <= q; ++k) {
    DenseMatrix<T> blk(n, n);
    const std::size_t c0 = static_cast<std::size_t>(k) * n;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) blk(i, j) = e(i, c0 + j);
    st.phi.push_back(std::move(blk));
  }
  return st;
}

// sum_k phi_k(rho*A) * rho^k * v_k for one scaling rho.  Brute force through
// phi_stack; the oracle the iterative engine is tested against.
template <class T>
std::vector<T> phi_combination_dense(const DenseMatrix<T>& a,
                                     const std::vector<std::vector<T>>& vectors,
                                     double rho) {
  if (!a.is_square()) throw DimensionError("phi_combination_dense requires square matrix");
  if (vectors.empty()) throw InvalidInputError("phi_combination_dense needs at least v_0");
  if (!(rho > 0.0) || rho > 1.0) throw ParameterError("scaling must lie in (0, 1]");
  const std::size_t n = a.rows();
  for (const auto& v : vectors)
    if (v.size() != n) throw DimensionError("phi_combination_dense vector length mismatch");
  const int q = static_cast<int>(vectors.size()) - 1;

  DenseMatrix<T> sa = a;
  sa *= T(rho);
  PhiStack<T> st = phi_stack(sa, q);

  std::vector<T> out(n, T{});
  double rk = 1.0;
  for (int k = 0; k <= q; ++k) {
    std::vector<T> pv =
        matvec(st[k], std::span<const T>(vectors[static_cast<std::size_t>(k)]));
    kernels::axpy(T(rk), std::span<const T>(pv), std::span<T>(out));
    rk *= rho;
  }
  return out;
}

}  // namespace exprk::matfun
