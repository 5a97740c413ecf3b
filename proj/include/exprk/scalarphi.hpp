#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "exprk/errors.hpp"

// Scalar phi_k evaluation: phi_0(z) = exp(z) and
// phi_k(z) = (phi_{k-1}(z) - 1/(k-1)!) / z for k >= 1.
// Near the origin the recurrence cancels, so small arguments use the Taylor
// series phi_k(z) = sum_j z^j / (j+k)! instead.  Evaluation order is fixed,
// so results are bitwise reproducible for a given argument.

namespace exprk::matfun {

namespace detail {

inline double inv_factorial(int k) {
  static const std::array<double, 25> table = [] {
    std::array<double, 25> t{};
    double f = 1.0;
    t[0] = 1.0;
    for (int i = 1; i < 25; ++i) {
      f *= i;
      t[static_cast<std::size_t>(i)] = 1.0 / f;
    }
    return t;
  }();
  return table[static_cast<std::size_t>(k)];
}

template <class S>
S phi_taylor(S z, int k) {
  // converges in <= 24 terms for |z| <= 1/2 to well below 1e-18
  S term(detail::inv_factorial(k));
  S sum = term;
  for (int j = 1; j < 24; ++j) {
    term = term * z * (1.0 / (j + k));
    sum += term;
  }
  return sum;
}

}  // namespace detail

// phi_0..phi_q at a scalar argument (double or complex<double>).
template <class S>
std::vector<S> phi_scalar_stack(S z, int q) {
  if (q < 0 || q > 16) throw ParameterError("phi order out of range");
  std::vector<S> out(static_cast<std::size_t>(q) + 1);
  out[0] = std::exp(z);
  if (q == 0) return out;
  if (std::abs(z) < 0.5) {
    for (int k = 1; k <= q; ++k) out[static_cast<std::size_t>(k)] = detail::phi_taylor(z, k);
  } else {
    for (int k = 1; k <= q; ++k)
      out[static_cast<std::size_t>(k)] =
          (out[static_cast<std::size_t>(k - 1)] - S(detail::inv_factorial(k - 1))) / z;
  }
  return out;
}

template <class S>
S phi_scalar(S z, int k) {
  return phi_scalar_stack(z, k)[static_cast<std::size_t>(k)];
}

}  // namespace exprk::matfun
