#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "exprk/errors.hpp"

// Iterative radix-2 transforms for power-of-two lengths.  Forward uses the
// kernel e^{-2*pi*i*j*k/N}; inverse applies the conjugate kernel and divides
// by N, so inverse(forward(x)) == x up to rounding.

namespace exprk::fft {

using cplx = std::complex<double>;

class Plan {
 public:
  explicit Plan(std::size_t n) : n_(n) {
    if (n == 0 || (n & (n - 1)) != 0)
      throw ParameterError("transform length must be a power of two");
    bitrev_.resize(n);
    std::size_t log2n = 0;
    while ((std::size_t{1} << log2n) < n) ++log2n;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < log2n; ++b) r |= ((i >> b) & 1u) << (log2n - 1 - b);
      bitrev_[i] = r;
    }
    // twiddles for each stage, forward sign
    tw_.resize(log2n);
    for (std::size_t s = 0; s < log2n; ++s) {
      const std::size_t half = std::size_t{1} << s;
      tw_[s].resize(half);
      for (std::size_t j = 0; j < half; ++j) {
        const double ang = -std::numbers::pi * static_cast<double>(j) / static_cast<double>(half);
        tw_[s][j] = cplx(std::cos(ang), std::sin(ang));
      }
    }
  }

  std::size_t size() const { return n_; }

  void forward(std::span<cplx> x) const { run(x, false); }
  void inverse(std::span<cplx> x) const {
    run(x, true);
    const double inv = 1.0 / static_cast<double>(n_);
    for (auto& v : x) v *= inv;
  }

 private:
  void run(std::span<cplx> x, bool conj) const {
    if (x.size() != n_) throw DimensionError("transform buffer length mismatch");
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t r = bitrev_[i];
      if (i < r) std::swap(x[i], x[r]);
    }
    for (std::size_t s = 0; s < tw_.size(); ++s) {
      const std::size_t half = std::size_t{1} << s;
      const std::size_t len = half << 1;
      for (std::size_t base = 0; base < n_; base += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const cplx w = conj ? std::conj(tw_[s][j]) : tw_[s][j];
          const cplx a = x[base + j];
          const cplx b = x[base + j + half] * w;
          x[base + j] = a + b;
          x[base + j + half] = a - b;
        }
      }
    }
  }

  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::vector<cplx>> tw_;
};

inline void forward(std::span<cplx> x) { Plan(x.size()).forward(x); }
inline void inverse(std::span<cplx> x) { Plan(x.size()).inverse(x); }

}  // namespace exprk::fft
