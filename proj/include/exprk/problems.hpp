#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "exprk/errors.hpp"
#include "exprk/fft.hpp"
#include "exprk/krylov.hpp"
#include "exprk/stepper.hpp"

namespace exprk::problems {

// Semilinear initial value problem u' = A u + g(t, u), u(t0) = u0, ready to
// hand to the stepper. `exact` is null when no closed-form solution exists.
template <class T>
struct SemilinearSystem {
  std::string name;
  std::size_t n = 0;
  krylov::LinearOperator<T> A;
  schemes::SemilinearG<T> g;
  std::vector<T> initial;
  double t0 = 0.0;
  double t_end = 1.0;
  std::function<std::vector<T>(double)> exact;
  double a_norm_inf = 0.0;
  std::string notes;
};

template <class T>
double max_norm_error(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.size() != b.size()) throw DimensionError("max norm needs equal lengths");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Heat equation with a bounded nonlinear reaction term on (0, 1), homogeneous
// Dirichlet boundaries, discretized by second-order central differences on
// `points` interior nodes. The source is chosen so that
// u(x, t) = x(1 - x) e^t solves the problem; since that profile is quadratic
// in x, the discrete Laplacian reproduces its second derivative exactly and
// the sampled solution solves the semidiscrete system too.
inline SemilinearSystem<double> make_parabolic1d(int points = 200) {
  if (points < 8) throw ParameterError("parabolic grid needs at least 8 interior points");
  const std::size_t n = static_cast<std::size_t>(points);
  const double dx = 1.0 / static_cast<double>(points + 1);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i + 1) * dx;

  SemilinearSystem<double> p;
  p.name = "parabolic1d";
  p.n = n;
  p.t0 = 0.0;
  p.t_end = 1.0;
  p.a_norm_inf = 4.0 / (dx * dx);
  p.notes = "interior points " + std::to_string(points) + ", dx = 1/" +
            std::to_string(points + 1) + ", Dirichlet; u' = u_xx + 1/(1+u^2) + source";

  p.A.n = n;
  p.A.apply_fn = [n, dx](std::span<const double> u, std::span<double> y) {
    const double s = 1.0 / (dx * dx);
    for (std::size_t i = 0; i < n; ++i) {
      const double left = i > 0 ? u[i - 1] : 0.0;
      const double right = i + 1 < n ? u[i + 1] : 0.0;
      y[i] = s * (left - 2.0 * u[i] + right);
    }
  };

  p.g = [x](double t, std::span<const double> u, std::span<double> out) {
    const double et = std::exp(t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double profile = x[i] * (1.0 - x[i]) * et;
      const double source = profile + 2.0 * et - 1.0 / (1.0 + profile * profile);
      out[i] = 1.0 / (1.0 + u[i] * u[i]) + source;
    }
  };

  p.initial.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.initial[i] = x[i] * (1.0 - x[i]);
  p.exact = [x](double t) {
    const double et = std::exp(t);
    std::vector<double> u(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) u[i] = x[i] * (1.0 - x[i]) * et;
    return u;
  };
  return p;
}

// Cubic Schroedinger equation with a smooth periodic potential on [-pi, pi),
// advanced in Fourier coefficient space: A = diag(-i k^2) over wavenumbers
// k = -modes/2+1 .. modes/2 (bin j holds k = j for j <= modes/2, else
// j - modes), and the state vector carries unnormalized forward-transform
// coefficients of the grid values at x_m = -pi + 2 pi m / modes.
inline SemilinearSystem<std::complex<double>> make_nls1d(int modes = 128) {
  using C = std::complex<double>;
  if (modes < 16 || (modes & (modes - 1)) != 0)
    throw ParameterError("mode count must be a power of two, at least 16");
  const std::size_t n = static_cast<std::size_t>(modes);
  const double pi = std::numbers::pi;

  std::vector<double> vx(n);  // potential 1/(1+sin^2 x) on the grid
  std::vector<C> psi0(n);
  for (std::size_t m = 0; m < n; ++m) {
    const double xm = -pi + 2.0 * pi * static_cast<double>(m) / static_cast<double>(n);
    const double sx = std::sin(xm);
    vx[m] = 1.0 / (1.0 + sx * sx);
    psi0[m] = C(std::exp(std::sin(2.0 * xm)), 0.0);
  }

  std::vector<C> diag(n);
  for (std::size_t j = 0; j < n; ++j) {
    const long long k =
        j <= n / 2 ? static_cast<long long>(j) : static_cast<long long>(j) - static_cast<long long>(n);
    diag[j] = C(0.0, -static_cast<double>(k * k));
  }

  SemilinearSystem<C> p;
  p.name = "nls1d";
  p.n = n;
  p.t0 = 0.0;
  p.t_end = 3.0;
  p.a_norm_inf = static_cast<double>((n / 2) * (n / 2));
  p.notes = "modes " + std::to_string(modes) +
            ", spectral periodic on [-pi, pi); potential 1/(1+sin^2 x), cubic focusing term";
  p.A = krylov::make_diagonal_operator(std::move(diag));

  const fft::Plan plan(n);
  p.g = [vx, plan, n](double, std::span<const C> u, std::span<C> out) {
    std::vector<C> psi(u.begin(), u.end());
    plan.inverse(std::span<C>(psi));
    for (std::size_t m = 0; m < n; ++m) {
      const double dens = std::norm(psi[m]);
      psi[m] = (vx[m] + dens) * psi[m];
    }
    plan.forward(std::span<C>(psi));
    for (std::size_t j = 0; j < n; ++j) out[j] = C(0.0, -1.0) * psi[j];
  };

  p.initial = psi0;
  fft::Plan(n).forward(std::span<C>(p.initial));
  return p;
}

// Two-species reaction-diffusion model on the periodic square [0, L)^2 with
// L = 1.5, P x P cells per species, five-point Laplacians. State layout:
// activator u first (row-major, index iy*P + ix for position (ix*dx, iy*dx)),
// then inhibitor v. The stencil sums neighbor differences, so constants are
// mapped to exact zeros.
inline SemilinearSystem<double> make_grayscott2d(int points_per_dim = 150) {
  if (points_per_dim < 16) throw ParameterError("reaction grid needs at least 16 points per side");
  const std::size_t P = static_cast<std::size_t>(points_per_dim);
  const std::size_t cells = P * P;
  const double L = 1.5;
  const double dx = L / static_cast<double>(P);
  const double du = 0.02, dv = 0.01, alpha = 0.065, beta = 0.035;

  SemilinearSystem<double> p;
  p.name = "grayscott2d";
  p.n = 2 * cells;
  p.t0 = 0.0;
  p.t_end = 2.0;
  p.a_norm_inf = 8.0 * du / (dx * dx);
  p.notes = "grid " + std::to_string(points_per_dim) + "x" + std::to_string(points_per_dim) +
            ", L = 1.5, periodic; d_u = 0.02, d_v = 0.01, alpha = 0.065, beta = 0.035";

  p.A.n = 2 * cells;
  p.A.apply_fn = [P, cells, dx, du, dv](std::span<const double> w, std::span<double> y) {
    const auto species = [&](std::size_t base, double diff) {
      const double s = diff / (dx * dx);
      for (std::size_t iy = 0; iy < P; ++iy) {
        const std::size_t up = (iy + 1) % P, down = (iy + P - 1) % P;
        for (std::size_t ix = 0; ix < P; ++ix) {
          const std::size_t right = (ix + 1) % P, left = (ix + P - 1) % P;
          const double c = w[base + iy * P + ix];
          const double sum = (w[base + iy * P + right] - c) + (w[base + iy * P + left] - c) +
                             (w[base + up * P + ix] - c) + (w[base + down * P + ix] - c);
          y[base + iy * P + ix] = s * sum;
        }
      }
    };
    species(0, du);
    species(cells, dv);
  };

  p.g = [cells, alpha, beta](double, std::span<const double> w, std::span<double> out) {
    for (std::size_t i = 0; i < cells; ++i) {
      const double u = w[i], v = w[cells + i];
      const double reaction = u * v * v;
      out[i] = -reaction + alpha * (1.0 - u);
      out[cells + i] = reaction - (alpha + beta) * v;
    }
  };

  p.initial.resize(2 * cells);
  for (std::size_t iy = 0; iy < P; ++iy)
    for (std::size_t ix = 0; ix < P; ++ix) {
      const double x = static_cast<double>(ix) * dx, y = static_cast<double>(iy) * dx;
      const double rx = x - L, ry = y - L;
      p.initial[iy * P + ix] = 1.0 - std::exp(-150.0 * (rx * rx + ry * ry));
      p.initial[cells + iy * P + ix] = std::exp(-150.0 * (rx * rx + 2.0 * ry * ry));
    }
  return p;
}

}  // namespace exprk::problems
