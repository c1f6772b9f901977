// SPDX-License-Identifier: Apache-2.0
//
// Test-only oracles, independent of the library's moment formulas: brute-force
// quadrature of the kernel integrals with a regularizing substitution for the
// weakly singular family.
#pragma once

#include <cmath>
#include <functional>

#include "viscofem/core.hpp"
#include "viscofem/kernel.hpp"

namespace viscofem::testing {

// \int_{u0}^{u1} K(u) phi(u) du by adaptive quadrature; the substitution
// v = u^rho removes the algebraic singularity of the power law at u = 0.
inline double kernel_range_oracle(const KernelSpec& ker, double u0, double u1,
                                  const std::function<double(double)>& phi) {
  if (ker.is_zero() || u1 <= u0) return 0.0;
  if (ker.type() == KernelType::PowerLaw) {
    const double c = ker.c(), rho = ker.rho(), eta = ker.eta();
    auto g = [&](double v) {
      const double u = std::pow(v, 1.0 / rho);
      return std::exp(-eta * u) * phi(u);
    };
    return (c / rho) *
           integrate_adaptive(g, std::pow(u0, rho), std::pow(u1, rho), 1e-13);
  }
  auto f = [&](double u) { return ker.value(u) * phi(u); };
  return integrate_adaptive(f, u0, u1, 1e-13);
}

// \int_0^tau K(u) phi(u) du
inline double kernel_int_oracle(const KernelSpec& ker, double tau,
                                const std::function<double(double)>& phi) {
  return kernel_range_oracle(ker, 0.0, tau, phi);
}

// \int_a^{min(b,t)} K(t-s) y(s) ds
inline double forward_oracle(const KernelSpec& ker, double a, double b,
                             double t, const std::function<double(double)>& y) {
  const double hi = std::min(b, t);
  if (hi <= a) return 0.0;
  return kernel_range_oracle(ker, t - hi, t - a,
                             [&](double u) { return y(t - u); });
}

// \int_{max(a,t)}^b K(s-t) y(s) ds
inline double reversed_oracle(const KernelSpec& ker, double a, double b,
                              double t, const std::function<double(double)>& y) {
  const double lo = std::max(a, t);
  if (lo >= b) return 0.0;
  return kernel_range_oracle(ker, lo - t, b - t,
                             [&](double u) { return y(t + u); });
}

// Double quadrature oracle for
//   \int_c^d shape_p(t) \int_a^{min(b,t)} K(t-s) hat_q(s) ds dt.
inline double double_oracle(const KernelSpec& ker, double a, double b, double c,
                            double d, TShape p, bool left_hat) {
  const double k = b - a, kn = d - c;
  auto shape = [&](double t) {
    switch (p) {
      case TShape::One: return 1.0;
      case TShape::Left: return (d - t) / kn;
      default: return (t - c) / kn;
    }
  };
  auto hat = [&](double s) { return left_hat ? (b - s) / k : (s - a) / k; };
  auto f = [&](double t) { return shape(t) * forward_oracle(ker, a, b, t, hat); };
  // graded toward c where the inner integral can have an algebraic kink
  return integrate_graded_left(f, c, d, 20, 14);
}

}  // namespace viscofem::testing
