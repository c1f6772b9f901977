// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>

#include "viscofem/kernel.hpp"
#include "viscofem/space_time.hpp"

namespace viscofem {

struct ExactSolution {
  SpaceTimeFn u1, u2;
};

// ---------------------------------------------------------------------------
// Problem data: domain, boundary split, material, kernel, loads, initial data
// and (for manufactured solutions) the exact solution.
// ---------------------------------------------------------------------------
struct ProblemSpec {
  std::string name;
  int dim = 1;
  double T = 1.0;
  ElasticParams elast;
  KernelSpec kernel = KernelSpec::zero();

  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  // 1D: [left, right]; 2D: [left, right, bottom, top]
  std::array<BTag, 4> side_tags{BTag::Dirichlet, BTag::Neumann, BTag::Neumann,
                                BTag::Neumann};

  SpaceTimeFn f;  // volume load
  SpaceTimeFn g;  // Neumann traction
  SpatialFn u0, v0;
  std::optional<ExactSolution> exact;

  std::shared_ptr<Forest> make_forest(int nx, int ny = -1) const {
    if (dim == 1) return Forest::interval(x0, x1, nx, side_tags[0], side_tags[1]);
    return Forest::rectangle(x0, x1, y0, y1, nx, ny < 0 ? nx : ny, side_tags);
  }
};

namespace pdetail {

inline Eigen::Vector2d zero_fn(const Vec&, double) {
  return Eigen::Vector2d::Zero();
}

// \int_0^t K(t-s) s ds = t \int_0^t K - \int_0^t u K(u) du
inline double conv_linear(const KernelSpec& ker, double t) {
  return t * ker.mass_to(t) - ker.first_moment_to(t);
}

// \int_0^t K(t-s) sin(s) ds, closed form for Prony, quadrature otherwise
inline double conv_sin(const KernelSpec& ker, double t) {
  if (ker.is_zero() || t <= 0.0) return 0.0;
  if (ker.is_prony()) {
    double s = 0.0;
    for (const auto& tm : ker.terms()) {
      const double lam = tm.lambda;
      s += tm.gamma * (lam * std::sin(t) - std::cos(t) + std::exp(-lam * t)) /
           (1.0 + lam * lam);
    }
    return s;
  }
  // power law: v = u^rho substitution regularizes the endpoint
  const double c = ker.c(), rho = ker.rho(), eta = ker.eta();
  auto g = [&](double v) {
    const double u = std::pow(v, 1.0 / rho);
    return std::exp(-eta * u) * std::sin(t - u);
  };
  return (c / rho) * integrate_adaptive(g, 0.0, std::pow(t, rho), 1e-12);
}

}  // namespace pdetail

// ---------------------------------------------------------------------------
// Exactness probe: 1D, u1 = x t, u2 = x. The solution lies in every trial
// space, so the discrete solution must reproduce it to solver precision
// provided the convolution weights and loads are integrated consistently.
// ---------------------------------------------------------------------------
inline ProblemSpec mms_linear(KernelSpec kernel, ElasticParams elast = {1.0, 1.0},
                              double T = 1.0) {
  ProblemSpec p;
  p.name = "mms_linear";
  p.dim = 1;
  p.T = T;
  p.elast = elast;
  p.kernel = std::move(kernel);
  p.side_tags = {BTag::Dirichlet, BTag::Neumann, BTag::None, BTag::None};
  const double E = elast.modulus_1d();
  const KernelSpec ker = p.kernel;
  p.f = pdetail::zero_fn;
  p.g = [E, ker](const Vec&, double t) {
    return Eigen::Vector2d(E * (t - pdetail::conv_linear(ker, t)), 0.0);
  };
  p.u0 = [](const Vec&) { return Eigen::Vector2d::Zero(); };
  p.v0 = [](const Vec& x) { return Eigen::Vector2d(x.x(), 0.0); };
  p.exact = ExactSolution{
      [](const Vec& x, double t) { return Eigen::Vector2d(x.x() * t, 0.0); },
      [](const Vec& x, double) { return Eigen::Vector2d(x.x(), 0.0); }};
  return p;
}

// ---------------------------------------------------------------------------
// Smooth manufactured solution for convergence studies.
//   1D: u1 = sin(pi x) sin t on (0,1), Dirichlet at x=0, Neumann at x=1.
//   2D: u1 = (sin(pi x) sin(pi y) sin t, 0) on the unit square, Dirichlet on
//       the left edge, consistent tractions elsewhere.
// ---------------------------------------------------------------------------
inline ProblemSpec mms_smooth(int dim, KernelSpec kernel,
                              ElasticParams elast = {0.3, 0.4}, double T = 1.0) {
  ProblemSpec p;
  p.name = dim == 1 ? "mms_smooth" : "mms_smooth2d";
  p.dim = dim;
  p.T = T;
  p.elast = elast;
  p.kernel = std::move(kernel);
  const KernelSpec ker = p.kernel;
  const double pi = M_PI;

  if (dim == 1) {
    const double E = elast.modulus_1d();
    p.side_tags = {BTag::Dirichlet, BTag::Neumann, BTag::None, BTag::None};
    p.f = [E, ker, pi](const Vec& x, double t) {
      const double tf = std::sin(t) - pdetail::conv_sin(ker, t);
      return Eigen::Vector2d(
          std::sin(pi * x.x()) * (-std::sin(t) + E * pi * pi * tf), 0.0);
    };
    p.g = [E, ker, pi](const Vec&, double t) {
      // sigma . n at x = 1: E pi cos(pi) = -E pi, times the memory factor
      const double tf = std::sin(t) - pdetail::conv_sin(ker, t);
      return Eigen::Vector2d(-E * pi * tf, 0.0);
    };
    p.u0 = [](const Vec&) { return Eigen::Vector2d::Zero(); };
    p.v0 = [pi](const Vec& x) {
      return Eigen::Vector2d(std::sin(pi * x.x()), 0.0);
    };
    p.exact = ExactSolution{
        [pi](const Vec& x, double t) {
          return Eigen::Vector2d(std::sin(pi * x.x()) * std::sin(t), 0.0);
        },
        [pi](const Vec& x, double t) {
          return Eigen::Vector2d(std::sin(pi * x.x()) * std::cos(t), 0.0);
        }};
  } else {
    const double mu = elast.mu0, la = elast.lambda0;
    p.side_tags = {BTag::Dirichlet, BTag::Neumann, BTag::Neumann, BTag::Neumann};
    p.f = [mu, la, ker, pi](const Vec& x, double t) {
      const double tf = std::sin(t) - pdetail::conv_sin(ker, t);
      const double phi = std::sin(pi * x.x()) * std::sin(pi * x.y());
      const double cxy = std::cos(pi * x.x()) * std::cos(pi * x.y());
      return Eigen::Vector2d(
          -phi * std::sin(t) + (3.0 * mu + la) * pi * pi * phi * tf,
          -(mu + la) * pi * pi * cxy * tf);
    };
    p.g = [mu, la, ker, pi](const Vec& x, double t) {
      const double tf = std::sin(t) - pdetail::conv_sin(ker, t);
      // side classification; corners are never quadrature points
      if (std::abs(x.x() - 1.0) < 1e-10) {  // right edge, n = (1, 0)
        return Eigen::Vector2d(
            -(2.0 * mu + la) * pi * std::sin(pi * x.y()) * tf, 0.0);
      }
      if (std::abs(x.y()) < 1e-10) {  // bottom edge, n = (0, -1)
        return Eigen::Vector2d(-mu * pi * std::sin(pi * x.x()) * tf, 0.0);
      }
      if (std::abs(x.y() - 1.0) < 1e-10) {  // top edge, n = (0, 1)
        return Eigen::Vector2d(-mu * pi * std::sin(pi * x.x()) * tf, 0.0);
      }
      return Eigen::Vector2d(0.0, 0.0);
    };
    p.u0 = [](const Vec&) { return Eigen::Vector2d::Zero(); };
    p.v0 = [pi](const Vec& x) {
      return Eigen::Vector2d(std::sin(pi * x.x()) * std::sin(pi * x.y()), 0.0);
    };
    p.exact = ExactSolution{
        [pi](const Vec& x, double t) {
          return Eigen::Vector2d(
              std::sin(pi * x.x()) * std::sin(pi * x.y()) * std::sin(t), 0.0);
        },
        [pi](const Vec& x, double t) {
          return Eigen::Vector2d(
              std::sin(pi * x.x()) * std::sin(pi * x.y()) * std::cos(t), 0.0);
        }};
  }
  return p;
}

// ---------------------------------------------------------------------------
// Adaptivity demo: clamped 2D bar with a traction pulse localized on part of
// the right edge. No exact solution.
// ---------------------------------------------------------------------------
inline ProblemSpec scenario_bar(double pulse_amplitude = 1.0, double T = 1.0,
                                std::function<double(double)> amplitude_of_t = {}) {
  ProblemSpec p;
  p.name = "scenario_bar";
  p.dim = 2;
  p.T = T;
  p.x1 = 2.0;
  p.elast = {1.0, 1.0};
  p.kernel = KernelSpec::prony({{0.5, 1.0}});
  validate_kernel(p.kernel, 100.0);
  p.side_tags = {BTag::Dirichlet, BTag::Neumann, BTag::Neumann, BTag::Neumann};
  p.f = pdetail::zero_fn;
  auto amp = amplitude_of_t
                 ? amplitude_of_t
                 : std::function<double(double)>(
                       [T](double t) { return sqr(std::sin(M_PI * t / T)); });
  p.g = [pulse_amplitude, amp](const Vec& x, double t) {
    if (std::abs(x.x() - 2.0) > 1e-10) return Eigen::Vector2d(0.0, 0.0);
    const double prof = std::exp(-sqr((x.y() - 0.5) / 0.15));
    return Eigen::Vector2d(pulse_amplitude * amp(t) * prof, 0.0);
  };
  p.u0 = [](const Vec&) { return Eigen::Vector2d::Zero(); };
  p.v0 = [](const Vec&) { return Eigen::Vector2d::Zero(); };
  return p;
}

}  // namespace viscofem
