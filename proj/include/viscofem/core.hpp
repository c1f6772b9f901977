// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace viscofem {

using Vec = Eigen::Vector2d;

// ---------------------------------------------------------------------------
// Error types. Every failure mode raised by the library derives from Error so
// callers can catch one base type; the concrete type carries the contract name.
// ---------------------------------------------------------------------------
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define VISCOFEM_ERROR_TYPE(Name)                                   \
  struct Name : Error {                                             \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

VISCOFEM_ERROR_TYPE(NonContractiveKernel);
VISCOFEM_ERROR_TYPE(NonPositiveParameter);
VISCOFEM_ERROR_TYPE(QuadratureFailure);
VISCOFEM_ERROR_TYPE(NonContiguousSlab);
VISCOFEM_ERROR_TYPE(KernelNotSquareIntegrable);
VISCOFEM_ERROR_TYPE(UnrelatedMeshes);
VISCOFEM_ERROR_TYPE(DegenerateCell);
VISCOFEM_ERROR_TYPE(UnsupportedExponent);
VISCOFEM_ERROR_TYPE(SingularMass);
VISCOFEM_ERROR_TYPE(IncompatibleSlabbing);
VISCOFEM_ERROR_TYPE(LinearSolveFailure);
VISCOFEM_ERROR_TYPE(MeshFamilyViolation);
VISCOFEM_ERROR_TYPE(IncompatibleDualDiscretization);
VISCOFEM_ERROR_TYPE(ConfigError);

#undef VISCOFEM_ERROR_TYPE

// ---------------------------------------------------------------------------
// Gauss-Legendre rules on [-1,1], computed once per order by Newton iteration
// on the Legendre recurrence and cached. Deterministic to machine precision.
// ---------------------------------------------------------------------------
struct QuadRule {
  std::vector<double> x, w;  // nodes and weights
};

inline const QuadRule& gauss_legendre(int n) {
  static std::map<int, QuadRule> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  QuadRule r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      pp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    r.x[i] = -x;
    r.x[n - 1 - i] = x;
    r.w[i] = 2.0 / ((1.0 - x * x) * pp * pp);
    r.w[n - 1 - i] = r.w[i];
  }
  return cache.emplace(n, std::move(r)).first->second;
}

// Fixed-order Gauss integral of f over [a,b].
template <class F>
double integrate_gauss(F&& f, double a, double b, int n) {
  const QuadRule& r = gauss_legendre(n);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += r.w[i] * f(mid + half * r.x[i]);
  return s * half;
}

namespace detail {
template <class F>
double adaptive_rec(F& f, double a, double b, double whole, double rtol,
                    double atol, double width0, int depth) {
  const double m = 0.5 * (a + b);
  const double left = integrate_gauss(f, a, m, 10);
  const double right = integrate_gauss(f, m, b, 10);
  const double err = std::abs(left + right - whole);
  if (err <= atol || err <= rtol * std::abs(left + right) ||
      (b - a) < 1e-14 * width0)
    return left + right;
  if (depth <= 0)
    throw QuadratureFailure("adaptive quadrature did not converge on [" +
                            std::to_string(a) + "," + std::to_string(b) + "]");
  return adaptive_rec(f, a, m, left, rtol, atol * 0.6, width0, depth - 1) +
         adaptive_rec(f, m, b, right, rtol, atol * 0.6, width0, depth - 1);
}
}  // namespace detail

// Adaptive Gauss quadrature by interval halving (G10 refined against G10+G10).
template <class F>
double integrate_adaptive(F&& f, double a, double b, double rtol = 1e-11,
                          double atol = 1e-15, int max_depth = 48) {
  if (!(b > a)) return 0.0;
  double whole = integrate_gauss(f, a, b, 10);
  return detail::adaptive_rec(f, a, b, whole, rtol,
                              std::max(atol, rtol * std::abs(whole)), b - a,
                              max_depth);
}

// Composite fixed Gauss over [a,b] split into `pieces` equal parts.
template <class F>
double integrate_composite(F&& f, double a, double b, int pieces, int order) {
  double s = 0.0;
  const double h = (b - a) / pieces;
  for (int i = 0; i < pieces; ++i)
    s += integrate_gauss(f, a + i * h, a + (i + 1) * h, order);
  return s;
}

// Geometrically graded composite Gauss toward `a` (for integrands with an
// algebraic endpoint singularity in a derivative, e.g. t^rho behavior).
template <class F>
double integrate_graded_left(F&& f, double a, double b, int pieces, int order) {
  double s = 0.0;
  double hi = b;
  const double ratio = 0.18;
  for (int i = 0; i < pieces - 1; ++i) {
    double lo = a + (hi - a) * ratio;
    s += integrate_gauss(f, lo, hi, order);
    hi = lo;
  }
  s += integrate_gauss(f, a, hi, order);
  return s;
}

// Quadrature points for triangles in barycentric coordinates.
struct TriRule {
  std::vector<std::array<double, 3>> bary;
  std::vector<double> w;  // weights summing to 1 (multiply by area)
};

// Degree-5 exact rule (7 points).
inline const TriRule& tri_rule_d5() {
  static const TriRule r = [] {
    TriRule q;
    const double a1 = 0.0597158717897698, b1 = 0.4701420641051151;
    const double a2 = 0.7974269853530873, b2 = 0.1012865073234563;
    const double w0 = 0.225, w1 = 0.1323941527885062, w2 = 0.1259391805448271;
    q.bary = {{1.0 / 3, 1.0 / 3, 1.0 / 3},
              {a1, b1, b1}, {b1, a1, b1}, {b1, b1, a1},
              {a2, b2, b2}, {b2, a2, b2}, {b2, b2, a2}};
    q.w = {w0, w1, w1, w1, w2, w2, w2};
    return q;
  }();
  return r;
}

// Degree-2 exact rule (edge midpoints).
inline const TriRule& tri_rule_d2() {
  static const TriRule r = [] {
    TriRule q;
    q.bary = {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}};
    q.w = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    return q;
  }();
  return r;
}

inline double sqr(double v) { return v * v; }

// Observed convergence order from consecutive errors under halving.
inline double observed_order(double err_coarse, double err_fine) {
  if (err_fine <= 0.0 || err_coarse <= 0.0) return 0.0;
  return std::log2(err_coarse / err_fine);
}

}  // namespace viscofem
