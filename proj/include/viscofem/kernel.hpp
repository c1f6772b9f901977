// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "viscofem/core.hpp"

namespace viscofem {

// ---------------------------------------------------------------------------
// Memory kernels. Two families:
//   Prony:    K(t) = sum_i gamma_i exp(-lambda_i t)
//   PowerLaw: K(t) = c t^(rho-1) exp(-eta t)   (tempered; weakly singular for rho<1)
// plus the zero kernel. Contractivity requires the L1 mass kappa < 1.
// ---------------------------------------------------------------------------

enum class KernelType { Zero, Prony, PowerLaw };

struct PronyTerm {
  double gamma;   // weight > 0
  double lambda;  // decay rate > 0
};

namespace kdetail {

// P_m(x) = \int_0^1 e^{-x v} v^m dv, m = 0,1,2; series for small x.
inline double Pm(int m, double x) {
  if (std::abs(x) < 0.5) {
    double s = 0.0, term = 1.0;
    for (int j = 0; j < 24; ++j) {
      s += term / (j + m + 1);
      term *= -x / (j + 1);
      if (std::abs(term) < 1e-18) break;
    }
    return s;
  }
  const double ex = std::exp(-x);
  switch (m) {
    case 0: return (1.0 - ex) / x;
    case 1: return (1.0 - ex * (1.0 + x)) / (x * x);
    default: return (2.0 - ex * (x * x + 2.0 * x + 2.0)) / (x * x * x);
  }
}

// em_m(lam, tau) = \int_0^tau e^{-lam u} u^m du = tau^{m+1} P_m(lam*tau)
inline double em(int m, double lam, double tau) {
  return std::pow(tau, m + 1) * Pm(m, lam * tau);
}

// Compound primitives for the diagonal double moments (x = lam*k):
//   C0 = (x-1+e^-x)/x^2,               c0 = k^2 C0 = \int_0^k (1-e^{-lam t})/lam dt
//   C1 = (1/2 - P1)/x,                 c1 = k^3 C1 = \int_0^k t em_0 dt / ...
//   C2 = (1/3 - P2)/x
//   C3 = (C0 - P1)/x, C4 = (C1 - P2)/x
// all with cancellation-free series below the switch point.
inline double C0f(double x) {
  if (std::abs(x) < 0.5) {
    double s = 0.0, fact = 2.0;  // (j+2)!
    double pw = 1.0;
    for (int j = 0; j < 22; ++j) {
      s += pw / fact;
      pw *= -x;
      fact *= (j + 3);
    }
    return s;
  }
  return (x - 1.0 + std::exp(-x)) / (x * x);
}
inline double C1f(double x) {
  if (std::abs(x) < 0.5) {
    double s = 0.0, fact = 1.0;  // (j+1)!
    double pw = 1.0;
    for (int j = 0; j < 22; ++j) {
      s += pw / (fact * (j + 3));
      pw *= -x;
      fact *= (j + 2);
    }
    return s;
  }
  return (0.5 - Pm(1, x)) / x;
}
inline double C2f(double x) {
  if (std::abs(x) < 0.5) {
    double s = 0.0, fact = 1.0;
    double pw = 1.0;
    for (int j = 0; j < 22; ++j) {
      s += pw / (fact * (j + 4));
      pw *= -x;
      fact *= (j + 2);
    }
    return s;
  }
  return (1.0 / 3.0 - Pm(2, x)) / x;
}
inline double C3f(double x) {
  if (std::abs(x) < 0.5) {
    double s = 0.0, fact = 6.0;  // (j+3)!
    double pw = 1.0;
    for (int j = 0; j < 22; ++j) {
      s += pw * (j + 1) / fact;
      pw *= -x;
      fact *= (j + 4);
    }
    return s;
  }
  return (C0f(x) - Pm(1, x)) / x;
}
inline double C4f(double x) {
  if (std::abs(x) < 0.5) {
    double s = 0.0, fact = 2.0;  // (j+2)!
    double pw = 1.0;
    for (int j = 0; j < 22; ++j) {
      s += pw * (j + 1) / (fact * (j + 4));
      pw *= -x;
      fact *= (j + 3);
    }
    return s;
  }
  return (C1f(x) - Pm(2, x)) / x;
}

// glow(p, eta, u) = \int_0^u v^{p-1} e^{-eta v} dv  (p > 0, eta >= 0, u >= 0)
inline double glow(double p, double eta, double u) {
  if (u <= 0.0) return 0.0;
  const double x = eta * u;
  if (x < 1e-7) {
    // series: u^p (1/p - x/(p+1) + x^2/(2(p+2)) - x^3/(6(p+3)))
    return std::pow(u, p) *
           (1.0 / p - x / (p + 1.0) + x * x / (2.0 * (p + 2.0)) -
            x * x * x / (6.0 * (p + 3.0)));
  }
  return boost::math::tgamma_lower(p, x) / std::pow(eta, p);
}

}  // namespace kdetail

class KernelSpec {
 public:
  static KernelSpec zero() {
    KernelSpec k;
    k.type_ = KernelType::Zero;
    k.kappa_ = 0.0;
    k.validated_ = true;
    return k;
  }
  static KernelSpec prony(std::vector<PronyTerm> terms) {
    KernelSpec k;
    k.type_ = KernelType::Prony;
    k.terms_ = std::move(terms);
    return k;
  }
  static KernelSpec power_law(double c, double rho, double eta) {
    KernelSpec k;
    k.type_ = KernelType::PowerLaw;
    k.c_ = c;
    k.rho_ = rho;
    k.eta_ = eta;
    return k;
  }

  KernelType type() const { return type_; }
  bool is_zero() const { return type_ == KernelType::Zero; }
  bool is_prony() const { return type_ == KernelType::Prony; }
  const std::vector<PronyTerm>& terms() const { return terms_; }
  double c() const { return c_; }
  double rho() const { return rho_; }
  double eta() const { return eta_; }
  double kappa() const { return kappa_; }
  double kappa_horizon() const { return kappa_horizon_; }
  bool validated() const { return validated_; }

  bool square_integrable() const {
    return type_ != KernelType::PowerLaw || rho_ > 0.5;
  }

  // K(tau); unbounded at 0+ for the singular power law.
  double value(double tau) const {
    switch (type_) {
      case KernelType::Zero:
        return 0.0;
      case KernelType::Prony: {
        double s = 0.0;
        for (const auto& t : terms_) s += t.gamma * std::exp(-t.lambda * tau);
        return s;
      }
      case KernelType::PowerLaw:
        return c_ * std::pow(tau, rho_ - 1.0) * std::exp(-eta_ * tau);
    }
    return 0.0;
  }

  // \int_0^tau K(u) du, exact.
  double mass_to(double tau) const {
    if (tau <= 0.0) return 0.0;
    switch (type_) {
      case KernelType::Zero:
        return 0.0;
      case KernelType::Prony: {
        double s = 0.0;
        for (const auto& t : terms_)
          s += t.gamma * kdetail::em(0, t.lambda, tau);
        return s;
      }
      case KernelType::PowerLaw:
        return c_ * kdetail::glow(rho_, eta_, tau);
    }
    return 0.0;
  }

  // \int_0^tau u K(u) du, exact.
  double first_moment_to(double tau) const {
    if (tau <= 0.0) return 0.0;
    switch (type_) {
      case KernelType::Zero:
        return 0.0;
      case KernelType::Prony: {
        double s = 0.0;
        for (const auto& t : terms_)
          s += t.gamma * kdetail::em(1, t.lambda, tau);
        return s;
      }
      case KernelType::PowerLaw:
        return c_ * kdetail::glow(rho_ + 1.0, eta_, tau);
    }
    return 0.0;
  }

  // \int_0^tau K(u)^2 du; requires square integrability.
  double sq_mass_to(double tau) const {
    if (!square_integrable())
      throw KernelNotSquareIntegrable(
          "L2 kernel factor requested but rho <= 1/2");
    if (tau <= 0.0) return 0.0;
    switch (type_) {
      case KernelType::Zero:
        return 0.0;
      case KernelType::Prony: {
        double s = 0.0;
        for (const auto& ti : terms_)
          for (const auto& tk : terms_)
            s += ti.gamma * tk.gamma *
                 kdetail::em(0, ti.lambda + tk.lambda, tau);
        return s;
      }
      case KernelType::PowerLaw:
        return c_ * c_ * kdetail::glow(2.0 * rho_ - 1.0, 2.0 * eta_, tau);
    }
    return 0.0;
  }

  friend double validate_kernel(KernelSpec& spec, double horizon);

 private:
  KernelType type_ = KernelType::Zero;
  std::vector<PronyTerm> terms_;
  double c_ = 0.0, rho_ = 1.0, eta_ = 0.0;
  double kappa_ = 0.0;          // L1(R+) mass (horizon mass when eta=0 power law)
  double kappa_horizon_ = 0.0;  // L1(0,horizon) mass
  bool validated_ = false;
};

// Validates parameters and the contractivity condition kappa < 1.
// Returns the analytic kappa and caches it (plus the finite-horizon mass).
inline double validate_kernel(KernelSpec& spec, double horizon) {
  switch (spec.type_) {
    case KernelType::Zero:
      spec.kappa_ = spec.kappa_horizon_ = 0.0;
      break;
    case KernelType::Prony: {
      double kap = 0.0;
      for (const auto& t : spec.terms_) {
        if (t.gamma <= 0.0 || t.lambda <= 0.0)
          throw NonPositiveParameter("Prony term requires gamma, lambda > 0");
        kap += t.gamma / t.lambda;
      }
      spec.kappa_ = kap;
      spec.kappa_horizon_ = spec.mass_to(horizon);
      break;
    }
    case KernelType::PowerLaw: {
      if (spec.c_ <= 0.0) throw NonPositiveParameter("power law requires c > 0");
      if (spec.rho_ <= 0.0 || spec.rho_ > 1.0)
        throw NonPositiveParameter("power law requires rho in (0,1]");
      if (spec.eta_ < 0.0) throw NonPositiveParameter("power law requires eta >= 0");
      if (spec.eta_ > 0.0)
        spec.kappa_ = spec.c_ * std::tgamma(spec.rho_) / std::pow(spec.eta_, spec.rho_);
      else
        spec.kappa_ = spec.c_ * std::pow(horizon, spec.rho_) / spec.rho_;  // finite-horizon mass
      spec.kappa_horizon_ = spec.mass_to(horizon);
      break;
    }
  }
  if (spec.kappa_ >= 1.0)
    throw NonContractiveKernel("kappa = " + std::to_string(spec.kappa_) +
                               " >= 1");
  spec.validated_ = true;
  return spec.kappa_;
}

// ---------------------------------------------------------------------------
// Kernel moments against the linear nodal shapes of a slab [a,b]:
//   hat_left(s) = (b-s)/k (value 1 at a), hat_right(s) = (s-a)/k (value 1 at b).
// ---------------------------------------------------------------------------

struct SegmentVals {
  double left = 0.0, right = 0.0;
  SegmentVals operator+(const SegmentVals& o) const { return {left + o.left, right + o.right}; }
  SegmentVals& operator+=(const SegmentVals& o) { left += o.left; right += o.right; return *this; }
  SegmentVals operator*(double s) const { return {left * s, right * s}; }
};

// \int_a^{min(b,t)} K(t-s) hat_q(s) ds; zero when t <= a.
inline SegmentVals moment_forward(const KernelSpec& ker, double a, double b,
                                  double t) {
  const double k = b - a;
  SegmentVals out;
  if (t <= a || ker.is_zero() || k <= 0.0) return out;
  switch (ker.type()) {
    case KernelType::Zero:
      break;
    case KernelType::Prony: {
      for (const auto& tm : ker.terms()) {
        const double g = tm.gamma, lam = tm.lambda;
        if (t <= b) {
          const double tau = t - a;
          const double e0 = kdetail::em(0, lam, tau), e1 = kdetail::em(1, lam, tau);
          out.left += g * ((b - t) * e0 + e1) / k;
          out.right += g * ((t - a) * e0 - e1) / k;
        } else {
          const double pre = g * std::exp(-lam * (t - b));
          const double e0 = kdetail::em(0, lam, k), e1 = kdetail::em(1, lam, k);
          out.left += pre * e1 / k;
          out.right += pre * (k * e0 - e1) / k;
        }
      }
      break;
    }
    case KernelType::PowerLaw: {
      const double c = ker.c(), rho = ker.rho(), eta = ker.eta();
      if (t <= b) {
        const double tau = t - a;
        const double g0 = kdetail::glow(rho, eta, tau);
        const double g1 = kdetail::glow(rho + 1.0, eta, tau);
        out.left = c * ((b - t) * g0 + g1) / k;
        out.right = c * ((t - a) * g0 - g1) / k;
      } else {
        const double u1 = t - b, u2 = t - a;
        const double d0 = kdetail::glow(rho, eta, u2) - kdetail::glow(rho, eta, u1);
        const double d1 = kdetail::glow(rho + 1.0, eta, u2) - kdetail::glow(rho + 1.0, eta, u1);
        out.left = c * (d1 - u1 * d0) / k;
        out.right = c * (u2 * d0 - d1) / k;
      }
      break;
    }
  }
  return out;
}

// \int_{max(a,t)}^{b} K(s-t) hat_q(s) ds; zero when t >= b.
inline SegmentVals moment_reversed(const KernelSpec& ker, double a, double b,
                                   double t) {
  const double k = b - a;
  SegmentVals out;
  if (t >= b || ker.is_zero() || k <= 0.0) return out;
  switch (ker.type()) {
    case KernelType::Zero:
      break;
    case KernelType::Prony: {
      for (const auto& tm : ker.terms()) {
        const double g = tm.gamma, lam = tm.lambda;
        if (t >= a) {
          const double tau = b - t;
          const double e0 = kdetail::em(0, lam, tau), e1 = kdetail::em(1, lam, tau);
          out.left += g * (tau * e0 - e1) / k;
          out.right += g * ((t - a) * e0 + e1) / k;
        } else {
          const double pre = g * std::exp(-lam * (a - t));
          const double e0 = kdetail::em(0, lam, k), e1 = kdetail::em(1, lam, k);
          out.left += pre * (k * e0 - e1) / k;
          out.right += pre * e1 / k;
        }
      }
      break;
    }
    case KernelType::PowerLaw: {
      const double c = ker.c(), rho = ker.rho(), eta = ker.eta();
      if (t >= a) {
        const double tau = b - t;
        const double g0 = kdetail::glow(rho, eta, tau);
        const double g1 = kdetail::glow(rho + 1.0, eta, tau);
        out.left = c * (tau * g0 - g1) / k;
        out.right = c * ((t - a) * g0 + g1) / k;
      } else {
        const double w1 = a - t, w2 = b - t;
        const double d0 = kdetail::glow(rho, eta, w2) - kdetail::glow(rho, eta, w1);
        const double d1 = kdetail::glow(rho + 1.0, eta, w2) - kdetail::glow(rho + 1.0, eta, w1);
        out.left = c * (w2 * d0 - d1) / k;
        out.right = c * (d1 - w1 * d0) / k;
      }
      break;
    }
  }
  return out;
}

// t-shapes for the double moments over the receiving slab [c,d].
enum class TShape { One, Left, Right };

// \int_c^d shape_p(t) * moment_forward([a,b], t) dt with either [a,b] == [c,d]
// (diagonal) or b <= c (strictly earlier source slab).
inline SegmentVals double_moment(const KernelSpec& ker, double a, double b,
                                 double c, double d, TShape p) {
  SegmentVals out;
  if (ker.is_zero()) return out;
  const double k = b - a, kn = d - c;
  if (k <= 0.0 || kn <= 0.0) return out;
  const bool diagonal = (a == c && b == d);
  if (!diagonal && b > c + 1e-14 * std::max(1.0, std::abs(c)))
    throw IncompatibleSlabbing("double_moment requires identical or disjoint slabs");

  switch (ker.type()) {
    case KernelType::Zero:
      break;
    case KernelType::Prony: {
      for (const auto& tm : ker.terms()) {
        const double g = tm.gamma, lam = tm.lambda;
        if (diagonal) {
          const double x = lam * k;
          const double c0 = k * k * kdetail::C0f(x);
          const double c1 = k * k * k * kdetail::C1f(x);
          const double c2 = k * k * k * k * kdetail::C2f(x);
          const double c3 = k * k * k * kdetail::C3f(x);
          const double c4 = k * k * k * k * kdetail::C4f(x);
          double wl = 0.0, wr = 0.0;
          switch (p) {
            case TShape::One:
              wl = (k * c0 - c1 + c3) / k;
              wr = (c1 - c3) / k;
              break;
            case TShape::Left:
              wl = (k * k * c0 - 2.0 * k * c1 + c2 + k * c3 - c4) / (k * k);
              wr = (k * c1 - c2 - k * c3 + c4) / (k * k);
              break;
            case TShape::Right:
              wl = (k * c1 - c2 + c4) / (k * k);
              wr = (c2 - c4) / (k * k);
              break;
          }
          out.left += g * wl;
          out.right += g * wr;
        } else {
          const double e0k = kdetail::em(0, lam, k), e1k = kdetail::em(1, lam, k);
          const double mFL = e1k / k, mFR = (k * e0k - e1k) / k;
          const double pre = std::exp(-lam * (c - b));
          const double e0n = kdetail::em(0, lam, kn), e1n = kdetail::em(1, lam, kn);
          double tfac = 0.0;
          switch (p) {
            case TShape::One: tfac = e0n; break;
            case TShape::Left: tfac = (kn * e0n - e1n) / kn; break;
            case TShape::Right: tfac = e1n / kn; break;
          }
          out.left += g * pre * tfac * mFL;
          out.right += g * pre * tfac * mFR;
        }
      }
      break;
    }
    case KernelType::PowerLaw: {
      const double cc = ker.c(), rho = ker.rho(), eta = ker.eta();
      if (eta == 0.0) {
        if (diagonal) {
          // Beta-type closed forms: I(i,j) = \int_0^k (k-tau)^i tau^(rho+j) dtau
          auto I = [&](int i, int j) {
            const double p1 = i + 1, q1 = rho + j + 1;
            // k^(p1+q1-1) * B(p1, q1); B via the rational expression for integer p1
            double B;
            if (i == 0) B = 1.0 / q1;
            else if (i == 1) B = 1.0 / (q1 * (q1 + 1.0));
            else B = 2.0 / (q1 * (q1 + 1.0) * (q1 + 2.0));
            return std::pow(k, p1 + q1 - 1.0) * B;
          };
          double wl = 0.0, wr = 0.0;
          switch (p) {
            case TShape::One:
              wl = (I(1, 0) / rho + I(0, 1) / (rho + 1.0)) / k;
              wr = (I(0, 1) / rho - I(0, 1) / (rho + 1.0)) / k;
              break;
            case TShape::Left:
              wl = (I(2, 0) / rho + I(1, 1) / (rho + 1.0)) / (k * k);
              wr = (I(1, 1) / rho - I(1, 1) / (rho + 1.0)) / (k * k);
              break;
            case TShape::Right:
              wl = (I(1, 1) / rho + I(0, 2) / (rho + 1.0)) / (k * k);
              wr = (I(0, 2) / rho - I(0, 2) / (rho + 1.0)) / (k * k);
              break;
          }
          out.left = cc * wl;
          out.right = cc * wr;
        } else {
          // off-diagonal closed form: all terms are power integrals
          //   A_m(x) = \int_c^d (t-x)^(rho+m) dt
          auto A = [&](int m, double x) {
            const double e = rho + m + 1.0;
            return (std::pow(d - x, e) - std::pow(std::max(c - x, 0.0), e)) / e;
          };
          auto B1 = [&](double x) { return A(2, x) + x * A(1, x); };  // \int t (t-x)^(rho+1)
          const double r1 = 1.0 / (rho * (rho + 1.0));
          // \int mF_L dt and \int t mF_L dt
          const double T0L =
              (A(1, a) / (rho + 1.0) + A(1, b) * r1 - (A(1, a) - k * A(0, a)) / rho) / k;
          const double T1L =
              (B1(a) / (rho + 1.0) + B1(b) * r1 -
               (A(2, a) + (a - k) * A(1, a) - a * k * A(0, a)) / rho) / k;
          const double T0R =
              (A(1, a) * r1 + A(1, b) / (rho + 1.0) - (A(1, b) + k * A(0, b)) / rho) / k;
          const double T1R =
              (B1(a) * r1 + B1(b) / (rho + 1.0) -
               (A(2, b) + (b + k) * A(1, b) + b * k * A(0, b)) / rho) / k;
          double alpha = 1.0, beta = 0.0;
          if (p == TShape::Left) { alpha = d / kn; beta = -1.0 / kn; }
          if (p == TShape::Right) { alpha = -c / kn; beta = 1.0 / kn; }
          out.left = cc * (alpha * T0L + beta * T1L);
          out.right = cc * (alpha * T0R + beta * T1R);
        }
      } else {
        // tempered: exact-in-s single moments, adaptive outer t integration
        auto shape = [&](double t) {
          switch (p) {
            case TShape::One: return 1.0;
            case TShape::Left: return (d - t) / kn;
            default: return (t - c) / kn;
          }
        };
        auto fl = [&](double t) { return shape(t) * moment_forward(ker, a, b, t).left; };
        auto fr = [&](double t) { return shape(t) * moment_forward(ker, a, b, t).right; };
        if (diagonal || (std::abs(c - b) < 1e-13 * std::max(1.0, std::abs(b)) && rho < 1.0)) {
          out.left = integrate_graded_left(fl, c, d, 12, 10);
          out.right = integrate_graded_left(fr, c, d, 12, 10);
        } else {
          out.left = integrate_adaptive(fl, c, d, 1e-12);
          out.right = integrate_adaptive(fr, c, d, 1e-12);
        }
      }
      break;
    }
  }
  return out;
}

// The convolution weights of the slab system: both values >= 0.
inline SegmentVals slab_weights(const KernelSpec& ker, double slab_n_a,
                                double slab_n_b, double slab_j_a,
                                double slab_j_b) {
  if (slab_j_a > slab_n_b)
    throw IncompatibleSlabbing("source slab starts after receiving slab ends");
  return double_moment(ker, slab_j_a, slab_j_b, slab_n_a, slab_n_b, TShape::One);
}

// ---------------------------------------------------------------------------
// Piecewise-linear paths in time (per-segment endpoint values; jumps at nodes
// are allowed) and their kernel convolutions.
// ---------------------------------------------------------------------------
template <class V>
struct PiecewisePath {
  std::vector<double> nodes;          // t_0 < t_1 < ... < t_M
  std::vector<std::pair<V, V>> segs;  // (value at left end, value at right end)

  int n_segments() const { return static_cast<int>(segs.size()); }
  V eval(double t) const {
    const int m = n_segments();
    int j = int(std::upper_bound(nodes.begin(), nodes.end(), t) - nodes.begin()) - 1;
    j = std::clamp(j, 0, m - 1);
    const double a = nodes[j], b = nodes[j + 1];
    const double xi = (t - a) / (b - a);
    return segs[j].first * (1.0 - xi) + segs[j].second * xi;
  }
};

using ScalarPath = PiecewisePath<double>;

// (K*y)^j(t) = \int_{t_{j-1}}^{min(t_j, t)} K(t-s) y(s) ds for segment j (0-based).
template <class V>
V history_piece(const KernelSpec& ker, const PiecewisePath<V>& path, int j,
                double t) {
  const double a = path.nodes[j], b = path.nodes[j + 1];
  const SegmentVals m = moment_forward(ker, a, b, t);
  return path.segs[j].first * m.left + path.segs[j].second * m.right;
}

// \int_0^t K(t-s) y(s) ds (sum of per-segment pieces).
template <class V>
V pointwise_history(const KernelSpec& ker, const PiecewisePath<V>& path,
                    double t) {
  V acc = path.segs.empty() ? V() : V(path.segs[0].first * 0.0);
  for (int j = 0; j < path.n_segments(); ++j) {
    if (path.nodes[j] >= t) break;
    acc += history_piece(ker, path, j, t);
  }
  return acc;
}

// \int_{max(t, t_{j-1})}^{t_j} K(s-t) y(s) ds for segment j.
template <class V>
V reversed_piece(const KernelSpec& ker, const PiecewisePath<V>& path, int j,
                 double t) {
  const double a = path.nodes[j], b = path.nodes[j + 1];
  const SegmentVals m = moment_reversed(ker, a, b, t);
  return path.segs[j].first * m.left + path.segs[j].second * m.right;
}

// \int_t^T K(s-t) y(s) ds.
template <class V>
V reversed_tail(const KernelSpec& ker, const PiecewisePath<V>& path, double t) {
  V acc = path.segs.empty() ? V() : V(path.segs[0].first * 0.0);
  for (int j = 0; j < path.n_segments(); ++j) {
    if (path.nodes[j + 1] <= t) continue;
    acc += reversed_piece(ker, path, j, t);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Prony history recurrence: H_i(t_n) = \int_0^{t_n} e^{-lambda_i (t_n-s)} y(s) ds
// advanced slab by slab with exact exponential moments.
// ---------------------------------------------------------------------------
struct PronyHistoryState {
  std::vector<Eigen::VectorXd> H;  // one accumulator per Prony term
  double time = 0.0;

  static PronyHistoryState make(const KernelSpec& ker, Eigen::Index n,
                                double t0 = 0.0) {
    PronyHistoryState st;
    st.H.assign(ker.terms().size(), Eigen::VectorXd::Zero(n));
    st.time = t0;
    return st;
  }

  // Advance over [a,b] where y is linear with endpoint vectors ya, yb.
  void advance(const KernelSpec& ker, double a, double b,
               const Eigen::VectorXd& ya, const Eigen::VectorXd& yb) {
    if (std::abs(a - time) > 1e-12 * std::max(1.0, std::abs(time)))
      throw NonContiguousSlab("history advance must start at the stored time");
    const double k = b - a;
    for (std::size_t i = 0; i < ker.terms().size(); ++i) {
      const double lam = ker.terms()[i].lambda;
      const double e0 = kdetail::em(0, lam, k), e1 = kdetail::em(1, lam, k);
      // weights of \int_a^b e^{-lam (b-s)} hat(s) ds
      const double wa = e1 / k, wb = (k * e0 - e1) / k;
      H[i] = std::exp(-lam * k) * H[i] + wa * ya + wb * yb;
    }
    time = b;
  }

  // sum_i gamma_i H_i = \int_0^t K(t-s) y(s) ds
  Eigen::VectorXd weighted(const KernelSpec& ker) const {
    Eigen::VectorXd acc;
    for (std::size_t i = 0; i < H.size(); ++i) {
      if (i == 0)
        acc = ker.terms()[i].gamma * H[i];
      else
        acc += ker.terms()[i].gamma * H[i];
    }
    if (H.empty()) acc = Eigen::VectorXd();
    return acc;
  }
};

// ---------------------------------------------------------------------------
// Tail factors of the global estimate:
//   K_nT    = (\int_t^T K(s-t) ds)^{1/2}
//   K_nj    = (\int_{max(t, t_{j-1})}^{t_j} K(s-t) ds)^{1/2}
//   K_nT_L2 = (\int_t^T K(s-t)^2 ds)^{1/2}  (requires K in L2 locally)
// ---------------------------------------------------------------------------
struct TailFactors {
  double K_nT = 0.0, K_nj = 0.0, K_nT_L2 = 0.0;
};

inline TailFactors tail_factors(const KernelSpec& ker, double t, double tjm1,
                                double tj, double T, bool want_l2 = true) {
  TailFactors f;
  if (ker.is_zero()) return f;
  f.K_nT = std::sqrt(std::max(0.0, ker.mass_to(T - t)));
  const double lo = std::max(t, tjm1);
  if (tj > lo)
    f.K_nj = std::sqrt(std::max(0.0, ker.mass_to(tj - t) - ker.mass_to(lo - t)));
  if (want_l2) f.K_nT_L2 = std::sqrt(std::max(0.0, ker.sq_mass_to(T - t)));
  return f;
}

// ||K||_{L2(a,b)} over the kernel-argument interval (a,b).
inline double kernel_l2_on(const KernelSpec& ker, double a, double b) {
  if (ker.is_zero() || b <= a) return 0.0;
  return std::sqrt(std::max(0.0, ker.sq_mass_to(b) - ker.sq_mass_to(a)));
}

}  // namespace viscofem
