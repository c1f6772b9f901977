// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>

#include "viscofem/problems.hpp"

namespace viscofem {

namespace fdetail {

// \int_I <u(t), v(t)> dt for linear-in-t endpoint pairs, given the dual
// vectors of the u endpoints against v's space:
//   k [ <ua,va>/3 + <ua,vb>/6 + <ub,va>/6 + <ub,vb>/3 ]
inline double bilinear_time_integral(double k, const Eigen::VectorXd& dual_a,
                                     const Eigen::VectorXd& dual_b,
                                     const Eigen::VectorXd& va,
                                     const Eigen::VectorXd& vb) {
  return k * (dual_a.dot(va) / 3.0 + dual_a.dot(vb) / 6.0 +
              dual_b.dot(va) / 6.0 + dual_b.dot(vb) / 3.0);
}

struct DualCache {
  // (field tag, source slab, target space id) -> endpoint dual vectors
  std::map<std::tuple<int, int, int>,
           std::pair<Eigen::VectorXd, Eigen::VectorXd>> stiff;

  const std::pair<Eigen::VectorXd, Eigen::VectorXd>& stiffness(
      int tag, const SpaceTimeField& u, int slab, const FeSpace& target,
      const ElasticParams& par) {
    const auto key = std::make_tuple(tag, slab, target.mesh().id());
    auto it = stiff.find(key);
    if (it != stiff.end()) return it->second;
    const FeSpace& src = u.slab_space(slab);
    auto val = std::make_pair(
        cross_stiffness_dual(src, u.val_a[slab - 1], target, par),
        cross_stiffness_dual(src, u.val_b[slab - 1], target, par));
    return stiff.emplace(key, std::move(val)).first->second;
  }
};

}  // namespace fdetail

enum class FormKind { B, B2, Bstar, L, Lstar };

// ---------------------------------------------------------------------------
// B(u, v): trial pair u (continuous piecewise linear in t), test pair v
// (piecewise linear per slab, jumps allowed; piecewise-constant test functions
// have equal endpoint vectors). Also accumulates a magnitude scale: the sum of
// absolute values of all contributing terms.
// ---------------------------------------------------------------------------
inline double eval_B(const PairField& u, const PairField& v,
                     const KernelSpec& ker, const ElasticParams& par,
                     bool variant2 = false, double* scale_out = nullptr) {
  if (u.c1.N() != v.c1.N())
    throw IncompatibleSlabbing("trial and test partitions differ");
  const int N = u.c1.N();
  for (int n = 1; n <= N; ++n)
    if (std::abs(u.c1.part.nodes[n] - v.c1.part.nodes[n]) > 1e-13)
      throw IncompatibleSlabbing("trial and test partitions differ");

  double acc = 0.0, scale = 0.0;
  auto add = [&](double term) {
    acc += term;
    scale += std::abs(term);
  };
  fdetail::DualCache cache;

  for (int n = 1; n <= N; ++n) {
    const double k = u.c1.part.k(n);
    const FeSpace& vsp = v.c2.slab_space(n);
    const FeSpace& usp = u.c1.slab_space(n);

    // (du2/dt, v2)
    const Eigen::VectorXd du2 = u.c2.derivative(n);
    const Eigen::VectorXd du2_dual = cross_mass_dual(usp, du2, vsp);
    add(0.5 * k * du2_dual.dot(v.c2.val_a[n - 1] + v.c2.val_b[n - 1]));

    // a(u1, v2)
    const auto& sd = cache.stiffness(0, u.c1, n, vsp, par);
    add(fdetail::bilinear_time_integral(k, sd.first, sd.second,
                                        v.c2.val_a[n - 1], v.c2.val_b[n - 1]));

    // (du1/dt, v1) - (u2, v1)
    const FeSpace& vsp1 = v.c1.slab_space(n);
    const Eigen::VectorXd du1_dual =
        cross_mass_dual(usp, u.c1.derivative(n), vsp1);
    add(0.5 * k * du1_dual.dot(v.c1.val_a[n - 1] + v.c1.val_b[n - 1]));
    const Eigen::VectorXd u2a_dual = cross_mass_dual(usp, u.c2.val_a[n - 1], vsp1);
    const Eigen::VectorXd u2b_dual = cross_mass_dual(usp, u.c2.val_b[n - 1], vsp1);
    add(-fdetail::bilinear_time_integral(k, u2a_dual, u2b_dual,
                                         v.c1.val_a[n - 1], v.c1.val_b[n - 1]));

    // convolution term
    if (!ker.is_zero() && !variant2) {
      for (int j = 1; j <= n; ++j) {
        const auto& dj = cache.stiffness(0, u.c1, j, vsp, par);
        double term = 0.0;
        for (TShape p : {TShape::Left, TShape::Right}) {
          const SegmentVals w =
              double_moment(ker, u.c1.part.nodes[j - 1], u.c1.part.nodes[j],
                            u.c1.part.nodes[n - 1], u.c1.part.nodes[n], p);
          const Eigen::VectorXd& vp =
              (p == TShape::Left) ? v.c2.val_a[n - 1] : v.c2.val_b[n - 1];
          term += w.left * dj.first.dot(vp) + w.right * dj.second.dot(vp);
        }
        add(-term);
      }
    }
  }

  if (!ker.is_zero() && variant2) {
    // second variant: convolution applied to the test function in the future,
    // evaluated by reversed moments and outer quadrature (an independent route)
    for (int n = 1; n <= N; ++n) {
      const double a = u.c1.part.nodes[n - 1], b = u.c1.part.nodes[n];
      for (int j = n; j <= N; ++j) {
        const FeSpace& usp = u.c1.slab_space(n);
        const auto& dv = cache.stiffness(1, v.c2, j, usp, par);
        const double ja = v.c2.part.nodes[j - 1], jb = v.c2.part.nodes[j];
        auto integrand = [&](double t) {
          const double xi = (t - a) / (b - a);
          const Eigen::VectorXd u1t =
              (1.0 - xi) * u.c1.val_a[n - 1] + xi * u.c1.val_b[n - 1];
          const SegmentVals m = moment_reversed(ker, ja, jb, t);
          // a(u1(t), m.left v2a + m.right v2b) via duals of v2 endpoints
          return m.left * dv.first.dot(u1t) + m.right * dv.second.dot(u1t);
        };
        double term;
        const bool kink_at_b = ker.type() == KernelType::PowerLaw &&
                               ker.rho() < 1.0 &&
                               v.c2.part.nodes[j - 1] <= b + 1e-13;
        if (kink_at_b) {
          // the reversed moment has a (s - t)^rho kink as t -> b:
          // grade toward the right end
          auto flipped = [&](double t) { return integrand(a + b - t); };
          term = integrate_graded_left(flipped, a, b, 14, 12);
        } else {
          term = integrate_gauss(integrand, a, b, 12);
        }
        acc += -term;
        scale += std::abs(term);
      }
    }
  }

  // initial terms
  const double i1 = cross_mass_value(u.c1.slab_space(1), u.c1.initial(),
                                     v.c1.slab_space(1), v.c1.val_a[0]);
  const double i2 = cross_mass_value(u.c2.slab_space(1), u.c2.initial(),
                                     v.c2.slab_space(1), v.c2.val_a[0]);
  add(i1);
  add(i2);
  if (scale_out) *scale_out = scale;
  return acc;
}

// ---------------------------------------------------------------------------
// B*(v, z): the adjoint form. z must be continuous piecewise linear in t.
// ---------------------------------------------------------------------------
inline double eval_Bstar(const PairField& v, const PairField& z,
                         const KernelSpec& ker, const ElasticParams& par,
                         double* scale_out = nullptr) {
  if (v.c1.N() != z.c1.N())
    throw IncompatibleSlabbing("test and dual partitions differ");
  const int N = v.c1.N();
  double acc = 0.0, scale = 0.0;
  auto add = [&](double term) {
    acc += term;
    scale += std::abs(term);
  };
  fdetail::DualCache cache;

  for (int n = 1; n <= N; ++n) {
    const double k = v.c1.part.k(n);
    const FeSpace& zsp = z.c1.slab_space(n);
    const FeSpace& vsp1 = v.c1.slab_space(n);
    const FeSpace& vsp2 = v.c2.slab_space(n);

    // -(v1, dz1/dt)
    const Eigen::VectorXd dz1_dual =
        cross_mass_dual(zsp, z.c1.derivative(n), vsp1);
    add(-0.5 * k * dz1_dual.dot(v.c1.val_a[n - 1] + v.c1.val_b[n - 1]));

    // a(v1, z2): reuse duals of z2 endpoints against v1's space
    const auto& zd = cache.stiffness(0, z.c2, n, vsp1, par);
    add(fdetail::bilinear_time_integral(k, zd.first, zd.second,
                                        v.c1.val_a[n - 1], v.c1.val_b[n - 1]));

    // -(v2, dz2/dt) - (v2, z1)
    const Eigen::VectorXd dz2_dual =
        cross_mass_dual(zsp, z.c2.derivative(n), vsp2);
    add(-0.5 * k * dz2_dual.dot(v.c2.val_a[n - 1] + v.c2.val_b[n - 1]));
    const Eigen::VectorXd z1a_dual = cross_mass_dual(zsp, z.c1.val_a[n - 1], vsp2);
    const Eigen::VectorXd z1b_dual = cross_mass_dual(zsp, z.c1.val_b[n - 1], vsp2);
    add(-fdetail::bilinear_time_integral(k, z1a_dual, z1b_dual,
                                         v.c2.val_a[n - 1], v.c2.val_b[n - 1]));

    // convolution: - \int_{I_n} \int_t^T K(s-t) a(v1(t), z2(s)) ds dt,
    // regrouped by the z2 slab j >= n via forward double moments
    if (!ker.is_zero()) {
      for (int j = n; j <= N; ++j) {
        const FeSpace& zspj = z.c2.slab_space(j);
        const auto key = std::make_tuple(1, n, zspj.mesh().id());
        // duals of v1 endpoints of slab n against z2's slab-j space
        auto it = cache.stiff.find(key);
        if (it == cache.stiff.end()) {
          it = cache.stiff
                   .emplace(key,
                            std::make_pair(
                                cross_stiffness_dual(vsp1, v.c1.val_a[n - 1], zspj, par),
                                cross_stiffness_dual(vsp1, v.c1.val_b[n - 1], zspj, par)))
                   .first;
        }
        double term = 0.0;
        for (TShape p : {TShape::Left, TShape::Right}) {
          const SegmentVals w =
              double_moment(ker, v.c1.part.nodes[n - 1], v.c1.part.nodes[n],
                            z.c1.part.nodes[j - 1], z.c1.part.nodes[j], p);
          const Eigen::VectorXd& zp =
              (p == TShape::Left) ? z.c2.val_a[j - 1] : z.c2.val_b[j - 1];
          term += w.left * it->second.first.dot(zp) +
                  w.right * it->second.second.dot(zp);
        }
        add(-term);
      }
    }
  }

  // terminal terms
  add(cross_mass_value(v.c1.slab_space(N), v.c1.terminal(), z.c1.slab_space(N),
                       z.c1.terminal()));
  add(cross_mass_value(v.c2.slab_space(N), v.c2.terminal(), z.c2.slab_space(N),
                       z.c2.terminal()));
  if (scale_out) *scale_out = scale;
  return acc;
}

// ---------------------------------------------------------------------------
// Loads. The slab load dual against piecewise-constant tests is the one used
// by the time stepping scheme; both use the same Gauss order in time.
// ---------------------------------------------------------------------------
inline Eigen::VectorXd slab_load_dual_full(const FeSpace& sp,
                                           const ProblemSpec& prob, double a,
                                           double b, int tq = 5) {
  const QuadRule& q = gauss_legendre(tq);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(sp.n_nodes() * sp.vdim());
  for (int i = 0; i < tq; ++i) {
    const double t = 0.5 * (a + b) + 0.5 * (b - a) * q.x[i];
    const double w = 0.5 * (b - a) * q.w[i];
    r += w * volume_load_dual(sp, [&](const Vec& x) { return prob.f(x, t); });
    r += w * neumann_load_dual(sp, [&](const Vec& x) { return prob.g(x, t); });
  }
  return r;
}

// L(v) with the data of `prob`
inline double eval_L(const PairField& v, const ProblemSpec& prob, int tq = 5,
                     double* scale_out = nullptr) {
  const int N = v.c1.N();
  double acc = 0.0, scale = 0.0;
  const QuadRule& q = gauss_legendre(tq);
  for (int n = 1; n <= N; ++n) {
    const double a = v.c1.part.nodes[n - 1], b = v.c1.part.nodes[n];
    const FeSpace& vsp = v.c2.slab_space(n);
    double term = 0.0;
    for (int i = 0; i < tq; ++i) {
      const double t = 0.5 * (a + b) + 0.5 * (b - a) * q.x[i];
      const double w = 0.5 * (b - a) * q.w[i];
      const double xi = (t - a) / (b - a);
      const Eigen::VectorXd v2t =
          (1.0 - xi) * v.c2.val_a[n - 1] + xi * v.c2.val_b[n - 1];
      Eigen::VectorXd dual =
          volume_load_dual(vsp, [&](const Vec& x) { return prob.f(x, t); });
      dual += neumann_load_dual(vsp, [&](const Vec& x) { return prob.g(x, t); });
      term += w * dual.dot(v2t);
    }
    acc += term;
    scale += std::abs(term);
  }
  const FeSpace& s1 = v.c1.slab_space(1);
  const FeSpace& s2 = v.c2.slab_space(1);
  const double i1 = volume_load_dual(s1, prob.u0).dot(v.c1.val_a[0]);
  const double i2 = volume_load_dual(s2, prob.v0).dot(v.c2.val_a[0]);
  acc += i1 + i2;
  scale += std::abs(i1) + std::abs(i2);
  if (scale_out) *scale_out = scale;
  return acc;
}

// L*(v) with dual loads j1, j2 and terminal data z1T, z2T
inline double eval_Lstar(const PairField& v, const SpaceTimeFn& j1,
                         const SpaceTimeFn& j2, const SpatialFn& z1T,
                         const SpatialFn& z2T, int tq = 5) {
  const int N = v.c1.N();
  double acc = 0.0;
  const QuadRule& q = gauss_legendre(tq);
  for (int n = 1; n <= N; ++n) {
    const double a = v.c1.part.nodes[n - 1], b = v.c1.part.nodes[n];
    for (int i = 0; i < tq; ++i) {
      const double t = 0.5 * (a + b) + 0.5 * (b - a) * q.x[i];
      const double w = 0.5 * (b - a) * q.w[i];
      const double xi = (t - a) / (b - a);
      if (j1) {
        const FeSpace& sp = v.c1.slab_space(n);
        Eigen::VectorXd dual =
            volume_load_dual(sp, [&](const Vec& x) { return j1(x, t); });
        acc += w * dual.dot((1.0 - xi) * v.c1.val_a[n - 1] + xi * v.c1.val_b[n - 1]);
      }
      if (j2) {
        const FeSpace& sp = v.c2.slab_space(n);
        Eigen::VectorXd dual =
            volume_load_dual(sp, [&](const Vec& x) { return j2(x, t); });
        acc += w * dual.dot((1.0 - xi) * v.c2.val_a[n - 1] + xi * v.c2.val_b[n - 1]);
      }
    }
  }
  if (z1T)
    acc += volume_load_dual(v.c1.slab_space(N), z1T).dot(v.c1.terminal());
  if (z2T)
    acc += volume_load_dual(v.c2.slab_space(N), z2T).dot(v.c2.terminal());
  return acc;
}

// ---------------------------------------------------------------------------
// Galerkin residual: max over the test basis of |B(U, V) - L(V)|, assembled
// slabwise from the stored solution (independent of the solver's elimination).
// ---------------------------------------------------------------------------
struct GalerkinResidual {
  double max_residual = 0.0;
  double scale = 1.0;  // max magnitude of the contributing slab terms
};

inline GalerkinResidual galerkin_residual(const SpaceTimeSolution& U,
                                          const ProblemSpec& prob,
                                          int load_tq = 5) {
  GalerkinResidual out;
  const int N = U.N();
  const KernelSpec& ker = prob.kernel;
  for (int n = 1; n <= N; ++n) {
    const double a = U.part.nodes[n - 1], b = U.part.nodes[n];
    const double k = b - a;
    const FeSpace& tsp = *U.level_space[n];
    const FeSpace& usp = *U.slab_space[n - 1];

    // velocity equation: (U1^n - U1^{n-1} - k/2 (U2^{n-1} + U2^n), phi)
    Eigen::VectorXd vel_full = cross_mass_dual(
        usp,
        Eigen::VectorXd(U.u1b[n - 1] - U.u1a[n - 1] -
                        0.5 * k * (U.u2a[n - 1] + U.u2b[n - 1])),
        tsp);
    Eigen::VectorXd r1 = tsp.restrict_dual(vel_full);
    double scale1 =
        tsp.restrict_dual(cross_mass_dual(usp, U.u1b[n - 1], tsp))
            .cwiseAbs()
            .maxCoeff() +
        0.5 * k *
            tsp.restrict_dual(cross_mass_dual(usp, U.u2b[n - 1], tsp))
                .cwiseAbs()
                .maxCoeff();

    // momentum equation
    Eigen::VectorXd r2 = tsp.restrict_dual(
        cross_mass_dual(usp, Eigen::VectorXd(U.u2b[n - 1] - U.u2a[n - 1]), tsp));
    double scale2 = r2.cwiseAbs().maxCoeff();
    Eigen::VectorXd stiff = tsp.restrict_dual(Eigen::VectorXd(
        0.5 * k *
        (cross_stiffness_dual(usp, U.u1a[n - 1], tsp, prob.elast) +
         cross_stiffness_dual(usp, U.u1b[n - 1], tsp, prob.elast))));
    r2 += stiff;
    scale2 = std::max(scale2, stiff.cwiseAbs().maxCoeff());
    if (!ker.is_zero()) {
      Eigen::VectorXd hist = Eigen::VectorXd::Zero(r2.size());
      for (int j = 1; j <= n; ++j) {
        const SegmentVals w = slab_weights(ker, a, b, U.part.nodes[j - 1],
                                           U.part.nodes[j]);
        const FeSpace& jsp = *U.slab_space[j - 1];
        hist += w.left * tsp.restrict_dual(
                             cross_stiffness_dual(jsp, U.u1a[j - 1], tsp, prob.elast));
        hist += w.right * tsp.restrict_dual(
                              cross_stiffness_dual(jsp, U.u1b[j - 1], tsp, prob.elast));
      }
      r2 -= hist;
      if (hist.size() > 0 && hist.cwiseAbs().maxCoeff() > scale2)
        scale2 = hist.cwiseAbs().maxCoeff();
    }
    Eigen::VectorXd load = tsp.restrict_dual(slab_load_dual_full(tsp, prob, a, b, load_tq));
    r2 -= load;
    if (load.size() > 0) scale2 = std::max(scale2, load.cwiseAbs().maxCoeff());

    if (n == 1) {
      // initial terms (U(0) - data, phi(0)) enter the first-slab tests,
      // which live in the level-1 space
      const FeSpace& s0 = *U.level_space[0];
      r1 += tsp.restrict_dual(
          Eigen::VectorXd(cross_mass_dual(s0, s0.expand(U.u1[0]), tsp) -
                          volume_load_dual(tsp, prob.u0)));
      r2 += tsp.restrict_dual(
          Eigen::VectorXd(cross_mass_dual(s0, s0.expand(U.u2[0]), tsp) -
                          volume_load_dual(tsp, prob.v0)));
    }

    out.max_residual =
        std::max({out.max_residual, r1.size() ? r1.cwiseAbs().maxCoeff() : 0.0,
                  r2.size() ? r2.cwiseAbs().maxCoeff() : 0.0});
    out.scale = std::max({out.scale, scale1, scale2});
  }
  return out;
}

}  // namespace viscofem
