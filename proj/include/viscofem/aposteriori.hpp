// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "viscofem/estimators.hpp"

namespace viscofem {

// ---------------------------------------------------------------------------
// The weighted global estimate (L2-projection route) and the local-projection
// estimate, both with the generic constant C = 1: order-only semantics. The
// dual-norm factors may come from an enriched dual solve or be replaced by the
// stability route (factor 1).
// ---------------------------------------------------------------------------

struct GlobalOptions {
  int alpha = 1;  // 0, 1, 2
  int beta = 2;   // 1, 2
  int gamma = 1;  // 0, 1
  enum class Mode { L1Kernel, L2Kernel, ConvolvedResidual };
  Mode mode = Mode::L1Kernel;
  int tq = 5;  // Gauss points per slab
};

struct LocalOptions {
  int alpha = 1;  // 1, 2
  enum class Mode { L2Kernel, L1Kernel };
  Mode mode = Mode::L2Kernel;
  int tq = 5;
};

struct SlabTerms {
  // Theorem 2 contributions, already integrated over the slab
  double ups_h = 0.0, ups_h_bnd = 0.0, ups_k = 0.0, ups_k_bnd = 0.0;
  // Theorem 3 contributions
  double ups_1 = 0.0, ups_2 = 0.0;
  // weights for reporting
  double zeta_n = 0.0, zeta_nN_mean = 0.0;
  double total() const { return ups_h + ups_h_bnd + ups_k + ups_k_bnd + ups_1 + ups_2; }
};

struct EstimateReport {
  std::string kind;  // "global", "local", "example1"
  double ups0 = 0.0;
  std::vector<SlabTerms> slabs;
  double sum = 0.0;
  double dual_factor = 1.0;
  double bound = 0.0;
};

namespace edetail {

// sqrt( sum_K h_K^{2p} \int_K |lin(x) - fn(x, t)|^2 ) with lin given by FULL
// nodal values; exact data handled by the degree-5 rules
inline double weighted_l2_vs(const FeSpace& sp, const Eigen::VectorXd& full,
                             const SpaceTimeFn& fn, double t, double hpow) {
  const SpatialMesh& mesh = sp.mesh();
  const Forest& f = mesh.forest();
  double acc = 0.0;
  for (int c : mesh.cells()) {
    const double w = std::pow(f.diameter(c), 2.0 * hpow);
    double cell = 0.0;
    const auto& cv = f.cells[c].v;
    if (mesh.dim() == 1) {
      const QuadRule& q = gauss_legendre(3);
      const double a = f.xy[cv[0]].x(), b = f.xy[cv[1]].x();
      for (std::size_t g = 0; g < q.x.size(); ++g) {
        const Vec x(0.5 * (a + b) + 0.5 * (b - a) * q.x[g], 0.0);
        std::array<double, 3> bb{};
        f.contains(c, x, bb, 1.0);
        cell += 0.5 * (b - a) * q.w[g] *
                (sp.eval_on_cell(full, c, bb) - (fn ? fn(x, t) : Eigen::Vector2d::Zero()))
                    .squaredNorm();
      }
    } else {
      const TriRule& q = tri_rule_d5();
      const double meas = f.measure(c);
      for (std::size_t g = 0; g < q.w.size(); ++g) {
        const Vec x = q.bary[g][0] * f.xy[cv[0]] + q.bary[g][1] * f.xy[cv[1]] +
                      q.bary[g][2] * f.xy[cv[2]];
        cell += meas * q.w[g] *
                (sp.eval_on_cell(full, c, q.bary[g]) -
                 (fn ? fn(x, t) : Eigen::Vector2d::Zero()))
                    .squaredNorm();
      }
    }
    acc += w * cell;
  }
  return std::sqrt(acc);
}

// sum over interior facets of (h_in^p + h_out^p) |E| |r_E(xi)|^2
inline double facet_sum_sq(const SlabResidualData& sd, const Forest& f,
                           double xi, double p) {
  double acc = 0.0;
  for (const auto& fr : sd.interior) {
    const Eigen::Vector2d r = (1.0 - xi) * fr.r_a + xi * fr.r_b;
    acc += (std::pow(f.diameter(fr.cell_in), p) +
            std::pow(f.diameter(fr.cell_out), p)) *
           fr.measure * r.squaredNorm();
  }
  return acc;
}

// sum over Neumann quad points of h_owner^p w |g_d - g|^2 at time t
inline double neumann_sum_sq(const SlabResidualData& sd, const Forest& f,
                             const ProblemSpec& prob, double t, double p) {
  double acc = 0.0;
  const KernelSpec& ker = prob.kernel;
  for (const auto& pt : sd.neumann) {
    const Eigen::Vector2d hist = ker.is_zero()
                                     ? Eigen::Vector2d::Zero()
                                     : pointwise_history(ker, pt.sigma, t);
    const Eigen::Vector2d gd = pt.sigma.eval(t) - hist;
    acc += std::pow(f.diameter(pt.facet_cell), p) * pt.w *
           (gd - prob.g(pt.x, t)).squaredNorm();
  }
  return acc;
}

struct SlabKinematics {
  std::shared_ptr<const FeSpace> space;
  Eigen::VectorXd w1a, w1b;  // dU1/dt - U2 endpoints (full)
  Eigen::VectorXd du2;       // dU2/dt (full)
};

inline SlabKinematics slab_kinematics(const SpaceTimeSolution& U, int n) {
  SlabKinematics k;
  k.space = U.slab_space[n - 1];
  const double kn = U.part.k(n);
  Eigen::VectorXd du1 = (U.u1b[n - 1] - U.u1a[n - 1]) / kn;
  k.w1a = du1 - U.u2a[n - 1];
  k.w1b = du1 - U.u2b[n - 1];
  k.du2 = (U.u2b[n - 1] - U.u2a[n - 1]) / kn;
  return k;
}

}  // namespace edetail

// ---------------------------------------------------------------------------
// Theorem 2: the weighted global a posteriori estimate.
// ---------------------------------------------------------------------------
inline EstimateReport global_estimate(const ResidualData& R,
                                      const DualNormFactors* zf,
                                      const GlobalOptions& opt) {
  const SpaceTimeSolution& U = R.solution();
  const ProblemSpec& prob = R.problem();
  const KernelSpec& ker = prob.kernel;
  if (opt.mode == GlobalOptions::Mode::L2Kernel && !ker.square_integrable())
    throw KernelNotSquareIntegrable("L2 mode requires rho > 1/2");
  EstimateReport rep;
  rep.kind = "global";
  const int N = U.N();
  const double T = U.part.T();

  // initial term
  {
    const FeSpace& s0 = *U.level_space[0];
    rep.ups0 =
        edetail::weighted_l2_vs(s0, s0.expand(U.u1[0]),
                                [&prob](const Vec& x, double) { return prob.u0(x); },
                                0.0, opt.alpha) +
        edetail::weighted_l2_vs(s0, s0.expand(U.u2[0]),
                                [&prob](const Vec& x, double) { return prob.v0(x); },
                                0.0, opt.beta);
  }

  // per-slab A_h-bar images for the time-discretization history term
  std::map<int, std::unique_ptr<OperatorSet>> ops;
  auto op_of = [&](const std::shared_ptr<const FeSpace>& sp) -> OperatorSet& {
    const int id = sp->mesh().id();
    auto it = ops.find(id);
    if (it == ops.end())
      it = ops.emplace(id, std::make_unique<OperatorSet>(sp, prob.elast)).first;
    return *it->second;
  };
  std::vector<Eigen::VectorXd> Aha(N), Ahb(N);  // full vectors per slab
  if (!ker.is_zero()) {
    for (int j = 1; j <= N; ++j) {
      const FeSpace& sp = *U.slab_space[j - 1];
      OperatorSet& o = op_of(U.slab_space[j - 1]);
      Aha[j - 1] = sp.expand(o.apply_Ah(sp.collapse(U.u1a[j - 1])));
      Ahb[j - 1] = sp.expand(o.apply_Ah(sp.collapse(U.u1b[j - 1])));
    }
  }

  rep.slabs.resize(N);
  for (int n = 1; n <= N; ++n) {
    SlabTerms& row = rep.slabs[n - 1];
    const double ta = U.part.nodes[n - 1], tb = U.part.nodes[n];
    const double kn = tb - ta;
    const auto kin = edetail::slab_kinematics(U, n);
    const FeSpace& usp = *kin.space;
    const Forest& f = usp.mesh().forest();
    const SpatialMesh& umesh = usp.mesh();
    const double hbar_min = umesh.h_min();
    row.zeta_n = std::pow(hbar_min, opt.beta - 2.0);

    // prolonged A_h-bar history images into this slab's space (cached)
    std::vector<Eigen::VectorXd> HA, HB;
    Eigen::VectorXd Havg;
    if (!ker.is_zero()) {
      HA.resize(n);
      HB.resize(n);
      for (int j = 1; j <= n; ++j) {
        const FeSpace& jsp = *U.slab_space[j - 1];
        HA[j - 1] = (jsp.mesh().id() == umesh.id())
                        ? Aha[j - 1]
                        : prolong_full(jsp, Aha[j - 1], usp);
        HB[j - 1] = (jsp.mesh().id() == umesh.id())
                        ? Ahb[j - 1]
                        : prolong_full(jsp, Ahb[j - 1], usp);
      }
      Havg = Eigen::VectorXd::Zero(HA[0].size());
      for (int j = 1; j <= n; ++j) {
        const SegmentVals w =
            slab_weights(ker, ta, tb, U.part.nodes[j - 1], U.part.nodes[j]);
        Havg += (w.left / kn) * HA[j - 1] + (w.right / kn) * HB[j - 1];
      }
    }

    // slab-average of g per Neumann point for E_k g
    std::vector<Eigen::Vector2d> gbar(R.slab(n).neumann.size(),
                                      Eigen::Vector2d::Zero());
    {
      const QuadRule& q8 = gauss_legendre(8);
      for (std::size_t i = 0; i < gbar.size(); ++i) {
        const auto& pt = R.slab(n).neumann[i];
        for (std::size_t g = 0; g < q8.x.size(); ++g) {
          const double t = 0.5 * (ta + tb) + 0.5 * kn * q8.x[g];
          gbar[i] += 0.5 * q8.w[g] * prob.g(pt.x, t);
        }
      }
    }

    const QuadRule& q = gauss_legendre(opt.tq);
    double zeta_nN_acc = 0.0;
    for (int g = 0; g < opt.tq; ++g) {
      const double t = 0.5 * (ta + tb) + 0.5 * kn * q.x[g];
      const double wq = 0.5 * kn * q.w[g];
      const double xi = (t - ta) / kn;

      // Upsilon_h
      Eigen::VectorXd w1t = (1.0 - xi) * kin.w1a + xi * kin.w1b;
      const double uh1 = weighted_l2_norm(
          usp, w1t, [&](int c) { return std::pow(f.diameter(c), 2.0 * opt.alpha); });
      const double uh2 =
          edetail::weighted_l2_vs(usp, kin.du2, prob.f, t, opt.beta);
      row.ups_h += wq * (uh1 + uh2);

      // Upsilon_h boundary: residual jumps and Neumann defect
      const double r3 = std::sqrt(edetail::facet_sum_sq(R.slab(n), f, xi, 3.0));
      const double g3 =
          std::sqrt(edetail::neumann_sum_sq(R.slab(n), f, prob, t, 3.0));
      double zeta_nN = 0.0;
      if (!ker.is_zero()) {
        if (opt.mode == GlobalOptions::Mode::L2Kernel) {
          const double l2tail = std::sqrt(std::max(0.0, ker.sq_mass_to(T - t)));
          double s = 0.0;
          for (int j = n; j <= N; ++j)
            s += std::sqrt(U.part.k(j)) *
                 std::pow(U.slab_space[j - 1]->mesh().h_max(), opt.beta - 0.5);
          zeta_nN = std::pow(hbar_min, -1.5) * l2tail * s;
        } else if (opt.mode == GlobalOptions::Mode::L1Kernel) {
          double s = 0.0;
          for (int j = n; j <= N; ++j) {
            const auto tf = tail_factors(ker, t, U.part.nodes[j - 1],
                                         U.part.nodes[j], T, false);
            s += tf.K_nj *
                 std::pow(U.slab_space[j - 1]->mesh().h_max(), opt.beta - 0.5);
          }
          const auto tf = tail_factors(ker, t, ta, tb, T, false);
          zeta_nN = std::pow(hbar_min, -1.5) * tf.K_nT * s;
        }
      }
      zeta_nN_acc += wq * zeta_nN;
      if (opt.mode == GlobalOptions::Mode::ConvolvedResidual && !ker.is_zero()) {
        // Remark variant: sum_j zeta_j(beta) (sum_K hbar^3 |(K*r_d)^j(t)|^2)^{1/2}
        double conv_term = 0.0;
        for (int j = 1; j <= n; ++j) {
          const double zj =
              std::pow(U.slab_space[j - 1]->mesh().h_min(), opt.beta - 2.0);
          double ssq = 0.0;
          for (const auto& fr : R.slab(j).interior) {
            const SegmentVals mv = moment_forward(ker, U.part.nodes[j - 1],
                                                  U.part.nodes[j], t);
            const Eigen::Vector2d conv = mv.left * fr.r_a + mv.right * fr.r_b;
            ssq += (std::pow(f.diameter(fr.cell_in), 3.0) +
                    std::pow(f.diameter(fr.cell_out), 3.0)) *
                   fr.measure * conv.squaredNorm();
          }
          conv_term += zj * std::sqrt(ssq);
        }
        row.ups_h_bnd += wq * (row.zeta_n * (r3 + g3) + conv_term);
      } else {
        row.ups_h_bnd += wq * ((row.zeta_n + zeta_nN) * r3 + row.zeta_n * g3);
      }

      // Upsilon_k
      const double kfac_a = std::pow(kn, std::min(opt.alpha, 1));
      const double kfac_g = std::pow(kn, opt.gamma);
      // E_k of the linear-in-t field: (t - mid) * slope
      const double ek1 =
          std::abs(t - 0.5 * (ta + tb)) / kn *
          weighted_l2_norm(usp, Eigen::VectorXd(kin.w1b - kin.w1a),
                           [](int) { return 1.0; });
      double ek_terms = 0.0;
      if (!ker.is_zero()) {
        // E_k A_h U1 and E_k of the discrete history
        const Eigen::VectorXd At =
            (1.0 - xi) * HA[n - 1] + xi * HB[n - 1];
        const Eigen::VectorXd Amid = 0.5 * (HA[n - 1] + HB[n - 1]);
        ek_terms += weighted_l2_norm(usp, Eigen::VectorXd(At - Amid),
                                     [](int) { return 1.0; });
        Eigen::VectorXd Ht = Eigen::VectorXd::Zero(HA[0].size());
        for (int j = 1; j <= n; ++j) {
          const SegmentVals mv = moment_forward(ker, U.part.nodes[j - 1],
                                                U.part.nodes[j], t);
          Ht += mv.left * HA[j - 1] + mv.right * HB[j - 1];
        }
        ek_terms += weighted_l2_norm(usp, Eigen::VectorXd(Ht - Havg),
                                     [](int) { return 1.0; });
      } else {
        // zero kernel: only the bare A_h U1 time-average defect
        OperatorSet& o = op_of(U.slab_space[n - 1]);
        Eigen::VectorXd Aa = usp.expand(o.apply_Ah(usp.collapse(U.u1a[n - 1])));
        Eigen::VectorXd Ab = usp.expand(o.apply_Ah(usp.collapse(U.u1b[n - 1])));
        ek_terms += std::abs(t - 0.5 * (ta + tb)) / kn *
                    weighted_l2_norm(usp, Eigen::VectorXd(Ab - Aa),
                                     [](int) { return 1.0; });
      }
      // E_k f
      double ekf = 0.0;
      if (prob.f) {
        // f(t) - slab average, measured pointwise by quadrature
        ekf = edetail::weighted_l2_vs(
            usp, Eigen::VectorXd::Zero(usp.n_nodes() * usp.vdim()),
            [&](const Vec& x, double tt) {
              Eigen::Vector2d favg = Eigen::Vector2d::Zero();
              const QuadRule& q8 = gauss_legendre(8);
              for (std::size_t gg = 0; gg < q8.x.size(); ++gg)
                favg += 0.5 * q8.w[gg] *
                        prob.f(x, 0.5 * (ta + tb) + 0.5 * kn * q8.x[gg]);
              return Eigen::Vector2d(prob.f(x, tt) - favg);
            },
            t, 0.0);
      }
      row.ups_k += wq * (kfac_a * ek1 + kfac_g * (ek_terms + ekf));

      // Upsilon_k boundary: E_k g
      double ekg_sq = 0.0;
      for (std::size_t i = 0; i < gbar.size(); ++i) {
        const auto& pt = R.slab(n).neumann[i];
        ekg_sq += pt.w / f.diameter(pt.facet_cell) *
                  (prob.g(pt.x, t) - gbar[i]).squaredNorm();
      }
      row.ups_k_bnd += wq * kfac_g * std::sqrt(ekg_sq);
    }
    row.zeta_nN_mean = zeta_nN_acc / kn;
  }

  rep.sum = rep.ups0;
  for (auto& row : rep.slabs) rep.sum += row.total();
  rep.dual_factor = 1.0;
  if (zf) {
    const double f_z1 = zf->z1_space[opt.alpha];
    const double f_z2 = zf->z2_space[opt.beta];
    const double f_dz1 = (opt.alpha >= 1) ? zf->dz1_l2 : zf->z1_space[0];
    const double f_dz2 = (opt.gamma >= 1) ? zf->dz2_l2 : zf->z2_space[0];
    rep.dual_factor = std::max({f_z1, f_z2, f_dz1, f_dz2});
  }
  rep.bound = rep.dual_factor * rep.sum;
  return rep;
}

// ---------------------------------------------------------------------------
// Theorem 3: the local-projection estimate.
// ---------------------------------------------------------------------------
inline EstimateReport local_estimate(const ResidualData& R,
                                     const DualNormFactors* zf,
                                     const LocalOptions& opt) {
  const SpaceTimeSolution& U = R.solution();
  const ProblemSpec& prob = R.problem();
  const KernelSpec& ker = prob.kernel;
  if (opt.mode == LocalOptions::Mode::L2Kernel && !ker.is_zero() &&
      !ker.square_integrable())
    throw KernelNotSquareIntegrable("L2 mode requires rho > 1/2");
  EstimateReport rep;
  rep.kind = "local";
  const int N = U.N();

  {
    const FeSpace& s0 = *U.level_space[0];
    rep.ups0 =
        edetail::weighted_l2_vs(s0, s0.expand(U.u1[0]),
                                [&prob](const Vec& x, double) { return prob.u0(x); },
                                0.0, opt.alpha) +
        edetail::weighted_l2_vs(s0, s0.expand(U.u2[0]),
                                [&prob](const Vec& x, double) { return prob.v0(x); },
                                0.0, 2.0);
  }

  rep.slabs.resize(N);
  for (int n = 1; n <= N; ++n) {
    SlabTerms& row = rep.slabs[n - 1];
    const double ta = U.part.nodes[n - 1], tb = U.part.nodes[n];
    const double kn = tb - ta;
    const auto kin = edetail::slab_kinematics(U, n);
    const FeSpace& usp = *kin.space;
    const Forest& f = usp.mesh().forest();

    // space-time volume norms by Gauss(5) of the squared spatial norms
    const QuadRule& q = gauss_legendre(opt.tq);
    double st_a = 0.0, st_1 = 0.0, st_f2 = 0.0, st_f0 = 0.0;
    for (int g = 0; g < opt.tq; ++g) {
      const double t = 0.5 * (ta + tb) + 0.5 * kn * q.x[g];
      const double wq = 0.5 * kn * q.w[g];
      const double xi = (t - ta) / kn;
      Eigen::VectorXd w1t = (1.0 - xi) * kin.w1a + xi * kin.w1b;
      st_a += wq * sqr(weighted_l2_norm(usp, w1t, [&](int c) {
        return std::pow(f.diameter(c), 2.0 * opt.alpha);
      }));
      st_1 += wq * sqr(weighted_l2_norm(usp, w1t, [](int) { return 1.0; }));
      st_f2 += wq * sqr(edetail::weighted_l2_vs(usp, kin.du2, prob.f, t, 2.0));
      st_f0 += wq * sqr(edetail::weighted_l2_vs(usp, kin.du2, prob.f, t, 0.0));
    }

    // facet space-time norms: exact for the jumps, quadrature for g_d - g
    double r_p1 = 0.0, r_m1 = 0.0, r_3 = 0.0;
    for (const auto& fr : R.slab(n).interior) {
      const double base = R.facet_norm_sq_exact(n, fr);
      const double w3 = std::pow(f.diameter(fr.cell_in), 3.0) +
                        std::pow(f.diameter(fr.cell_out), 3.0);
      const double wm = std::pow(f.diameter(fr.cell_in), -1.0) +
                        std::pow(f.diameter(fr.cell_out), -1.0);
      const double wp = f.diameter(fr.cell_in) + f.diameter(fr.cell_out);
      r_3 += w3 * base;
      r_m1 += wm * base;
      r_p1 += wp * base;
    }
    double g_p1 = 0.0, g_m1 = 0.0, g_3 = 0.0;
    for (const auto& pt : R.slab(n).neumann) {
      double tacc = 0.0;
      for (int gg = 0; gg < 6; ++gg) {
        const QuadRule& q6 = gauss_legendre(6);
        const double t = 0.5 * (ta + tb) + 0.5 * kn * q6.x[gg];
        const Eigen::Vector2d hist = ker.is_zero()
                                         ? Eigen::Vector2d::Zero()
                                         : pointwise_history(ker, pt.sigma, t);
        const Eigen::Vector2d gd = pt.sigma.eval(t) - hist;
        tacc += 0.5 * kn * q6.w[gg] * (gd - prob.g(pt.x, t)).squaredNorm();
      }
      const double h = f.diameter(pt.facet_cell);
      g_3 += pt.w * std::pow(h, 3.0) * tacc;
      g_m1 += pt.w * tacc / h;
      g_p1 += pt.w * h * tacc;
    }

    row.ups_1 = std::sqrt(kn) *
                (std::sqrt(st_a) + kn * std::sqrt(st_1) + std::sqrt(st_f2) +
                 kn * std::sqrt(st_f0) + std::sqrt(r_3) + std::sqrt(g_3) +
                 kn * std::sqrt(r_m1) + kn * std::sqrt(g_m1) +
                 kn * std::sqrt(r_p1) + kn * std::sqrt(g_p1));

    // Upsilon_{n,2}: the memory part
    if (!ker.is_zero()) {
      if (opt.mode == LocalOptions::Mode::L2Kernel) {
        double F1 = 0.0, F2 = 0.0;
        for (int j = n; j <= N; ++j) {
          const double kj = U.part.k(j);
          const double kl2 = kernel_l2_on(ker, U.part.nodes[j - 1], U.part.nodes[j]);
          F1 += std::sqrt(kj) * kl2;
          F2 += kj * std::sqrt(kj) * kl2;
        }
        double acc = 0.0;
        for (int g = 0; g < opt.tq; ++g) {
          const double t = 0.5 * (ta + tb) + 0.5 * kn * q.x[g];
          const double wq = 0.5 * kn * q.w[g];
          const double xi = (t - ta) / kn;
          const double A = std::sqrt(edetail::facet_sum_sq(R.slab(n), f, xi, 3.0));
          const double B = std::sqrt(edetail::facet_sum_sq(R.slab(n), f, xi, -1.0));
          const double C = std::sqrt(edetail::facet_sum_sq(R.slab(n), f, xi, 1.0));
          (void)t;
          acc += wq * (F1 * A + F2 * (B + C));
        }
        row.ups_2 = acc;
      } else {
        // L1 remark variant built on the convolved residuals (K*r_d)^j
        double I1 = 0.0, I2 = 0.0;
        for (int g = 0; g < opt.tq; ++g) {
          const double t = 0.5 * (ta + tb) + 0.5 * kn * q.x[g];
          const double wq = 0.5 * kn * q.w[g];
          double G1 = 0.0, G2 = 0.0;
          for (int j = 1; j <= n; ++j) {
            double ssq = 0.0;
            const Forest& fj = U.slab_space[j - 1]->mesh().forest();
            const SegmentVals mv = moment_forward(ker, U.part.nodes[j - 1],
                                                  U.part.nodes[j], t);
            for (const auto& fr : R.slab(j).interior) {
              const Eigen::Vector2d conv = mv.left * fr.r_a + mv.right * fr.r_b;
              ssq += (1.0 / fj.diameter(fr.cell_in) +
                      1.0 / fj.diameter(fr.cell_out)) *
                     fr.measure * conv.squaredNorm();
            }
            G1 += std::sqrt(ssq);
            G2 += U.slab_space[j - 1]->mesh().h_max() * std::sqrt(ssq);
          }
          I1 += wq * G1 * G1;
          I2 += wq * G2 * G2;
        }
        const double hmx = usp.mesh().h_max();
        row.ups_2 = std::sqrt(kn) * ((hmx * hmx + kn) * std::sqrt(I1) +
                                     (hmx + kn) * std::sqrt(I2));
      }
    }
  }

  rep.sum = rep.ups0;
  for (auto& row : rep.slabs) rep.sum += row.total();
  rep.dual_factor = 1.0;
  if (zf) {
    rep.dual_factor =
        std::max({zf->z1_space[opt.alpha], zf->z2_space[2], zf->dz1_l2,
                  zf->dz2_l2, zf->dz2_grad});
  }
  rep.bound = rep.dual_factor * rep.sum;
  return rep;
}

// ---------------------------------------------------------------------------
// Example: bound on ||e1(T)|| with alpha=0, beta=gamma=1 and the stability
// route replacing the dual factors (C = 1). Computable with no dual solve.
// ---------------------------------------------------------------------------
inline EstimateReport example1_bound(const SpaceTimeSolution& U,
                                     const ProblemSpec& prob) {
  ResidualData R(U, prob);
  GlobalOptions opt;
  opt.alpha = 0;
  opt.beta = 1;
  opt.gamma = 1;
  EstimateReport rep = global_estimate(R, nullptr, opt);
  rep.kind = "example1";
  return rep;
}

}  // namespace viscofem
