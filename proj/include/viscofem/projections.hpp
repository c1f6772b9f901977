// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "viscofem/assembly.hpp"
#include "viscofem/space_time.hpp"

namespace viscofem {

// ---------------------------------------------------------------------------
// Orthogonal projections P_h (spatial L2 onto a FE space) and P_k (slabwise
// time averages), the local interpolant I_hk (nodal in space, slab-midpoint
// constant in time), and refinement studies of their approximation rates.
// ---------------------------------------------------------------------------

// P_h v: solves M x = (v, phi) on the free dofs.
inline Eigen::VectorXd ph_project(const OperatorSet& ops, const SpatialFn& v) {
  const FeSpace& sp = ops.space();
  Eigen::VectorXd rhs = sp.restrict_dual(volume_load_dual(sp, v));
  Eigen::VectorXd x = ops.mass_solver().solve(rhs);
  if (!x.allFinite()) throw SingularMass("projection solve failed");
  return x;
}

// orthogonality residual ||M x - rhs||_inf relative to the rhs scale
inline double ph_orthogonality_residual(const OperatorSet& ops,
                                        const Eigen::VectorXd& x,
                                        const SpatialFn& v) {
  const FeSpace& sp = ops.space();
  Eigen::VectorXd rhs = sp.restrict_dual(volume_load_dual(sp, v));
  const double scale = std::max(1e-300, rhs.cwiseAbs().maxCoeff());
  return (ops.M() * x - rhs).cwiseAbs().maxCoeff() / scale;
}

// P_k of a scalar time function: per-slab averages (Gauss quadrature).
inline std::vector<double> pk_project(const TimePartition& part,
                                      const std::function<double(double)>& v,
                                      int tq = 8) {
  std::vector<double> out(part.N());
  for (int n = 1; n <= part.N(); ++n)
    out[n - 1] = integrate_gauss(v, part.nodes[n - 1], part.nodes[n], tq) / part.k(n);
  return out;
}

// I_hk v on one slab: nodal interpolation at the slab midpoint in time.
inline Eigen::VectorXd ihk_interpolate(const FeSpace& sp, const SpaceTimeFn& v,
                                       double t_a, double t_b) {
  const double tm = 0.5 * (t_a + t_b);
  Eigen::VectorXd full(sp.n_nodes() * sp.vdim());
  const auto& verts = sp.mesh().active_vertices();
  for (std::size_t i = 0; i < verts.size(); ++i) {
    const Eigen::Vector2d val = v(sp.mesh().forest().xy[verts[i]], tm);
    for (int c = 0; c < sp.vdim(); ++c) full[i * sp.vdim() + c] = val[c];
  }
  // interpolation, not projection: hanging values come from the interpolant
  sp.constrain_full(full);
  return full;
}

// ---------------------------------------------------------------------------
// Rate studies on nested uniform refinements.
// ---------------------------------------------------------------------------
struct RateRow {
  double h = 0.0;
  double err = 0.0;
  double order = 0.0;  // vs the previous row
};

// L2 and H1-seminorm errors of P_h on a sequence of uniformly refined meshes.
struct ProjectionRates {
  std::vector<RateRow> l2;    // ||E_h v||
  std::vector<RateRow> grad;  // ||grad E_h v||
};

inline ProjectionRates verify_projection_rates(
    std::shared_ptr<const SpatialMesh> mesh0, int levels, const SpatialFn& v,
    const SpatialFn& grad_v, const ElasticParams& par = {1.0, 1.0}) {
  ProjectionRates out;
  std::shared_ptr<const SpatialMesh> m = std::move(mesh0);
  for (int lev = 0; lev < levels; ++lev) {
    auto sp = std::make_shared<FeSpace>(m);
    OperatorSet ops(sp, par);
    Eigen::VectorXd x = ph_project(ops, v);
    Eigen::VectorXd full = sp->expand(x);
    RateRow l2{m->h_max(), l2_error_vs(*sp, full, v), 0.0};
    // gradient error by quadrature of |grad uh - grad v|
    const Forest& f = m->forest();
    double gacc = 0.0;
    if (m->dim() == 1) {
      const QuadRule& q = gauss_legendre(4);
      for (int c : m->cells()) {
        const auto& cv = f.cells[c].v;
        const double a = f.xy[cv[0]].x(), b = f.xy[cv[1]].x();
        const double du = full[sp->node_of_vertex(cv[1])] -
                          full[sp->node_of_vertex(cv[0])];
        const double gh = du / (b - a);
        for (std::size_t g = 0; g < q.x.size(); ++g) {
          const double xq = 0.5 * (a + b) + 0.5 * (b - a) * q.x[g];
          gacc += 0.5 * (b - a) * q.w[g] * sqr(gh - grad_v(Vec(xq, 0.0))[0]);
        }
      }
    } else {
      const TriRule& q = tri_rule_d5();
      for (int c : m->cells()) {
        const Eigen::Matrix2d G = sp->grad_on_cell(full, c);
        const auto& cv = f.cells[c].v;
        const double meas = f.measure(c);
        for (std::size_t g = 0; g < q.w.size(); ++g) {
          const Vec xq = q.bary[g][0] * f.xy[cv[0]] + q.bary[g][1] * f.xy[cv[1]] +
                         q.bary[g][2] * f.xy[cv[2]];
          // grad_v supplies (d v1/dx, d v1/dy) for the scalar-valued first
          // component study used by the rate checks
          const Eigen::Vector2d gv = grad_v(xq);
          gacc += meas * q.w[g] * (sqr(G(0, 0) - gv[0]) + sqr(G(0, 1) - gv[1]));
        }
      }
    }
    RateRow gr{m->h_max(), std::sqrt(gacc), 0.0};
    if (!out.l2.empty()) {
      l2.order = observed_order(out.l2.back().err, l2.err);
      gr.order = observed_order(out.grad.back().err, gr.err);
    }
    out.l2.push_back(l2);
    out.grad.push_back(gr);
    if (lev + 1 < levels) m = refine_uniform(*m);
  }
  return out;
}

// ||I_hk v - v||_{L2(Omega x I)} over one slab, by space-time quadrature.
inline double ihk_error_on_slab(const FeSpace& sp, const SpaceTimeFn& v,
                                double t_a, double t_b, int tq = 5) {
  Eigen::VectorXd full = ihk_interpolate(sp, v, t_a, t_b);
  const QuadRule& q = gauss_legendre(tq);
  double acc = 0.0;
  for (int i = 0; i < tq; ++i) {
    const double t = 0.5 * (t_a + t_b) + 0.5 * (t_b - t_a) * q.x[i];
    const double w = 0.5 * (t_b - t_a) * q.w[i];
    const double e = l2_error_vs(sp, full, [&](const Vec& x) { return v(x, t); });
    acc += w * e * e;
  }
  return std::sqrt(acc);
}

}  // namespace viscofem
