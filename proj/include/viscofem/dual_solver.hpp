// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "viscofem/primal_solver.hpp"

namespace viscofem {

// ---------------------------------------------------------------------------
// The backward dual problem
//   z2'' + A z2 - \int_t^T K(s-t) A z2(s) ds = j1 - d j2/dt,
//   z1 = -z2' - j2,  z(T) = (z1T, z2T),
// solved by the substitution tau = T - t, which turns it into a primal
// viscoelastic problem for y(tau) = z2(T - tau) with y' = z1(T-tau) + j2(T-tau),
// homogeneous Neumann data, volume load j1(T-tau) - j2_t(T-tau), and initial
// data y(0) = z2T, y'(0) = z1T + j2(., T).
// ---------------------------------------------------------------------------

struct DualData {
  SpaceTimeFn j1, j2;   // dual volume loads (empty means zero)
  SpaceTimeFn j2_dt;    // time derivative of j2 (required when j2 is set)
  SpatialFn z1T, z2T;   // terminal data (empty means zero)
};

struct GoalFunctional {
  enum class Preset { EndTimeDisplacement, GeneralLinear };
  Preset preset = Preset::EndTimeDisplacement;
  DualData data;

  // L*(v) = (v1(T), direction): j1 = j2 = 0, z2T = 0, z1T = direction
  static GoalFunctional end_time_displacement(SpatialFn direction) {
    GoalFunctional g;
    g.preset = Preset::EndTimeDisplacement;
    g.data.z1T = std::move(direction);
    return g;
  }
  static GoalFunctional general(DualData d) {
    GoalFunctional g;
    g.preset = Preset::GeneralLinear;
    g.data = std::move(d);
    return g;
  }
};

struct Enrichment {
  int h_levels = 1;
  int k_levels = 1;
};

// Forward-time view of the dual solution; same layout as SpaceTimeSolution
// with (u1, u2) standing for (z1, z2).
using DualSolution = SpaceTimeSolution;

inline DualSolution solve_dual(
    const ProblemSpec& prob, const TimePartition& part,
    std::vector<std::shared_ptr<const SpatialMesh>> meshes, const DualData& data,
    Enrichment enrich = {}, PrimalOptions opts = {}) {
  if (enrich.h_levels < 0 || enrich.k_levels < 0)
    throw IncompatibleDualDiscretization("enrichment must be nonnegative");
  if (data.j2 && !data.j2_dt)
    throw IncompatibleDualDiscretization("j2 requires its time derivative");
  if (static_cast<int>(meshes.size()) == 1)
    meshes.assign(part.N() + 1, meshes[0]);

  // enriched forward partition and per-level meshes
  TimePartition fpart = part;
  for (int l = 0; l < enrich.k_levels; ++l) fpart = fpart.halved();
  std::map<int, std::shared_ptr<const SpatialMesh>> enriched;
  auto enrich_mesh = [&](const std::shared_ptr<const SpatialMesh>& m) {
    auto it = enriched.find(m->id());
    if (it != enriched.end()) return it->second;
    std::shared_ptr<const SpatialMesh> e = m;
    for (int l = 0; l < enrich.h_levels; ++l) e = refine_uniform(*e);
    return enriched.emplace(m->id(), e).first->second;
  };
  const int M = fpart.N();
  std::vector<std::shared_ptr<const SpatialMesh>> fmeshes(M + 1);
  for (int m = 0; m <= M; ++m) {
    const double t = fpart.nodes[m];
    const int lev = (m == 0) ? 0 : part.slab_of(t);
    fmeshes[m] = enrich_mesh(meshes[lev]);
  }

  const double T = part.T();
  // reversed problem
  ProblemSpec rev = prob;
  rev.name = prob.name + "_dual_reversed";
  rev.exact.reset();
  rev.f = [data, T](const Vec& x, double tau) {
    Eigen::Vector2d v = Eigen::Vector2d::Zero();
    if (data.j1) v += data.j1(x, T - tau);
    if (data.j2_dt) v -= data.j2_dt(x, T - tau);
    return v;
  };
  rev.g = pdetail::zero_fn;
  rev.u0 = data.z2T ? data.z2T
                    : SpatialFn([](const Vec&) { return Eigen::Vector2d(0, 0); });
  rev.v0 = [data, T](const Vec& x) {
    Eigen::Vector2d v = Eigen::Vector2d::Zero();
    if (data.z1T) v += data.z1T(x);
    if (data.j2) v += data.j2(x, T);
    return v;
  };

  TimePartition rpart;
  rpart.nodes.resize(M + 1);
  for (int m = 0; m <= M; ++m) rpart.nodes[m] = T - fpart.nodes[M - m];
  std::vector<std::shared_ptr<const SpatialMesh>> rmeshes(M + 1);
  for (int m = 0; m <= M; ++m) rmeshes[m] = fmeshes[M - m];

  SpaceTimeSolution Y = solve_primal(rev, rpart, rmeshes, opts);

  // un-reverse: z2(t) = Y1(T-t), z1(t) = Y2(T-t) - j2(., t)
  DualSolution z;
  z.part = fpart;
  z.level_space.resize(M + 1);
  z.u1.resize(M + 1);
  z.u2.resize(M + 1);
  z.slab_space.resize(M);
  z.u1a.resize(M);
  z.u1b.resize(M);
  z.u2a.resize(M);
  z.u2b.resize(M);
  for (int m = 0; m <= M; ++m) {
    z.level_space[m] = Y.level_space[M - m];
    z.u2[m] = Y.u1[M - m];
    z.u1[m] = Y.u2[M - m];
  }
  for (int n = 1; n <= M; ++n) {
    const int rn = M - n + 1;  // reversed slab index
    z.slab_space[n - 1] = Y.slab_space[rn - 1];
    z.u2a[n - 1] = Y.u1b[rn - 1];
    z.u2b[n - 1] = Y.u1a[rn - 1];
    z.u1a[n - 1] = Y.u2b[rn - 1];
    z.u1b[n - 1] = Y.u2a[rn - 1];
  }
  if (data.j2) {
    // z1 = -z2' - j2: subtract the nodal interpolant of j2 at each level/slab end
    auto interp = [&](const FeSpace& sp, double t) {
      Eigen::VectorXd full(sp.n_nodes() * sp.vdim());
      const auto& verts = sp.mesh().active_vertices();
      for (std::size_t i = 0; i < verts.size(); ++i) {
        const Eigen::Vector2d val = data.j2(sp.mesh().forest().xy[verts[i]], t);
        for (int c = 0; c < sp.vdim(); ++c) full[i * sp.vdim() + c] = val[c];
      }
      sp.constrain_full(full);
      return full;
    };
    for (int m = 0; m <= M; ++m)
      z.u1[m] -= z.level_space[m]->collapse(interp(*z.level_space[m], fpart.nodes[m]));
    for (int n = 1; n <= M; ++n) {
      z.u1a[n - 1] -= interp(*z.slab_space[n - 1], fpart.nodes[n - 1]);
      z.u1b[n - 1] -= interp(*z.slab_space[n - 1], fpart.nodes[n]);
    }
  }
  return z;
}

// ---------------------------------------------------------------------------
// Stability report: norms of the dual solution along the run against its
// terminal data, in the quadratic energy combination
//   ( ||z1(t)||^2 + ||z2(t)||_V^2 )^{1/2}.
// The no-growth property (constant independent of T, no Gronwall factor) is
// what the report's ratio tracks.
// ---------------------------------------------------------------------------
struct StabilityReport {
  std::vector<double> z1_l2;   // per level
  std::vector<double> z2_V;    // per level
  double terminal = 0.0;       // energy combination at t = T
  double max_ratio = 0.0;      // max_t energy(t) / energy(T)
};

inline StabilityReport stability_report(const DualSolution& z,
                                        const ElasticParams& par) {
  StabilityReport rep;
  std::map<int, std::unique_ptr<OperatorSet>> ops;
  auto op_of = [&](const std::shared_ptr<const FeSpace>& sp) -> OperatorSet& {
    const int id = sp->mesh().id();
    auto it = ops.find(id);
    if (it == ops.end())
      it = ops.emplace(id, std::make_unique<OperatorSet>(sp, par)).first;
    return *it->second;
  };
  const int M = z.N();
  for (int m = 0; m <= M; ++m) {
    OperatorSet& o = op_of(z.level_space[m]);
    rep.z1_l2.push_back(o.discrete_norm(z.u1[m], 0));
    rep.z2_V.push_back(o.discrete_norm(z.u2[m], 1));
  }
  rep.terminal = std::sqrt(sqr(rep.z1_l2[M]) + sqr(rep.z2_V[M]));
  for (int m = 0; m <= M; ++m) {
    const double e = std::sqrt(sqr(rep.z1_l2[m]) + sqr(rep.z2_V[m]));
    rep.max_ratio = std::max(rep.max_ratio, e / std::max(rep.terminal, 1e-300));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Dual norm factors for the a posteriori estimates, evaluated by discrete
// norms at the slab endpoints with difference quotients for time derivatives.
// ---------------------------------------------------------------------------
struct DualNormFactors {
  // spatial norms ||grad^a z||: index 0, 1, 2
  std::array<double, 3> z1_space{}, z2_space{};
  // time derivative norms
  double dz1_l2 = 0.0, dz2_l2 = 0.0, dz2_grad = 0.0;
};

inline DualNormFactors dual_norm_factors(const DualSolution& z,
                                         const ElasticParams& par) {
  DualNormFactors f;
  std::map<int, std::unique_ptr<OperatorSet>> ops;
  auto op_of = [&](const std::shared_ptr<const FeSpace>& sp) -> OperatorSet& {
    const int id = sp->mesh().id();
    auto it = ops.find(id);
    if (it == ops.end())
      it = ops.emplace(id, std::make_unique<OperatorSet>(sp, par)).first;
    return *it->second;
  };
  for (int m = 0; m <= z.N(); ++m) {
    OperatorSet& o = op_of(z.level_space[m]);
    f.z1_space[0] = std::max(f.z1_space[0], o.discrete_norm(z.u1[m], 0));
    f.z1_space[1] = std::max(f.z1_space[1], o.grad_norm(z.u1[m]));
    f.z1_space[2] = std::max(f.z1_space[2], o.laplacian_image_norm(z.u1[m]));
    f.z2_space[0] = std::max(f.z2_space[0], o.discrete_norm(z.u2[m], 0));
    f.z2_space[1] = std::max(f.z2_space[1], o.grad_norm(z.u2[m]));
    f.z2_space[2] = std::max(f.z2_space[2], o.laplacian_image_norm(z.u2[m]));
  }
  for (int n = 1; n <= z.N(); ++n) {
    OperatorSet& o = op_of(z.slab_space[n - 1]);
    const FeSpace& sp = *z.slab_space[n - 1];
    const double k = z.part.k(n);
    Eigen::VectorXd d1 = sp.collapse(Eigen::VectorXd((z.u1b[n - 1] - z.u1a[n - 1]) / k));
    Eigen::VectorXd d2 = sp.collapse(Eigen::VectorXd((z.u2b[n - 1] - z.u2a[n - 1]) / k));
    f.dz1_l2 = std::max(f.dz1_l2, o.discrete_norm(d1, 0));
    f.dz2_l2 = std::max(f.dz2_l2, o.discrete_norm(d2, 0));
    f.dz2_grad = std::max(f.dz2_grad, o.grad_norm(d2));
  }
  return f;
}

}  // namespace viscofem
