// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unordered_map>

#include "viscofem/dual_solver.hpp"

namespace viscofem {

// ---------------------------------------------------------------------------
// Residual data shared by the error representations and the a posteriori
// estimates: interior-facet traction jumps (constant along each facet, linear
// in time per slab) and Neumann-facet traction histories at quadrature points.
// ---------------------------------------------------------------------------

struct InteriorFacetResidual {
  int v0, v1;               // facet endpoints (v1 < 0 in 1D)
  double measure;           // facet length (1 in 1D)
  int cell_in, cell_out;    // owner cells (forest ids)
  Eigen::Vector2d r_a, r_b; // residual at the slab ends
};

struct NeumannQuadPoint {
  int facet_cell;                          // owner cell
  Vec x;
  double w;                                // weight including facet measure
  Vec normal;
  PiecewisePath<Eigen::Vector2d> sigma;    // sigma0(U1(s)).n over all slabs
};

struct SlabResidualData {
  std::shared_ptr<const FeSpace> space;    // slab union space
  std::vector<InteriorFacetResidual> interior;
  std::vector<NeumannQuadPoint> neumann;
};

class ResidualData {
 public:
  ResidualData(const SpaceTimeSolution& U, const ProblemSpec& prob)
      : U_(U), prob_(prob) {
    slabs_.resize(U.N());
    for (int n = 1; n <= U.N(); ++n) build_slab(n);
    build_sigma_paths();
  }

  const SlabResidualData& slab(int n) const { return slabs_[n - 1]; }
  const SpaceTimeSolution& solution() const { return U_; }
  const ProblemSpec& problem() const { return prob_; }

  // ||r_d||_{dK^n}^2 exactly (time integral of the quadratic facet norm)
  double facet_norm_sq_exact(int n, const InteriorFacetResidual& fr) const {
    const double k = U_.part.k(n);
    return k *
           (fr.r_a.squaredNorm() + fr.r_a.dot(fr.r_b) + fr.r_b.squaredNorm()) /
           3.0 * fr.measure;
  }
  // the endpoint bound sqrt(2/3) k^(1/2) (||r(a)|| + ||r(b)||), squared
  double facet_norm_sq_bound(int n, const InteriorFacetResidual& fr) const {
    const double k = U_.part.k(n);
    return 2.0 / 3.0 * k *
           sqr(std::sqrt(fr.measure) * fr.r_a.norm() +
               std::sqrt(fr.measure) * fr.r_b.norm());
  }

 private:
  void build_slab(int n) {
    SlabResidualData& out = slabs_[n - 1];
    out.space = U_.slab_space[n - 1];
    const FeSpace& sp = *out.space;
    const SpatialMesh& mesh = sp.mesh();
    const Forest& f = mesh.forest();
    const ElasticParams& par = prob_.elast;
    for (const Facet& fc : mesh.interior_facets()) {
      InteriorFacetResidual fr;
      fr.v0 = fc.v[0];
      fr.v1 = fc.v[1];
      fr.measure = fc.measure;
      fr.cell_in = fc.cell_in;
      fr.cell_out = fc.cell_out;
      auto jump = [&](const Eigen::VectorXd& full) -> Eigen::Vector2d {
        const Eigen::Matrix2d si =
            sigma0_from_grad(par, sp.grad_on_cell(full, fc.cell_in), mesh.dim());
        const Eigen::Matrix2d so =
            sigma0_from_grad(par, sp.grad_on_cell(full, fc.cell_out), mesh.dim());
        // r_d = (sigma_in . n_in + sigma_out . n_out) / 2, n_out = -n_in
        return 0.5 * (si - so) * fc.normal;
      };
      fr.r_a = jump(U_.u1a[n - 1]);
      fr.r_b = jump(U_.u1b[n - 1]);
      out.interior.push_back(fr);
    }
    for (const Facet& fc : mesh.boundary_facets()) {
      if (fc.tag != BTag::Neumann) continue;
      if (mesh.dim() == 1) {
        NeumannQuadPoint p;
        p.facet_cell = fc.cell_in;
        p.x = f.xy[fc.v[0]];
        p.w = 1.0;
        p.normal = fc.normal;
        out.neumann.push_back(p);
      } else {
        const QuadRule& q = gauss_legendre(3);
        const Vec a = f.xy[fc.v[0]], b = f.xy[fc.v[1]];
        for (std::size_t g = 0; g < q.x.size(); ++g) {
          NeumannQuadPoint p;
          p.facet_cell = fc.cell_in;
          p.x = 0.5 * (a + b) + 0.5 * (b - a) * q.x[g];
          p.w = 0.5 * fc.measure * q.w[g];
          p.normal = fc.normal;
          out.neumann.push_back(p);
        }
      }
    }
  }

  // sigma0(U1(s)).n trajectories at each Neumann quadrature point
  void build_sigma_paths() {
    for (int n = 1; n <= U_.N(); ++n) {
      for (NeumannQuadPoint& p : slabs_[n - 1].neumann) {
        p.sigma.nodes = U_.part.nodes;
        for (int j = 1; j <= U_.N(); ++j) {
          const FeSpace& jsp = *U_.slab_space[j - 1];
          std::array<double, 3> bary{};
          const int cell = jsp.mesh().locate(p.x, bary);
          const Eigen::Matrix2d ga = sigma0_from_grad(
              prob_.elast, jsp.grad_on_cell(U_.u1a[j - 1], cell), prob_.dim);
          const Eigen::Matrix2d gb = sigma0_from_grad(
              prob_.elast, jsp.grad_on_cell(U_.u1b[j - 1], cell), prob_.dim);
          p.sigma.segs.push_back({ga * p.normal, gb * p.normal});
        }
      }
    }
  }

  const SpaceTimeSolution& U_;
  const ProblemSpec& prob_;
  std::vector<SlabResidualData> slabs_;
};

// ---------------------------------------------------------------------------
// Theta breakdowns (error representations).
// ---------------------------------------------------------------------------
enum class Representation { One = 1, Two = 2, Three = 3 };

struct ThetaBreakdown {
  Representation rep = Representation::Two;
  std::map<int, double> theta0;  // initial-mesh cell -> value
  // per slab (index n-1), term i in 0..4 (theta_1..theta_5): cell -> value
  std::vector<std::array<std::map<int, double>, 5>> per_slab;
  // fifth-indicator pair totals: (n, j) for reps 1 and 3; (n, n) for rep 2
  std::map<std::pair<int, int>, double> fifth_pairs;
  double abs_scale = 0.0;  // sum of absolute contributions

  double total() const {
    double s = 0.0;
    for (auto& [c, v] : theta0) s += v;
    for (auto& slab : per_slab)
      for (auto& term : slab)
        for (auto& [c, v] : term) s += v;
    return s;
  }
  std::array<double, 6> term_totals() const {
    std::array<double, 6> t{};
    for (auto& [c, v] : theta0) t[0] += v;
    for (auto& slab : per_slab)
      for (int i = 0; i < 5; ++i)
        for (auto& [c, v] : slab[i]) t[i + 1] += v;
    return t;
  }
  // per-spatial-cell aggregate |sum over slabs and terms| for marking
  std::unordered_map<int, double> cell_aggregate() const {
    std::unordered_map<int, double> agg;
    for (auto& [c, v] : theta0) agg[c] += v;
    for (auto& slab : per_slab)
      for (auto& term : slab)
        for (auto& [c, v] : term) agg[c] += v;
    return agg;
  }
};

// ---------------------------------------------------------------------------
// The estimator engine. Holds the primal solution, residual data, the
// enriched dual z_ref and its projection z_hk onto the discrete test space;
// the dual weight used in every indicator is w = z_ref - z_hk.
// ---------------------------------------------------------------------------
class ThetaEstimator {
 public:
  ThetaEstimator(const SpaceTimeSolution& U, const ProblemSpec& prob,
                 const DualSolution& zref)
      : U_(U), prob_(prob), z_(zref), res_(U, prob) {
    if (zref.part.nodes.back() != U.part.nodes.back())
      throw IncompatibleDualDiscretization("dual horizon differs");
    // map refined sub-slabs to primal slabs
    sub_of_.resize(z_.N() + 1);
    subs_.assign(U_.N() + 1, {});
    for (int m = 1; m <= z_.N(); ++m) {
      const double mid = 0.5 * (z_.part.nodes[m - 1] + z_.part.nodes[m]);
      const int n = U_.part.slab_of(mid);
      sub_of_[m] = n;
      subs_[n].push_back(m);
    }
    for (int n = 1; n <= U_.N(); ++n)
      if (subs_[n].empty())
        throw IncompatibleDualDiscretization(
            "dual partition does not refine the primal partition");
    compute_zhk();
    build_facet_weights();
  }

  const ResidualData& residuals() const { return res_; }
  const std::vector<Eigen::VectorXd>& zhk1() const { return zhk1_; }
  const std::vector<Eigen::VectorXd>& zhk2() const { return zhk2_; }

  ThetaBreakdown representation(Representation rep) const {
    ThetaBreakdown out;
    out.rep = rep;
    out.per_slab.resize(U_.N());
    assemble_theta0(out);
    for (int n = 1; n <= U_.N(); ++n) assemble_volume(n, out);
    for (int n = 1; n <= U_.N(); ++n) assemble_neumann(n, out);
    for (int n = 1; n <= U_.N(); ++n) assemble_jump(n, out);
    switch (rep) {
      case Representation::One:
        for (int n = 1; n <= U_.N(); ++n)
          for (int j = 1; j <= n; ++j) assemble_fifth_rep1(n, j, out);
        break;
      case Representation::Two:
        for (int n = 1; n <= U_.N(); ++n) assemble_fifth_rep2(n, out);
        break;
      case Representation::Three:
        for (int n = 1; n <= U_.N(); ++n)
          for (int j = n; j <= U_.N(); ++j) assemble_fifth_rep3(n, j, out);
        break;
    }
    return out;
  }

 private:
  struct WorkSlab {
    std::shared_ptr<const FeSpace> space;  // refines the slab space and all
                                           // dual spaces of the slab
    Eigen::VectorXd w1a, w1b;   // (dU1/dt - U2) endpoints, prolonged
    Eigen::VectorXd du2;        // dU2/dt, prolonged
    Eigen::VectorXd h1, h2;     // z_hk components, prolonged
    std::vector<Eigen::VectorXd> z1, z2;  // z_ref at sub-nodes, prolonged
  };

  void compute_zhk() {
    zhk1_.resize(U_.N());
    zhk2_.resize(U_.N());
    work_.resize(U_.N());
    for (int n = 1; n <= U_.N(); ++n) {
      // workspace: overlay of the slab space and the dual slab spaces
      std::shared_ptr<const SpatialMesh> wm = U_.slab_space[n - 1]->mesh_ptr();
      for (int m : subs_[n])
        wm = union_mesh(wm, z_.slab_space[m - 1]->mesh_ptr());
      std::shared_ptr<const FeSpace> wsp;
      if (wm->id() == U_.slab_space[n - 1]->mesh().id())
        wsp = U_.slab_space[n - 1];
      else
        wsp = std::make_shared<FeSpace>(wm);
      WorkSlab& w = work_[n - 1];
      w.space = wsp;

      const FeSpace& usp = *U_.slab_space[n - 1];
      const double k = U_.part.k(n);
      Eigen::VectorXd du1 = (U_.u1b[n - 1] - U_.u1a[n - 1]) / k;
      w.w1a = prolong_full(usp, Eigen::VectorXd(du1 - U_.u2a[n - 1]), *wsp);
      w.w1b = prolong_full(usp, Eigen::VectorXd(du1 - U_.u2b[n - 1]), *wsp);
      w.du2 = prolong_full(usp, Eigen::VectorXd((U_.u2b[n - 1] - U_.u2a[n - 1]) / k), *wsp);

      // dual values at the sub-slab endpoints, prolonged into the workspace;
      // entry i holds the value at refined node subs_[n].front() - 1 + i
      w.z1.resize(subs_[n].size() + 1);
      w.z2.resize(subs_[n].size() + 1);
      for (std::size_t i = 0; i <= subs_[n].size(); ++i) {
        const bool left_end = i < subs_[n].size();
        const int seg = left_end ? subs_[n][i] : subs_[n].back();
        const Eigen::VectorXd& v1 = left_end ? z_.u1a[seg - 1] : z_.u1b[seg - 1];
        const Eigen::VectorXd& v2 = left_end ? z_.u2a[seg - 1] : z_.u2b[seg - 1];
        const FeSpace& ssp = *z_.slab_space[seg - 1];
        w.z1[i] = prolong_full(ssp, v1, *wsp);
        w.z2[i] = prolong_full(ssp, v2, *wsp);
      }

      // z_hk on the level-n space: spatial L2 projection of the time average
      const FeSpace& tsp = *U_.level_space[n];
      Eigen::VectorXd avg1 = Eigen::VectorXd::Zero(wsp->n_nodes() * wsp->vdim());
      Eigen::VectorXd avg2 = avg1;
      for (std::size_t i = 0; i < subs_[n].size(); ++i) {
        const int m = subs_[n][i];
        const double km = z_.part.k(m);
        avg1 += 0.5 * km * (w.z1[i] + w.z1[i + 1]);
        avg2 += 0.5 * km * (w.z2[i] + w.z2[i + 1]);
      }
      avg1 /= k;
      avg2 /= k;
      OperatorSet& ops = level_ops(n);
      zhk1_[n - 1] = tsp.expand(ops.mass_solver().solve(
          tsp.restrict_dual(cross_mass_dual(*wsp, avg1, tsp))));
      zhk2_[n - 1] = tsp.expand(ops.mass_solver().solve(
          tsp.restrict_dual(cross_mass_dual(*wsp, avg2, tsp))));
      w.h1 = prolong_full(tsp, zhk1_[n - 1], *wsp);
      w.h2 = prolong_full(tsp, zhk2_[n - 1], *wsp);
    }
  }

  // facet integrals of the dual weight over every slab's interior facets:
  //   ref_at_node[f][m] = \int_E z2_ref(t_m) dG   (refined node m)
  //   hk_of_slab[f][n]  = \int_E z2_hk^{(n)} dG   (primal slab n)
  void build_facet_weights() {
    fw_ref_.resize(U_.N());
    fw_hk_.resize(U_.N());
    for (int j = 1; j <= U_.N(); ++j) {
      const auto& interior = res_.slab(j).interior;
      fw_ref_[j - 1].assign(interior.size(),
                            std::vector<Eigen::Vector2d>(z_.N() + 1,
                                                         Eigen::Vector2d::Zero()));
      fw_hk_[j - 1].assign(interior.size(),
                           std::vector<Eigen::Vector2d>(U_.N() + 1,
                                                        Eigen::Vector2d::Zero()));
      for (std::size_t fi = 0; fi < interior.size(); ++fi) {
        const auto& fr = interior[fi];
        for (int m = 0; m <= z_.N(); ++m) {
          const int seg = std::max(1, std::min(m, z_.N()));
          const FeSpace& ssp = *z_.slab_space[seg - 1];
          const Eigen::VectorXd& v2 = (m < seg || m == 0) ? z_.u2a[seg - 1]
                                                          : z_.u2b[seg - 1];
          fw_ref_[j - 1][fi][m] = facet_integral(ssp, v2, fr);
        }
        for (int n = 1; n <= U_.N(); ++n)
          fw_hk_[j - 1][fi][n] =
              facet_integral(*U_.level_space[n], zhk2_[n - 1], fr);
      }
    }
  }

  // \int_E phi dGamma for a P1 function on `sp` along the facet
  Eigen::Vector2d facet_integral(const FeSpace& sp, const Eigen::VectorXd& full,
                                 const InteriorFacetResidual& fr) const {
    const Forest& f = sp.mesh().forest();
    if (prob_.dim == 1) {
      Eigen::Vector2d v = sp.eval_full(full, f.xy[fr.v0]);
      return v;
    }
    std::vector<std::array<int, 2>> pieces;
    sp.mesh().decompose_edge(fr.v0, fr.v1, pieces);
    Eigen::Vector2d acc = Eigen::Vector2d::Zero();
    const QuadRule& q = gauss_legendre(2);
    for (auto& pc : pieces) {
      const Vec a = f.xy[pc[0]], b = f.xy[pc[1]];
      const double len = (b - a).norm();
      for (std::size_t g = 0; g < q.x.size(); ++g) {
        const Vec x = 0.5 * (a + b) + 0.5 * (b - a) * q.x[g];
        acc += 0.5 * len * q.w[g] * sp.eval_full(full, x);
      }
    }
    return acc;
  }

  // dual facet weight W_E(t) = ref - hk on slab n at time t, for facet fi of
  // slab j (linear interpolation between refined nodes)
  Eigen::Vector2d facet_weight(int j, std::size_t fi, int n, double t) const {
    const int m = z_.part.slab_of(t);
    const double xi = (t - z_.part.nodes[m - 1]) / z_.part.k(m);
    const Eigen::Vector2d ref = (1.0 - xi) * fw_ref_[j - 1][fi][m - 1] +
                                xi * fw_ref_[j - 1][fi][m];
    return ref - fw_hk_[j - 1][fi][n];
  }

  // the dual weight path of a facet over the whole horizon (jumps at primal
  // nodes where z_hk changes slab)
  PiecewisePath<Eigen::Vector2d> facet_weight_path(int j, std::size_t fi) const {
    PiecewisePath<Eigen::Vector2d> path;
    path.nodes = z_.part.nodes;
    for (int m = 1; m <= z_.N(); ++m) {
      const int n = sub_of_[m];
      path.segs.push_back(
          {fw_ref_[j - 1][fi][m - 1] - fw_hk_[j - 1][fi][n],
           fw_ref_[j - 1][fi][m] - fw_hk_[j - 1][fi][n]});
    }
    return path;
  }

  void assemble_theta0(ThetaBreakdown& out) const {
    // weight at t = 0: w(0) = z_ref(0) - z_hk(slab 1)
    const FeSpace& s0 = *U_.level_space[0];
    const FeSpace& w1sp = *work_[0].space;
    const Eigen::VectorXd u10 = s0.expand(U_.u1[0]);
    const Eigen::VectorXd u20 = s0.expand(U_.u2[0]);
    const Eigen::VectorXd W1 = work_[0].z1.front() - work_[0].h1;
    const Eigen::VectorXd W2 = work_[0].z2.front() - work_[0].h2;
    // integrate over the workspace cells, attribute to initial-mesh cells
    const Forest& f = w1sp.mesh().forest();
    for (int K : w1sp.mesh().cells()) {
      const int K0 = adetail::containing_cell(s0.mesh(), K);
      double acc = 0.0;
      if (prob_.dim == 1) {
        const QuadRule& q = gauss_legendre(3);
        const auto& kv = f.cells[K].v;
        const double a = f.xy[kv[0]].x(), b = f.xy[kv[1]].x();
        for (std::size_t g = 0; g < q.x.size(); ++g) {
          const Vec x(0.5 * (a + b) + 0.5 * (b - a) * q.x[g], 0.0);
          const double w = 0.5 * (b - a) * q.w[g];
          std::array<double, 3> bb{};
          f.contains(K, x, bb, 1.0);
          const auto e1 = s0.eval_full(u10, x) - prob_.u0(x);
          const auto e2 = s0.eval_full(u20, x) - prob_.v0(x);
          acc += w * (e1.dot(w1sp.eval_on_cell(W1, K, bb)) +
                      e2.dot(w1sp.eval_on_cell(W2, K, bb)));
        }
      } else {
        const TriRule& q = tri_rule_d5();
        const auto& kv = f.cells[K].v;
        const double meas = f.measure(K);
        for (std::size_t g = 0; g < q.w.size(); ++g) {
          const Vec x = q.bary[g][0] * f.xy[kv[0]] + q.bary[g][1] * f.xy[kv[1]] +
                        q.bary[g][2] * f.xy[kv[2]];
          const double w = meas * q.w[g];
          const auto e1 = s0.eval_full(u10, x) - prob_.u0(x);
          const auto e2 = s0.eval_full(u20, x) - prob_.v0(x);
          acc += w * (e1.dot(w1sp.eval_on_cell(W1, K, q.bary[g])) +
                      e2.dot(w1sp.eval_on_cell(W2, K, q.bary[g])));
        }
      }
      out.theta0[K0] += acc;
      out.abs_scale += std::abs(acc);
    }
  }

  // Theta_1 (exact) and Theta_2 (quadrature in f) volume terms
  void assemble_volume(int n, ThetaBreakdown& out) const {
    const WorkSlab& w = work_[n - 1];
    const FeSpace& wsp = *w.space;
    const Forest& f = wsp.mesh().forest();
    const SpatialMesh& umesh = U_.slab_space[n - 1]->mesh();
    Eigen::Matrix3d Ml;
    int nv = 0;
    const double ta = U_.part.nodes[n - 1], kn = U_.part.k(n);

    for (std::size_t i = 0; i < subs_[n].size(); ++i) {
      const int m = subs_[n][i];
      const double a = z_.part.nodes[m - 1], b = z_.part.nodes[m];
      const double km = b - a;
      // u-side endpoints of (dU1/dt - U2) on this sub-slab
      const double xa = (a - ta) / kn, xb = (b - ta) / kn;
      Eigen::VectorXd va = (1.0 - xa) * w.w1a + xa * w.w1b;
      Eigen::VectorXd vb = (1.0 - xb) * w.w1a + xb * w.w1b;
      Eigen::VectorXd W1a = w.z1[i] - w.h1;
      Eigen::VectorXd W1b = w.z1[i + 1] - w.h1;
      Eigen::VectorXd W2a = w.z2[i] - w.h2;
      Eigen::VectorXd W2b = w.z2[i + 1] - w.h2;

      for (int K : wsp.mesh().cells()) {
        const int Ku = adetail::containing_cell(umesh, K);
        adetail::local_mass(prob_.dim, f.measure(K), Ml, nv);
        const auto& kv = f.cells[K].v;
        auto dotc = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
          double s = 0.0;
          for (int p = 0; p < nv; ++p)
            for (int q = 0; q < nv; ++q)
              for (int c = 0; c < prob_.dim; ++c)
                s += Ml(p, q) * x[wsp.node_of_vertex(kv[p]) * prob_.dim + c] *
                     y[wsp.node_of_vertex(kv[q]) * prob_.dim + c];
          return s;
        };
        // Theta_1: exact for the bilinear-in-t integrand
        const double th1 =
            km * (dotc(va, W1a) / 3.0 + (dotc(va, W1b) + dotc(vb, W1a)) / 6.0 +
                  dotc(vb, W1b) / 3.0);
        out.per_slab[n - 1][0][Ku] += th1;
        out.abs_scale += std::abs(th1);

        // Theta_2: (dU2/dt - f, W2), Gauss(4) in time x degree-5 in space
        const QuadRule& tq = gauss_legendre(4);
        double th2 = 0.0;
        for (std::size_t g = 0; g < tq.x.size(); ++g) {
          const double t = 0.5 * (a + b) + 0.5 * km * tq.x[g];
          const double wt = 0.5 * km * tq.w[g];
          const double xi = (t - a) / km;
          th2 += wt * cell_f_product(wsp, K, w.du2,
                                     Eigen::VectorXd((1.0 - xi) * W2a + xi * W2b), t);
        }
        out.per_slab[n - 1][1][Ku] += th2;
        out.abs_scale += std::abs(th2);
      }
    }
  }

  // \int_K (du2(x) - f(x,t)) . W2(x) dx by the degree-5 rule
  double cell_f_product(const FeSpace& wsp, int K, const Eigen::VectorXd& du2,
                        const Eigen::VectorXd& W2, double t) const {
    const Forest& f = wsp.mesh().forest();
    const auto& kv = f.cells[K].v;
    double acc = 0.0;
    if (prob_.dim == 1) {
      const QuadRule& q = gauss_legendre(3);
      const double a = f.xy[kv[0]].x(), b = f.xy[kv[1]].x();
      for (std::size_t g = 0; g < q.x.size(); ++g) {
        const Vec x(0.5 * (a + b) + 0.5 * (b - a) * q.x[g], 0.0);
        std::array<double, 3> bb{};
        f.contains(K, x, bb, 1.0);
        const Eigen::Vector2d r =
            wsp.eval_on_cell(du2, K, bb) - prob_.f(x, t);
        acc += 0.5 * (b - a) * q.w[g] * r.dot(wsp.eval_on_cell(W2, K, bb));
      }
    } else {
      const TriRule& q = tri_rule_d5();
      const double meas = f.measure(K);
      for (std::size_t g = 0; g < q.w.size(); ++g) {
        const Vec x = q.bary[g][0] * f.xy[kv[0]] + q.bary[g][1] * f.xy[kv[1]] +
                      q.bary[g][2] * f.xy[kv[2]];
        const Eigen::Vector2d r =
            wsp.eval_on_cell(du2, K, q.bary[g]) - prob_.f(x, t);
        acc += meas * q.w[g] * r.dot(wsp.eval_on_cell(W2, K, q.bary[g]));
      }
    }
    return acc;
  }

  // Theta_3: Neumann traction defect (g_d - g, W2) over dK^n on Gamma_N
  void assemble_neumann(int n, ThetaBreakdown& out) const {
    const KernelSpec& ker = prob_.kernel;
    for (const NeumannQuadPoint& p : res_.slab(n).neumann) {
      double acc = 0.0;
      for (int m : subs_[n]) {
        const double a = z_.part.nodes[m - 1], b = z_.part.nodes[m];
        auto integrand = [&](double t) {
          const Eigen::Vector2d sig = p.sigma.eval(t);
          const Eigen::Vector2d hist =
              ker.is_zero() ? Eigen::Vector2d::Zero()
                            : pointwise_history(ker, p.sigma, t);
          const Eigen::Vector2d gd = sig - hist;
          return (gd - prob_.g(p.x, t)).dot(weight2_at(n, p.x, t));
        };
        acc += integrate_gauss(integrand, a, b, 6);
      }
      out.per_slab[n - 1][2][p.facet_cell] += p.w * acc;
      out.abs_scale += std::abs(p.w * acc);
    }
  }

  // pointwise dual weight W2(x, t) on slab n
  Eigen::Vector2d weight2_at(int n, const Vec& x, double t) const {
    const WorkSlab& w = work_[n - 1];
    const int m = z_.part.slab_of(t);
    const int i = m - subs_[n].front();
    const double xi = (t - z_.part.nodes[m - 1]) / z_.part.k(m);
    std::array<double, 3> bb{};
    const int K = w.space->mesh().locate(x, bb);
    const Eigen::Vector2d za = w.space->eval_on_cell(w.z2[i], K, bb);
    const Eigen::Vector2d zb = w.space->eval_on_cell(w.z2[i + 1], K, bb);
    return (1.0 - xi) * za + xi * zb -
           w.space->eval_on_cell(w.h2, K, bb);
  }

  // Theta_4: interior facet jumps (r_d, W2)_{dK^n}, counted for both owners
  void assemble_jump(int n, ThetaBreakdown& out) const {
    const auto& interior = res_.slab(n).interior;
    const double ta = U_.part.nodes[n - 1], kn = U_.part.k(n);
    for (std::size_t fi = 0; fi < interior.size(); ++fi) {
      const auto& fr = interior[fi];
      double acc = 0.0;
      for (int m : subs_[n]) {
        const double a = z_.part.nodes[m - 1], b = z_.part.nodes[m];
        auto integrand = [&](double t) {
          const double xi = (t - ta) / kn;
          const Eigen::Vector2d r = (1.0 - xi) * fr.r_a + xi * fr.r_b;
          return r.dot(facet_weight(n, fi, n, t));
        };
        acc += integrate_gauss(integrand, a, b, 2);  // quadratic integrand
      }
      out.per_slab[n - 1][3][fr.cell_in] += acc;
      out.per_slab[n - 1][3][fr.cell_out] += acc;
      out.abs_scale += 2.0 * std::abs(acc);
    }
  }

  // representation 1: Theta_5^{n,j} = -\int_{I_n} ((K*r_d)^j(t), W2(t))_{dK}
  void assemble_fifth_rep1(int n, int j, ThetaBreakdown& out) const {
    const KernelSpec& ker = prob_.kernel;
    if (ker.is_zero()) return;
    const auto& interior = res_.slab(j).interior;
    const double ja = U_.part.nodes[j - 1], jb = U_.part.nodes[j];
    double pair_total = 0.0;
    const bool singular =
        ker.type() == KernelType::PowerLaw && ker.rho() < 1.0;
    for (std::size_t fi = 0; fi < interior.size(); ++fi) {
      const auto& fr = interior[fi];
      double acc = 0.0;
      for (int m : subs_[n]) {
        const double a = z_.part.nodes[m - 1], b = z_.part.nodes[m];
        auto integrand = [&](double t) {
          const SegmentVals mv = moment_forward(ker, ja, jb, t);
          const Eigen::Vector2d conv = mv.left * fr.r_a + mv.right * fr.r_b;
          return conv.dot(facet_weight(j, fi, n, t));
        };
        // the self-slab moment behaves like (t - t_{n-1})^rho at the slab
        // start; grade the first sub-slab for singular kernels
        if (singular && j == n && m == subs_[n].front())
          acc += integrate_graded_left(integrand, a, b, 10, 10);
        else
          acc += integrate_gauss(integrand, a, b, 10);
      }
      acc = -acc;
      out.per_slab[j - 1][4][fr.cell_in] += acc;
      out.per_slab[j - 1][4][fr.cell_out] += acc;
      out.abs_scale += 2.0 * std::abs(acc);
      pair_total += 2.0 * acc;
    }
    if (pair_total != 0.0) out.fifth_pairs[{n, j}] += pair_total;
  }

  // representation 2: Theta_5^n = -(r_d, \int_t^T K(s-t) W2(s) ds)_{dK^n}
  void assemble_fifth_rep2(int n, ThetaBreakdown& out) const {
    const KernelSpec& ker = prob_.kernel;
    if (ker.is_zero()) return;
    const auto& interior = res_.slab(n).interior;
    const double ta = U_.part.nodes[n - 1], kn = U_.part.k(n);
    const bool singular =
        ker.type() == KernelType::PowerLaw && ker.rho() < 1.0;
    double pair_total = 0.0;
    for (std::size_t fi = 0; fi < interior.size(); ++fi) {
      const auto& fr = interior[fi];
      const auto path = facet_weight_path(n, fi);
      double acc = 0.0;
      for (int m : subs_[n]) {
        const double a = z_.part.nodes[m - 1], b = z_.part.nodes[m];
        auto integrand = [&](double t) {
          const double xi = (t - ta) / kn;
          const Eigen::Vector2d r = (1.0 - xi) * fr.r_a + xi * fr.r_b;
          return r.dot(reversed_tail(ker, path, t));
        };
        if (singular) {
          auto flipped = [&](double t) { return integrand(a + b - t); };
          acc += integrate_graded_left(flipped, a, b, 10, 10);
        } else {
          acc += integrate_gauss(integrand, a, b, 10);
        }
      }
      acc = -acc;
      out.per_slab[n - 1][4][fr.cell_in] += acc;
      out.per_slab[n - 1][4][fr.cell_out] += acc;
      out.abs_scale += 2.0 * std::abs(acc);
      pair_total += 2.0 * acc;
    }
    if (pair_total != 0.0) out.fifth_pairs[{n, n}] += pair_total;
  }

  // representation 3: the slab-j slice of the rep-2 tail
  void assemble_fifth_rep3(int n, int j, ThetaBreakdown& out) const {
    const KernelSpec& ker = prob_.kernel;
    if (ker.is_zero()) return;
    const auto& interior = res_.slab(n).interior;
    const double ta = U_.part.nodes[n - 1], kn = U_.part.k(n);
    const bool singular =
        ker.type() == KernelType::PowerLaw && ker.rho() < 1.0;
    double pair_total = 0.0;
    for (std::size_t fi = 0; fi < interior.size(); ++fi) {
      const auto& fr = interior[fi];
      const auto path = facet_weight_path(n, fi);
      double acc = 0.0;
      for (int m : subs_[n]) {
        const double a = z_.part.nodes[m - 1], b = z_.part.nodes[m];
        auto integrand = [&](double t) {
          const double xi = (t - ta) / kn;
          const Eigen::Vector2d r = (1.0 - xi) * fr.r_a + xi * fr.r_b;
          Eigen::Vector2d tail = Eigen::Vector2d::Zero();
          for (int mm : subs_[j])
            tail += reversed_piece(ker, path, mm - 1, t);
          return r.dot(tail);
        };
        if (singular && j == n) {
          auto flipped = [&](double t) { return integrand(a + b - t); };
          acc += integrate_graded_left(flipped, a, b, 10, 10);
        } else {
          acc += integrate_gauss(integrand, a, b, 10);
        }
      }
      acc = -acc;
      out.per_slab[n - 1][4][fr.cell_in] += acc;
      out.per_slab[n - 1][4][fr.cell_out] += acc;
      out.abs_scale += 2.0 * std::abs(acc);
      pair_total += 2.0 * acc;
    }
    if (pair_total != 0.0) out.fifth_pairs[{n, j}] += pair_total;
  }

  OperatorSet& level_ops(int n) const {
    const int id = U_.level_space[n]->mesh().id();
    auto it = ops_.find(id);
    if (it == ops_.end())
      it = ops_.emplace(id, std::make_unique<OperatorSet>(U_.level_space[n],
                                                          prob_.elast))
               .first;
    return *it->second;
  }

  const SpaceTimeSolution& U_;
  const ProblemSpec& prob_;
  const DualSolution& z_;
  ResidualData res_;
  std::vector<int> sub_of_;             // refined sub-slab -> primal slab
  std::vector<std::vector<int>> subs_;  // primal slab -> refined sub-slabs
  std::vector<Eigen::VectorXd> zhk1_, zhk2_;  // per primal slab, level space
  std::vector<WorkSlab> work_;
  // facet weights: [slab j-1][facet][refined node] and [...][primal slab]
  std::vector<std::vector<std::vector<Eigen::Vector2d>>> fw_ref_;
  std::vector<std::vector<std::vector<Eigen::Vector2d>>> fw_hk_;
  mutable std::map<int, std::unique_ptr<OperatorSet>> ops_;
};

}  // namespace viscofem
