// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <functional>
#include <memory>

#include "viscofem/fe_space.hpp"

namespace viscofem {

struct ElasticParams {
  double mu0 = 1.0;
  double lambda0 = 1.0;
  // scalar 1D modulus of the reduced elasticity operator
  double modulus_1d() const { return 2.0 * mu0 + lambda0; }
};

// sigma0 = 2 mu0 eps + lambda0 tr(eps) I from the displacement gradient
inline Eigen::Matrix2d sigma0_from_grad(const ElasticParams& p,
                                        const Eigen::Matrix2d& G, int dim) {
  if (dim == 1) {
    Eigen::Matrix2d s = Eigen::Matrix2d::Zero();
    s(0, 0) = p.modulus_1d() * G(0, 0);
    return s;
  }
  const Eigen::Matrix2d eps = 0.5 * (G + G.transpose());
  return 2.0 * p.mu0 * eps +
         p.lambda0 * eps.trace() * Eigen::Matrix2d::Identity();
}

namespace adetail {

// local P1 mass on a simplex (per scalar component), scaled by measure
inline void local_mass(int dim, double meas, Eigen::Matrix3d& M, int& nv) {
  if (dim == 1) {
    nv = 2;
    M.setZero();
    M(0, 0) = M(1, 1) = meas / 3.0;
    M(0, 1) = M(1, 0) = meas / 6.0;
  } else {
    nv = 3;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) M(i, j) = meas / 12.0 * (i == j ? 2.0 : 1.0);
  }
}

// containing leaf of `mesh` that is an ancestor-or-self of forest cell c
inline int containing_cell(const SpatialMesh& mesh, int c) {
  const Forest& f = mesh.forest();
  for (int x = c; x >= 0; x = f.cells[x].parent)
    if (mesh.has_cell(x)) return x;
  throw UnrelatedMeshes("cell not covered by mesh");
}

}  // namespace adetail

// ---------------------------------------------------------------------------
// Mass, stiffness (elasticity form) and component-gradient matrices on the
// free dofs of a space, with constraints condensed.
// ---------------------------------------------------------------------------
class OperatorSet {
 public:
  OperatorSet(std::shared_ptr<const FeSpace> space, ElasticParams params)
      : space_(std::move(space)), params_(params) {
    assemble();
  }

  const FeSpace& space() const { return *space_; }
  const ElasticParams& params() const { return params_; }
  const Eigen::SparseMatrix<double>& M() const { return M_; }
  const Eigen::SparseMatrix<double>& S() const { return S_; }
  const Eigen::SparseMatrix<double>& G() const { return G_; }

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& mass_solver() const {
    if (!mass_solver_) {
      mass_solver_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
      mass_solver_->compute(M_);
      if (mass_solver_->info() != Eigen::Success)
        throw SingularMass("mass factorization failed");
    }
    return *mass_solver_;
  }

  // discrete norms ||A^{l/2} v||: l=0 mass norm, l=1 energy norm
  double discrete_norm(const Eigen::VectorXd& free, int l) const {
    if (l == 0) return std::sqrt(std::max(0.0, free.dot(M_ * free)));
    if (l == 1) return std::sqrt(std::max(0.0, free.dot(S_ * free)));
    throw UnsupportedExponent("discrete_norm supports l in {0,1}");
  }
  // gradient seminorm ||grad v|| (componentwise)
  double grad_norm(const Eigen::VectorXd& free) const {
    return std::sqrt(std::max(0.0, free.dot(G_ * free)));
  }
  // || A_h v || with A_h = M^{-1} G (discrete vector Laplacian image)
  double laplacian_image_norm(const Eigen::VectorXd& free) const {
    Eigen::VectorXd w = mass_solver().solve(G_ * free);
    return std::sqrt(std::max(0.0, w.dot(M_ * w)));
  }
  // A_h-bar action used by the time estimator terms: M^{-1} S v
  Eigen::VectorXd apply_Ah(const Eigen::VectorXd& free) const {
    return mass_solver().solve(S_ * free);
  }

 private:
  void assemble() {
    const FeSpace& sp = *space_;
    const SpatialMesh& mesh = sp.mesh();
    const Forest& f = mesh.forest();
    const int vd = sp.vdim();
    std::vector<Eigen::Triplet<double>> tm, ts, tg;
    Eigen::Matrix3d Ml;
    int nv = 0;
    for (int c : mesh.cells()) {
      const double meas = f.measure(c);
      if (meas <= 0.0) throw DegenerateCell("cell " + std::to_string(c));
      adetail::local_mass(mesh.dim(), meas, Ml, nv);
      const auto& cv = f.cells[c].v;
      std::array<int, 3> nodes{};
      for (int i = 0; i < nv; ++i) nodes[i] = sp.node_of_vertex(cv[i]);

      if (mesh.dim() == 1) {
        const double h = meas;
        const double e = params_.modulus_1d() / h;
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) {
            tm.emplace_back(nodes[i], nodes[j], Ml(i, j));
            const double s = (i == j ? e : -e);
            ts.emplace_back(nodes[i], nodes[j], s);
            tg.emplace_back(nodes[i], nodes[j], (i == j ? 1.0 : -1.0) / h);
          }
      } else {
        const auto g = sp.basis_gradients(c);
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) {
            const double gg = g[i].dot(g[j]);
            for (int ci = 0; ci < 2; ++ci) {
              tm.emplace_back(nodes[i] * 2 + ci, nodes[j] * 2 + ci, Ml(i, j));
              tg.emplace_back(nodes[i] * 2 + ci, nodes[j] * 2 + ci, meas * gg);
              for (int cj = 0; cj < 2; ++cj) {
                const double val =
                    meas * (params_.mu0 * ((ci == cj ? gg : 0.0) +
                                           g[i][cj] * g[j][ci]) +
                            params_.lambda0 * g[i][ci] * g[j][cj]);
                ts.emplace_back(nodes[i] * 2 + ci, nodes[j] * 2 + cj, val);
              }
            }
          }
      }
    }
    const int nfull = sp.n_nodes() * vd;
    Eigen::SparseMatrix<double> Mf(nfull, nfull), Sf(nfull, nfull), Gf(nfull, nfull);
    Mf.setFromTriplets(tm.begin(), tm.end());
    Sf.setFromTriplets(ts.begin(), ts.end());
    Gf.setFromTriplets(tg.begin(), tg.end());
    const auto& C = sp.expansion();
    M_ = C.transpose() * Mf * C;
    S_ = C.transpose() * Sf * C;
    G_ = C.transpose() * Gf * C;
  }

  std::shared_ptr<const FeSpace> space_;
  ElasticParams params_;
  Eigen::SparseMatrix<double> M_, S_, G_;
  mutable std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> mass_solver_;
};

// ---------------------------------------------------------------------------
// Cross-space products on the overlay mesh: exact for P1 functions.
// Inputs are FULL nodal vectors of `from`; results are FULL dual vectors
// on `to` (restrict with to.restrict_dual for free dofs).
// ---------------------------------------------------------------------------

// (u, phi_j)_{L2} for all nodes j of `to`
inline Eigen::VectorXd cross_mass_dual(const FeSpace& from,
                                       const Eigen::VectorXd& full_from,
                                       const FeSpace& to) {
  auto overlay = union_mesh(from.mesh_ptr(), to.mesh_ptr());
  const Forest& f = overlay->forest();
  const int vd = to.vdim();
  Eigen::VectorXd r = Eigen::VectorXd::Zero(to.n_nodes() * vd);
  Eigen::Matrix3d Ml;
  int nv = 0;
  for (int K : overlay->cells()) {
    const int ca = adetail::containing_cell(from.mesh(), K);
    const int cb = adetail::containing_cell(to.mesh(), K);
    adetail::local_mass(overlay->dim(), f.measure(K), Ml, nv);
    const auto& kv = f.cells[K].v;
    // from-function values at overlay vertices
    std::array<Eigen::Vector2d, 3> uv;
    std::array<std::array<double, 3>, 3> bb{};  // to-basis barycentric at overlay verts
    for (int p = 0; p < nv; ++p) {
      std::array<double, 3> ba{};
      f.contains(ca, f.xy[kv[p]], ba, 1.0);
      uv[p] = from.eval_on_cell(full_from, ca, ba);
      f.contains(cb, f.xy[kv[p]], bb[p], 1.0);
    }
    const auto& bv = f.cells[cb].v;
    for (int j = 0; j < nv; ++j) {
      const int node = to.node_of_vertex(bv[j]);
      for (int p = 0; p < nv; ++p)
        for (int q = 0; q < nv; ++q)
          for (int c = 0; c < vd; ++c)
            r[node * vd + c] += bb[p][j] * Ml(p, q) * uv[q][c];
    }
  }
  return r;
}

// a(u, phi_j) for all nodes j of `to` (elasticity form)
inline Eigen::VectorXd cross_stiffness_dual(const FeSpace& from,
                                            const Eigen::VectorXd& full_from,
                                            const FeSpace& to,
                                            const ElasticParams& params) {
  auto overlay = union_mesh(from.mesh_ptr(), to.mesh_ptr());
  const Forest& f = overlay->forest();
  const int vd = to.vdim();
  Eigen::VectorXd r = Eigen::VectorXd::Zero(to.n_nodes() * vd);
  for (int K : overlay->cells()) {
    const int ca = adetail::containing_cell(from.mesh(), K);
    const int cb = adetail::containing_cell(to.mesh(), K);
    const double meas = f.measure(K);
    const Eigen::Matrix2d sig =
        sigma0_from_grad(params, from.grad_on_cell(full_from, ca), overlay->dim());
    const auto& bv = f.cells[cb].v;
    if (overlay->dim() == 1) {
      // d phi / dx of the to-cell basis, constant; phi ordering (left, right)
      const double hb = f.measure(cb);
      const double g[2] = {-1.0 / hb, 1.0 / hb};
      for (int j = 0; j < 2; ++j)
        r[to.node_of_vertex(bv[j])] += meas * sig(0, 0) * g[j];
    } else {
      const auto gb = to.basis_gradients(cb);
      for (int j = 0; j < 3; ++j) {
        const int node = to.node_of_vertex(bv[j]);
        for (int c = 0; c < 2; ++c)
          r[node * 2 + c] += meas * (sig(c, 0) * gb[j].x() + sig(c, 1) * gb[j].y());
      }
    }
  }
  return r;
}

// scalar a(u, v) across two spaces
inline double cross_stiffness_value(const FeSpace& fu, const Eigen::VectorXd& u,
                                    const FeSpace& fv, const Eigen::VectorXd& v,
                                    const ElasticParams& params) {
  return cross_stiffness_dual(fu, u, fv, params).dot(v);
}
// scalar (u, v)_{L2} across two spaces
inline double cross_mass_value(const FeSpace& fu, const Eigen::VectorXd& u,
                               const FeSpace& fv, const Eigen::VectorXd& v) {
  return cross_mass_dual(fu, u, fv).dot(v);
}

// ---------------------------------------------------------------------------
// Loads: duals of analytic data against the P1 basis.
// ---------------------------------------------------------------------------
using SpatialFn = std::function<Eigen::Vector2d(const Vec&)>;

inline Eigen::VectorXd volume_load_dual(const FeSpace& sp, const SpatialFn& fn) {
  const SpatialMesh& mesh = sp.mesh();
  const Forest& f = mesh.forest();
  const int vd = sp.vdim();
  Eigen::VectorXd r = Eigen::VectorXd::Zero(sp.n_nodes() * vd);
  if (mesh.dim() == 1) {
    const QuadRule& q = gauss_legendre(3);
    for (int c : mesh.cells()) {
      const auto& cv = f.cells[c].v;
      const double a = f.xy[cv[0]].x(), b = f.xy[cv[1]].x(), h = b - a;
      for (std::size_t g = 0; g < q.x.size(); ++g) {
        const double x = 0.5 * (a + b) + 0.5 * h * q.x[g];
        const double w = 0.5 * h * q.w[g];
        const double val = fn(Vec(x, 0.0))[0];
        r[sp.node_of_vertex(cv[0])] += w * val * (b - x) / h;
        r[sp.node_of_vertex(cv[1])] += w * val * (x - a) / h;
      }
    }
  } else {
    const TriRule& q = tri_rule_d5();
    for (int c : mesh.cells()) {
      const auto& cv = f.cells[c].v;
      const double meas = f.measure(c);
      for (std::size_t g = 0; g < q.w.size(); ++g) {
        const Vec x = q.bary[g][0] * f.xy[cv[0]] + q.bary[g][1] * f.xy[cv[1]] +
                      q.bary[g][2] * f.xy[cv[2]];
        const Eigen::Vector2d val = fn(x);
        const double w = meas * q.w[g];
        for (int i = 0; i < 3; ++i) {
          const int node = sp.node_of_vertex(cv[i]);
          for (int cc = 0; cc < 2; ++cc)
            r[node * 2 + cc] += w * q.bary[g][i] * val[cc];
        }
      }
    }
  }
  return r;
}

// (g, phi)_{Gamma_N}: traction data integrated over Neumann boundary facets
inline Eigen::VectorXd neumann_load_dual(const FeSpace& sp, const SpatialFn& g) {
  const SpatialMesh& mesh = sp.mesh();
  const Forest& f = mesh.forest();
  const int vd = sp.vdim();
  Eigen::VectorXd r = Eigen::VectorXd::Zero(sp.n_nodes() * vd);
  for (const Facet& fc : mesh.boundary_facets()) {
    if (fc.tag != BTag::Neumann) continue;
    if (mesh.dim() == 1) {
      r[sp.node_of_vertex(fc.v[0])] += g(f.xy[fc.v[0]])[0];
    } else {
      const Vec a = f.xy[fc.v[0]], b = f.xy[fc.v[1]];
      const QuadRule& q = gauss_legendre(3);
      const auto& cv = f.cells[fc.cell_in].v;
      for (std::size_t gg = 0; gg < q.x.size(); ++gg) {
        const Vec x = 0.5 * (a + b) + 0.5 * (b - a) * q.x[gg];
        const double w = 0.5 * fc.measure * q.w[gg];
        const Eigen::Vector2d val = g(x);
        std::array<double, 3> bb{};
        f.contains(fc.cell_in, x, bb, 1.0);
        for (int i = 0; i < 3; ++i) {
          const int node = sp.node_of_vertex(cv[i]);
          for (int cc = 0; cc < 2; ++cc)
            r[node * 2 + cc] += w * bb[i] * val[cc];
        }
      }
    }
  }
  return r;
}

// sqrt( sum_K w(K) \int_K |v|^2 ) with exact P1 integration of FULL values
inline double weighted_l2_norm(const FeSpace& sp, const Eigen::VectorXd& full,
                               const std::function<double(int)>& cell_weight) {
  const SpatialMesh& mesh = sp.mesh();
  const Forest& f = mesh.forest();
  const int vd = sp.vdim();
  Eigen::Matrix3d Ml;
  int nv = 0;
  double acc = 0.0;
  for (int c : mesh.cells()) {
    adetail::local_mass(mesh.dim(), f.measure(c), Ml, nv);
    const auto& cv = f.cells[c].v;
    double cell = 0.0;
    for (int i = 0; i < nv; ++i)
      for (int j = 0; j < nv; ++j)
        for (int cc = 0; cc < vd; ++cc)
          cell += Ml(i, j) * full[sp.node_of_vertex(cv[i]) * vd + cc] *
                  full[sp.node_of_vertex(cv[j]) * vd + cc];
    acc += cell_weight(c) * cell;
  }
  return std::sqrt(std::max(0.0, acc));
}

// L2 norm over the mesh of an analytic function minus the FE function
inline double l2_error_vs(const FeSpace& sp, const Eigen::VectorXd& full,
                          const SpatialFn& exact) {
  const SpatialMesh& mesh = sp.mesh();
  const Forest& f = mesh.forest();
  double acc = 0.0;
  if (mesh.dim() == 1) {
    const QuadRule& q = gauss_legendre(4);
    for (int c : mesh.cells()) {
      const auto& cv = f.cells[c].v;
      const double a = f.xy[cv[0]].x(), b = f.xy[cv[1]].x(), h = b - a;
      const double u0 = full[sp.node_of_vertex(cv[0])];
      const double u1 = full[sp.node_of_vertex(cv[1])];
      for (std::size_t g = 0; g < q.x.size(); ++g) {
        const double x = 0.5 * (a + b) + 0.5 * h * q.x[g];
        const double uh = u0 * (b - x) / h + u1 * (x - a) / h;
        acc += 0.5 * h * q.w[g] * sqr(uh - exact(Vec(x, 0.0))[0]);
      }
    }
  } else {
    const TriRule& q = tri_rule_d5();
    for (int c : mesh.cells()) {
      const auto& cv = f.cells[c].v;
      const double meas = f.measure(c);
      for (std::size_t g = 0; g < q.w.size(); ++g) {
        const Vec x = q.bary[g][0] * f.xy[cv[0]] + q.bary[g][1] * f.xy[cv[1]] +
                      q.bary[g][2] * f.xy[cv[2]];
        Eigen::Vector2d uh = Eigen::Vector2d::Zero();
        for (int i = 0; i < 3; ++i) {
          const int node = sp.node_of_vertex(cv[i]);
          uh[0] += q.bary[g][i] * full[node * 2];
          uh[1] += q.bary[g][i] * full[node * 2 + 1];
        }
        acc += meas * q.w[g] * (uh - exact(x)).squaredNorm();
      }
    }
  }
  return std::sqrt(acc);
}

}  // namespace viscofem
