// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "viscofem/primal_solver.hpp"

using namespace viscofem;
using Catch::Approx;

namespace {
std::vector<std::shared_ptr<const SpatialMesh>> uniform_meshes(
    const ProblemSpec& prob, int n, int levels) {
  auto m = SpatialMesh::root_mesh(prob.make_forest(n));
  return std::vector<std::shared_ptr<const SpatialMesh>>(levels, m);
}

// max over time levels of the L2 displacement error against the exact solution
double linf_l2_error(const SpaceTimeSolution& U, const ProblemSpec& prob) {
  double worst = 0.0;
  for (int n = 0; n <= U.N(); ++n) {
    const double t = U.part.nodes[n];
    const FeSpace& sp = *U.level_space[n];
    const double e = l2_error_vs(sp, sp.expand(U.u1[n]), [&](const Vec& x) {
      return prob.exact->u1(x, t);
    });
    worst = std::max(worst, e);
  }
  return worst;
}
}  // namespace

TEST_CASE("zero data produces the zero solution") {
  ProblemSpec p = mms_linear(KernelSpec::zero());
  p.g = pdetail::zero_fn;
  p.u0 = [](const Vec&) { return Eigen::Vector2d::Zero(); };
  p.v0 = [](const Vec&) { return Eigen::Vector2d::Zero(); };
  auto U = solve_primal(p, TimePartition::uniform(1.0, 4),
                        uniform_meshes(p, 8, 5));
  for (int n = 0; n <= U.N(); ++n) {
    REQUIRE(U.u1[n].norm() == 0.0);
    REQUIRE(U.u2[n].norm() == 0.0);
  }
}

TEST_CASE("mms_linear is reproduced exactly") {
  SECTION("zero kernel") {
    ProblemSpec p = mms_linear(KernelSpec::zero(), {1.2, 0.8});
    auto U = solve_primal(p, TimePartition::uniform(1.0, 5),
                          uniform_meshes(p, 7, 6));
    REQUIRE(linf_l2_error(U, p) < 1e-12);
  }
  SECTION("Prony kernel end-to-end convolution-weight check") {
    KernelSpec k = KernelSpec::prony({{0.4, 1.0}});
    validate_kernel(k, 10.0);
    ProblemSpec p = mms_linear(k, {1.0, 1.0});
    auto U = solve_primal(p, TimePartition::uniform(1.0, 6),
                          uniform_meshes(p, 5, 7));
    REQUIRE(linf_l2_error(U, p) < 1e-9);
  }
  SECTION("g value of the Prony variant matches the stated spot value") {
    KernelSpec k = KernelSpec::prony({{0.4, 1.0}});
    validate_kernel(k, 10.0);
    ProblemSpec p = mms_linear(k, {0.5, 0.0});  // E = 1
    REQUIRE(p.g(Vec(1.0, 0.0), 1.0)[0] ==
            Approx(1.0 - 0.4 * std::exp(-1.0)).epsilon(1e-12));
    // quadrature oracle for the convolution integral
    auto f = [](double s) { return std::exp(-(1.0 - s)) * s; };
    const double conv = 0.4 * integrate_adaptive(f, 0.0, 1.0, 1e-13);
    REQUIRE(p.g(Vec(1.0, 0.0), 1.0)[0] == Approx(1.0 - conv).epsilon(1e-11));
  }
}

TEST_CASE("single-slab modal step matches the trapezoidal closed form") {
  // zero kernel, f = g = 0, u0 = 0, v0 = discrete eigenvector:
  // U2^1 = (1 - w^2 k^2/4)/(1 + w^2 k^2/4) v0, U1^1 = (k/2)(v0 + U2^1)
  auto mesh = SpatialMesh::root_mesh(
      Forest::interval(0.0, 1.0, 6, BTag::Dirichlet, BTag::Dirichlet));
  auto sp = std::make_shared<FeSpace>(mesh);
  ElasticParams par{0.4, 0.2};
  OperatorSet ops(sp, par);
  // inverse power iteration for the smallest generalized eigenpair
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(ops.S());
  Eigen::VectorXd v = Eigen::VectorXd::Ones(sp->n_dofs());
  for (int it = 0; it < 200; ++it) {
    v = ldlt.solve(ops.M() * v);
    v /= std::sqrt(v.dot(ops.M() * v));
  }
  const double omega2 = v.dot(ops.S() * v);

  ProblemSpec p;
  p.dim = 1;
  p.elast = par;
  p.kernel = KernelSpec::zero();
  p.side_tags = {BTag::Dirichlet, BTag::Dirichlet, BTag::None, BTag::None};
  p.f = pdetail::zero_fn;
  p.g = pdetail::zero_fn;
  p.u0 = [](const Vec&) { return Eigen::Vector2d::Zero(); };
  // v0 = the eigenvector as a nodal function
  Eigen::VectorXd vfull = sp->expand(v);
  p.v0 = [sp, vfull](const Vec& x) {
    return Eigen::Vector2d(sp->eval_full(vfull, x)[0], 0.0);
  };

  const double k = 0.3;
  TimePartition part;
  part.nodes = {0.0, k};
  auto U = solve_primal(p, part, {mesh});
  const double c = (1.0 - omega2 * k * k / 4.0) / (1.0 + omega2 * k * k / 4.0);
  REQUIRE((U.u2[1] - c * v).norm() < 1e-9 * v.norm());
  REQUIRE((U.u1[1] - 0.5 * k * (1.0 + c) * v).norm() < 1e-9 * v.norm());
}

TEST_CASE("vanishing step keeps the state (continuity)") {
  KernelSpec k = KernelSpec::prony({{0.4, 1.0}});
  validate_kernel(k, 10.0);
  ProblemSpec p = mms_smooth(1, k);
  auto mesh = SpatialMesh::root_mesh(p.make_forest(8));
  TimePartition part;
  part.nodes = {0.0, 1e-8};
  auto U = solve_primal(p, part, {mesh});
  REQUIRE((U.u1[1] - U.u1[0]).lpNorm<Eigen::Infinity>() < 1e-6);
  REQUIRE((U.u2[1] - U.u2[0]).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("Galerkin residual of a solved problem is tiny") {
  KernelSpec k = KernelSpec::prony({{0.4, 1.0}});
  validate_kernel(k, 10.0);
  for (int dim : {1, 2}) {
    ProblemSpec p = mms_smooth(dim, k);
    auto U = solve_primal(p, TimePartition::uniform(1.0, 3),
                          uniform_meshes(p, dim == 1 ? 8 : 3, 4));
    auto r = galerkin_residual(U, p);
    CAPTURE(dim, r.max_residual, r.scale);
    REQUIRE(r.max_residual <= 1e-10 * r.scale);
  }
}

TEST_CASE("Galerkin residual detects perturbed solutions") {
  ProblemSpec p = mms_smooth(1, KernelSpec::zero());
  auto U = solve_primal(p, TimePartition::uniform(1.0, 3),
                        uniform_meshes(p, 8, 4));
  auto clean = galerkin_residual(U, p);
  U.u2[2][1] += 1e-3;
  // rebuild the slab endpoint caches touching level 2
  const FeSpace& tsp = *U.level_space[2];
  U.u2b[1] = prolong_full(tsp, tsp.expand(U.u2[2]), *U.slab_space[1]);
  U.u2a[2] = prolong_full(tsp, tsp.expand(U.u2[2]), *U.slab_space[2]);
  auto bad = galerkin_residual(U, p);
  REQUIRE(bad.max_residual > 1e6 * std::max(clean.max_residual, 1e-300));
  REQUIRE(bad.max_residual >= 1e-6 * bad.scale);
}

TEST_CASE("solver with changing meshes stays consistent") {
  KernelSpec k = KernelSpec::prony({{0.4, 1.0}});
  validate_kernel(k, 10.0);
  ProblemSpec p = mms_linear(k);
  auto m0 = SpatialMesh::root_mesh(p.make_forest(4));
  std::shared_ptr<const SpatialMesh> m1 = refine(*m0, {m0->cells()[1]});
  std::shared_ptr<const SpatialMesh> m2 = refine(*m1, {m1->cells()[0]});
  // refine, refine, then coarsen back
  std::vector<std::shared_ptr<const SpatialMesh>> meshes = {m0, m0, m1, m2, m1};
  auto U = solve_primal(p, TimePartition::uniform(1.0, 4), meshes);
  // the exact solution is linear in space: representable on every mesh,
  // so mesh change must not break exactness
  double worst = 0.0;
  for (int n = 0; n <= U.N(); ++n) {
    const FeSpace& sp = *U.level_space[n];
    const double t = U.part.nodes[n];
    worst = std::max(worst,
                     l2_error_vs(sp, sp.expand(U.u1[n]), [&](const Vec& x) {
                       return p.exact->u1(x, t);
                     }));
  }
  REQUIRE(worst < 1e-9);
  auto r = galerkin_residual(U, p);
  REQUIRE(r.max_residual <= 1e-10 * r.scale);
}

TEST_CASE("energy conservation and dissipation") {
  SECTION("zero kernel, no loads, pure Dirichlet: energy conserved") {
    ProblemSpec p;
    p.dim = 1;
    p.elast = {0.5, 0.5};
    p.kernel = KernelSpec::zero();
    p.side_tags = {BTag::Dirichlet, BTag::Dirichlet, BTag::None, BTag::None};
    p.f = pdetail::zero_fn;
    p.g = pdetail::zero_fn;
    p.u0 = [](const Vec& x) {
      return Eigen::Vector2d(std::sin(M_PI * x.x()), 0.0);
    };
    p.v0 = [](const Vec& x) {
      return Eigen::Vector2d(std::sin(2.0 * M_PI * x.x()), 0.0);
    };
    auto mesh = SpatialMesh::root_mesh(p.make_forest(16));
    auto U = solve_primal(p, TimePartition::uniform(2.0, 20), {mesh});
    auto E = energy_history(U, p.elast);
    for (std::size_t n = 1; n < E.size(); ++n)
      REQUIRE(E[n] == Approx(E[0]).epsilon(1e-9));
  }
  SECTION("contractive kernel: energy non-increasing (monitored)") {
    KernelSpec k = KernelSpec::prony({{0.4, 1.0}});
    validate_kernel(k, 10.0);
    ProblemSpec p;
    p.dim = 1;
    p.elast = {0.5, 0.5};
    p.kernel = k;
    p.side_tags = {BTag::Dirichlet, BTag::Dirichlet, BTag::None, BTag::None};
    p.f = pdetail::zero_fn;
    p.g = pdetail::zero_fn;
    p.u0 = [](const Vec& x) {
      return Eigen::Vector2d(std::sin(M_PI * x.x()), 0.0);
    };
    p.v0 = [](const Vec&) { return Eigen::Vector2d::Zero(); };
    auto mesh = SpatialMesh::root_mesh(p.make_forest(16));
    auto U = solve_primal(p, TimePartition::uniform(2.0, 20), {mesh});
    auto E = energy_history(U, p.elast);
    // the elastic energy is dissipative over the run; small phase-turn
    // rebounds of the memory term are physical, so the monitor bounds the
    // whole history by the initial energy and requires net decay
    for (std::size_t n = 1; n < E.size(); ++n)
      REQUIRE(E[n] <= E[0] * (1.0 + 1e-6));
    REQUIRE(E.back() < 0.75 * E[0]);
  }
}

TEST_CASE("Prony recurrence matches the dense history path") {
  KernelSpec k = KernelSpec::prony({{0.3, 0.7}, {0.2, 4.0}});
  validate_kernel(k, 10.0);
  ProblemSpec p = mms_smooth(1, k);
  auto meshes = uniform_meshes(p, 10, 9);
  TimePartition part = TimePartition::uniform(1.0, 8);
  PrimalOptions fast, dense;
  dense.prony_recurrence = false;
  auto Uf = solve_primal(p, part, meshes, fast);
  auto Ud = solve_primal(p, part, meshes, dense);
  for (int n = 0; n <= part.N(); ++n) {
    REQUIRE((Uf.u1[n] - Ud.u1[n]).lpNorm<Eigen::Infinity>() < 1e-11);
    REQUIRE((Uf.u2[n] - Ud.u2[n]).lpNorm<Eigen::Infinity>() < 1e-11);
  }
}

TEST_CASE("smooth MMS converges at second order") {
  KernelSpec k = KernelSpec::prony({{0.4, 1.0}});
  validate_kernel(k, 10.0);
  ProblemSpec p = mms_smooth(1, k);
  std::vector<double> errs;
  for (int lev = 0; lev < 3; ++lev) {
    const int n = 8 << lev;
    auto U = solve_primal(p, TimePartition::uniform(1.0, n),
                          uniform_meshes(p, n, n + 1));
    errs.push_back(linf_l2_error(U, p));
  }
  const double order = observed_order(errs[errs.size() - 2], errs.back());
  CAPTURE(errs, order);
  REQUIRE(order >= 1.9);
}
