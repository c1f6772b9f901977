// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "viscofem/aposteriori.hpp"
#include "viscofem/forms.hpp"

using namespace viscofem;
using Catch::Approx;

namespace {

// a random "solution" object: valid structure, arbitrary coefficients
SpaceTimeSolution random_solution(const ProblemSpec& prob,
                                  const TimePartition& part,
                                  std::shared_ptr<const SpatialMesh> mesh,
                                  std::mt19937& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  SpaceTimeSolution s;
  s.part = part;
  std::vector<std::shared_ptr<const SpatialMesh>> meshes(part.N() + 1, mesh);
  s.level_space = build_level_spaces(meshes);
  s.slab_space = build_slab_spaces(meshes, s.level_space);
  for (int n = 0; n <= part.N(); ++n) {
    Eigen::VectorXd a(s.level_space[n]->n_dofs()), b(s.level_space[n]->n_dofs());
    for (int i = 0; i < a.size(); ++i) {
      a[i] = U(rng);
      b[i] = U(rng);
    }
    s.u1.push_back(a);
    s.u2.push_back(b);
  }
  for (int n = 1; n <= part.N(); ++n) {
    const FeSpace& psp = *s.level_space[n - 1];
    const FeSpace& tsp = *s.level_space[n];
    const FeSpace& usp = *s.slab_space[n - 1];
    s.u1a.push_back(prolong_full(psp, psp.expand(s.u1[n - 1]), usp));
    s.u2a.push_back(prolong_full(psp, psp.expand(s.u2[n - 1]), usp));
    s.u1b.push_back(prolong_full(tsp, tsp.expand(s.u1[n]), usp));
    s.u2b.push_back(prolong_full(tsp, tsp.expand(s.u2[n]), usp));
  }
  return s;
}

ProblemSpec random_data_problem(int dim, KernelSpec ker, std::mt19937& rng) {
  std::uniform_real_distribution<double> U(0.3, 1.4);
  ProblemSpec p;
  p.dim = dim;
  p.T = 1.0;
  p.elast = {U(rng), U(rng)};
  p.kernel = std::move(ker);
  if (!p.kernel.is_zero() && !p.kernel.validated())
    validate_kernel(p.kernel, 100.0);
  p.side_tags = {BTag::Dirichlet, BTag::Neumann, BTag::Neumann, BTag::Neumann};
  const double a0 = U(rng), a1 = U(rng);
  p.f = [a0](const Vec& x, double t) {
    return Eigen::Vector2d(a0 * std::sin(2.0 * x.x() + t), 0.3 * a0 * x.y() * t);
  };
  p.g = [a1](const Vec& x, double t) {
    return Eigen::Vector2d(a1 * std::cos(x.x()) * t, 0.1 * a1 * (1.0 - t) * x.y());
  };
  p.u0 = [](const Vec& x) { return Eigen::Vector2d(0.2 * x.x(), 0.0); };
  p.v0 = [](const Vec& x) { return Eigen::Vector2d(0.0, 0.1 * x.x() * x.y()); };
  return p;
}

}  // namespace

TEST_CASE("residual basics") {
  SECTION("globally linear 1D displacement has zero interior jumps") {
    ProblemSpec p = mms_linear(KernelSpec::zero());
    auto mesh = SpatialMesh::root_mesh(p.make_forest(6));
    auto U = solve_primal(p, TimePartition::uniform(1.0, 3),
                          {std::shared_ptr<const SpatialMesh>(mesh)});
    ResidualData R(U, p);
    for (int n = 1; n <= U.N(); ++n)
      for (const auto& fr : R.slab(n).interior) {
        REQUIRE(fr.r_a.norm() < 1e-13);
        REQUIRE(fr.r_b.norm() < 1e-13);
      }
  }
  SECTION("2D jump on a two-triangle mesh matches the hand formula") {
    auto forest = Forest::rectangle(0, 1, 0, 1, 1, 1,
                                    {BTag::Dirichlet, BTag::Neumann,
                                     BTag::Neumann, BTag::Neumann});
    auto mesh = SpatialMesh::root_mesh(forest);
    auto sp = std::make_shared<FeSpace>(mesh);
    ElasticParams par{0.7, 1.1};
    // piecewise-linear displacement with a kink across the diagonal
    Eigen::VectorXd full(sp->n_nodes() * 2);
    for (int n = 0; n < sp->n_nodes(); ++n) {
      const Vec x = mesh->forest().xy[sp->vertex_of_node(n)];
      full[2 * n] = 0.5 * x.x() + 0.25 * x.y();
      full[2 * n + 1] = -0.1 * x.x() + 0.4 * x.y();
    }
    sp->constrain_full(full);
    const Facet& fc = mesh->interior_facets().front();
    const Eigen::Matrix2d gi = sp->grad_on_cell(full, fc.cell_in);
    const Eigen::Matrix2d go = sp->grad_on_cell(full, fc.cell_out);
    const Eigen::Vector2d hand =
        0.5 * (sigma0_from_grad(par, gi, 2) - sigma0_from_grad(par, go, 2)) *
        fc.normal;
    // build a one-slab solution carrying this displacement
    ProblemSpec p;
    p.dim = 2;
    p.elast = par;
    p.kernel = KernelSpec::zero();
    SpaceTimeSolution U;
    U.part = TimePartition::uniform(1.0, 1);
    U.level_space = {sp, sp};
    U.u1 = {sp->collapse(full), sp->collapse(full)};
    U.u2 = {Eigen::VectorXd::Zero(sp->n_dofs()), Eigen::VectorXd::Zero(sp->n_dofs())};
    U.slab_space = {sp};
    U.u1a = {full};
    U.u1b = {full};
    U.u2a = {Eigen::VectorXd::Zero(full.size())};
    U.u2b = {Eigen::VectorXd::Zero(full.size())};
    p.f = pdetail::zero_fn;
    p.g = pdetail::zero_fn;
    p.u0 = [](const Vec&) { return Eigen::Vector2d(0, 0); };
    p.v0 = [](const Vec&) { return Eigen::Vector2d(0, 0); };
    ResidualData R(U, p);
    bool found = false;
    for (const auto& fr : R.slab(1).interior) {
      if (fr.cell_in == fc.cell_in && fr.cell_out == fc.cell_out) {
        REQUIRE((fr.r_a - hand).norm() < 1e-13);
        found = true;
      }
    }
    REQUIRE(found);
  }
  SECTION("endpoint bound dominates the exact facet norm") {
    std::mt19937 rng(71);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    ProblemSpec p = mms_linear(KernelSpec::zero());
    auto mesh = SpatialMesh::root_mesh(p.make_forest(4));
    auto sol = solve_primal(p, TimePartition::uniform(1.0, 2),
                            {std::shared_ptr<const SpatialMesh>(mesh)});
    ResidualData R(sol, p);
    for (int rep = 0; rep < 200; ++rep) {
      InteriorFacetResidual fr;
      fr.measure = 0.25 + std::abs(U(rng));
      fr.r_a = Eigen::Vector2d(U(rng), U(rng));
      fr.r_b = Eigen::Vector2d(U(rng), U(rng));
      const double exact = R.facet_norm_sq_exact(1, fr);
      const double bound = R.facet_norm_sq_bound(1, fr);
      REQUIRE(exact <= bound * (1.0 + 1e-13));
    }
  }
}

TEST_CASE("representation totals agree across the three forms") {
  std::mt19937 rng(101);
  std::vector<KernelSpec> kernels;
  {
    KernelSpec k1 = KernelSpec::prony({{0.4, 1.0}});
    validate_kernel(k1, 100.0);
    KernelSpec k2 = KernelSpec::prony({{0.25, 0.8}, {0.2, 3.5}});
    validate_kernel(k2, 100.0);
    kernels = {k1, k2};
  }
  int cases = 0;
  for (int rep = 0; rep < 4; ++rep) {
    for (int dim : {1, 2}) {
      ProblemSpec p = random_data_problem(dim, kernels[rep % 2], rng);
      auto mesh = SpatialMesh::root_mesh(p.make_forest(dim == 1 ? 6 : 2));
      TimePartition part = TimePartition::uniform(1.0, 3);
      auto U = random_solution(p, part, mesh, rng);
      // random "reference dual" on the halved partition and refined mesh
      std::shared_ptr<const SpatialMesh> fine = refine_uniform(*mesh);
      auto z = random_solution(p, part.halved(), fine, rng);
      ThetaEstimator est(U, p, z);
      const double t1 = est.representation(Representation::One).total();
      const double t2 = est.representation(Representation::Two).total();
      const double t3 = est.representation(Representation::Three).total();
      const double scale = std::max({1e-3, std::abs(t1), std::abs(t2), std::abs(t3)});
      CAPTURE(dim, rep, t1, t2, t3);
      REQUIRE(std::abs(t1 - t2) <= 1e-8 * scale);
      REQUIRE(std::abs(t2 - t3) <= 1e-8 * scale);
      ++cases;
    }
  }
  REQUIRE(cases == 8);
}

TEST_CASE("representation totals agree for the weakly singular kernel") {
  std::mt19937 rng(103);
  KernelSpec pl = KernelSpec::power_law(0.25, 0.6, 0.8);
  validate_kernel(pl, 100.0);
  ProblemSpec p = random_data_problem(1, pl, rng);
  auto mesh = SpatialMesh::root_mesh(p.make_forest(6));
  TimePartition part = TimePartition::uniform(1.0, 3);
  auto U = random_solution(p, part, mesh, rng);
  std::shared_ptr<const SpatialMesh> fine = refine_uniform(*mesh);
  auto z = random_solution(p, part.halved(), fine, rng);
  ThetaEstimator est(U, p, z);
  const double t1 = est.representation(Representation::One).total();
  const double t2 = est.representation(Representation::Two).total();
  const double t3 = est.representation(Representation::Three).total();
  const double scale = std::max({1e-3, std::abs(t1), std::abs(t2), std::abs(t3)});
  CAPTURE(t1, t2, t3);
  REQUIRE(std::abs(t1 - t2) <= 1e-6 * scale);
  REQUIRE(std::abs(t2 - t3) <= 1e-6 * scale);
}

TEST_CASE("zero kernel kills the fifth indicator") {
  std::mt19937 rng(107);
  ProblemSpec p = random_data_problem(1, KernelSpec::zero(), rng);
  auto mesh = SpatialMesh::root_mesh(p.make_forest(5));
  TimePartition part = TimePartition::uniform(1.0, 2);
  auto U = random_solution(p, part, mesh, rng);
  std::shared_ptr<const SpatialMesh> fine = refine_uniform(*mesh);
  auto z = random_solution(p, part.halved(), fine, rng);
  ThetaEstimator est(U, p, z);
  for (auto r : {Representation::One, Representation::Two, Representation::Three}) {
    auto br = est.representation(r);
    REQUIRE(br.term_totals()[5] == 0.0);
  }
}

TEST_CASE("constant dual weight annihilates every theta") {
  // if z_ref is constant in space and time, z_hk reproduces it and w == 0
  std::mt19937 rng(109);
  KernelSpec k = KernelSpec::prony({{0.4, 1.0}});
  validate_kernel(k, 100.0);
  ProblemSpec p = random_data_problem(1, k, rng);
  p.side_tags = {BTag::Neumann, BTag::Neumann, BTag::None, BTag::None};
  auto mesh = SpatialMesh::root_mesh(p.make_forest(5));
  TimePartition part = TimePartition::uniform(1.0, 2);
  auto U = random_solution(p, part, mesh, rng);
  auto z = random_solution(p, part.halved(), mesh, rng);
  for (auto& v : z.u1) v.setConstant(0.7);
  for (auto& v : z.u2) v.setConstant(-0.3);
  for (auto& v : z.u1a) v.setConstant(0.7);
  for (auto& v : z.u1b) v.setConstant(0.7);
  for (auto& v : z.u2a) v.setConstant(-0.3);
  for (auto& v : z.u2b) v.setConstant(-0.3);
  ThetaEstimator est(U, p, z);
  auto br = est.representation(Representation::Two);
  REQUIRE(std::abs(br.total()) < 1e-11 * std::max(1.0, br.abs_scale));
}

TEST_CASE("identity chain: theta total equals the residual functional") {
  // B(U, w) - L(w) with w = z_ref - z_hk, evaluated by the forms machinery,
  // must match the rep-2 theta total
  std::mt19937 rng(113);
  KernelSpec k = KernelSpec::prony({{0.4, 1.0}});
  validate_kernel(k, 100.0);
  for (int dim : {1, 2}) {
    ProblemSpec p = mms_smooth(dim, k);
    auto mesh = SpatialMesh::root_mesh(p.make_forest(dim == 1 ? 6 : 2));
    TimePartition part = TimePartition::uniform(1.0, 3);
    auto U = solve_primal(p, part, {std::shared_ptr<const SpatialMesh>(mesh)});
    DualData d;
    d.z1T = [](const Vec& x) {
      return Eigen::Vector2d(std::sin(M_PI * x.x()), 0.0);
    };
    auto z = solve_dual(p, part, {std::shared_ptr<const SpatialMesh>(mesh)}, d,
                        {1, 1});
    ThetaEstimator est(U, p, z);
    auto br = est.representation(Representation::Two);

    // assemble w = z_ref - z_hk as a pair field on the refined partition
    PairField w;
    w.c1.part = w.c2.part = z.part;
    for (int m = 1; m <= z.N(); ++m) {
      const int n = U.part.slab_of(0.5 * (z.part.nodes[m - 1] + z.part.nodes[m]));
      auto um = union_mesh(z.slab_space[m - 1]->mesh_ptr(),
                           U.level_space[n]->mesh_ptr());
      std::shared_ptr<const FeSpace> wsp;
      if (um->id() == z.slab_space[m - 1]->mesh().id())
        wsp = z.slab_space[m - 1];
      else
        wsp = std::make_shared<FeSpace>(um);
      const FeSpace& zsp = *z.slab_space[m - 1];
      const FeSpace& tsp = *U.level_space[n];
      w.c1.space.push_back(wsp);
      w.c2.space.push_back(wsp);
      w.c1.val_a.push_back(prolong_full(zsp, z.u1a[m - 1], *wsp) -
                           prolong_full(tsp, est.zhk1()[n - 1], *wsp));
      w.c1.val_b.push_back(prolong_full(zsp, z.u1b[m - 1], *wsp) -
                           prolong_full(tsp, est.zhk1()[n - 1], *wsp));
      w.c2.val_a.push_back(prolong_full(zsp, z.u2a[m - 1], *wsp) -
                           prolong_full(tsp, est.zhk2()[n - 1], *wsp));
      w.c2.val_b.push_back(prolong_full(zsp, z.u2b[m - 1], *wsp) -
                           prolong_full(tsp, est.zhk2()[n - 1], *wsp));
    }
    PairField Upair = U.trial_pair();
    PairField Uref = refine_in_time(Upair, z.part);
    double scaleB = 0.0;
    const double B = eval_B(Uref, w, p.kernel, p.elast, false, &scaleB);
    const double L = eval_L(w, p);
    const double residual = B - L;
    const double theta = br.total();
    CAPTURE(dim, residual, theta);
    REQUIRE(std::abs(residual - theta) <=
            1e-8 * std::max({1.0, std::abs(theta), scaleB}));
  }
}

TEST_CASE("exact-reproduction probe: thetas vanish") {
  for (bool prony : {false, true}) {
    KernelSpec k = prony ? KernelSpec::prony({{0.4, 1.0}}) : KernelSpec::zero();
    if (prony) validate_kernel(k, 100.0);
    ProblemSpec p = mms_linear(k);
    auto mesh = SpatialMesh::root_mesh(p.make_forest(5));
    TimePartition part = TimePartition::uniform(1.0, 4);
    auto U = solve_primal(p, part, {std::shared_ptr<const SpatialMesh>(mesh)});
    DualData d;
    d.z1T = [](const Vec& x) { return Eigen::Vector2d(x.x(), 0.0); };
    auto z = solve_dual(p, part, {std::shared_ptr<const SpatialMesh>(mesh)}, d,
                        {1, 1});
    ThetaEstimator est(U, p, z);
    for (auto r : {Representation::One, Representation::Two, Representation::Three}) {
      auto br = est.representation(r);
      CAPTURE(prony, static_cast<int>(r), br.total(), br.abs_scale);
      REQUIRE(std::abs(br.total()) <= 1e-8 * std::max(1.0, br.abs_scale));
    }
  }
}

TEST_CASE("representation exactness against the analytic goal error") {
  KernelSpec k = KernelSpec::prony({{0.4, 1.0}});
  validate_kernel(k, 100.0);
  ProblemSpec p = mms_smooth(1, k);
  const int n = 16;
  auto mesh = SpatialMesh::root_mesh(p.make_forest(n));
  TimePartition part = TimePartition::uniform(1.0, n);
  auto U = solve_primal(p, part, {std::shared_ptr<const SpatialMesh>(mesh)});
  SpatialFn direction = [](const Vec& x) {
    return Eigen::Vector2d(std::sin(M_PI * x.x()), 0.0);
  };
  DualData d;
  d.z1T = direction;
  auto z = solve_dual(p, part, {std::shared_ptr<const SpatialMesh>(mesh)}, d,
                      {2, 2});
  ThetaEstimator est(U, p, z);
  const double theta = est.representation(Representation::Two).total();
  // L*(e) = (e1(T), psi) from the analytic solution
  const FeSpace& spN = *U.level_space[U.N()];
  Eigen::VectorXd u1T = spN.expand(U.u1[U.N()]);
  auto goal = [&](const Vec& x) {
    return (spN.eval_full(u1T, x) - p.exact->u1(x, 1.0))
        .dot(direction(x));
  };
  const double exact =
      integrate_adaptive([&](double x) { return goal(Vec(x, 0.0)); }, 0.0, 1.0,
                         1e-12);
  CAPTURE(theta, exact);
  REQUIRE(std::abs(theta - exact) <= 0.05 * std::abs(exact));
}

TEST_CASE("global estimate structure") {
  KernelSpec k = KernelSpec::prony({{0.4, 1.0}});
  validate_kernel(k, 100.0);
  ProblemSpec p = mms_smooth(1, k);
  auto mesh = SpatialMesh::root_mesh(p.make_forest(8));
  TimePartition part = TimePartition::uniform(1.0, 8);
  auto U = solve_primal(p, part, {std::shared_ptr<const SpatialMesh>(mesh)});
  ResidualData R(U, p);

  SECTION("beta = 2 gives zeta_n = 1 exactly on every slab") {
    GlobalOptions opt;
    opt.beta = 2;
    auto rep = global_estimate(R, nullptr, opt);
    for (auto& row : rep.slabs) REQUIRE(row.zeta_n == 1.0);
    REQUIRE(rep.bound >= 0.0);
  }
  SECTION("zero kernel kills the kernel weight and the history term") {
    ProblemSpec p0 = mms_smooth(1, KernelSpec::zero());
    auto U0 = solve_primal(p0, part, {std::shared_ptr<const SpatialMesh>(mesh)});
    ResidualData R0(U0, p0);
    auto rep = global_estimate(R0, nullptr, GlobalOptions{});
    for (auto& row : rep.slabs) REQUIRE(row.zeta_nN_mean == 0.0);
  }
  SECTION("all three modes produce finite nonnegative bounds") {
    for (auto mode : {GlobalOptions::Mode::L1Kernel, GlobalOptions::Mode::L2Kernel,
                      GlobalOptions::Mode::ConvolvedResidual}) {
      GlobalOptions opt;
      opt.mode = mode;
      auto rep = global_estimate(R, nullptr, opt);
      REQUIRE(std::isfinite(rep.bound));
      REQUIRE(rep.bound >= 0.0);
      REQUIRE(rep.ups0 >= 0.0);
    }
  }
  SECTION("L2 mode rejects non-square-integrable kernels") {
    KernelSpec pl = KernelSpec::power_law(0.2, 0.4, 1.0);
    validate_kernel(pl, 100.0);
    ProblemSpec pp = mms_smooth(1, pl);
    auto Up = solve_primal(pp, TimePartition::uniform(1.0, 2),
                           {std::shared_ptr<const SpatialMesh>(mesh)});
    ResidualData Rp(Up, pp);
    GlobalOptions opt;
    opt.mode = GlobalOptions::Mode::L2Kernel;
    REQUIRE_THROWS_AS(global_estimate(Rp, nullptr, opt),
                      KernelNotSquareIntegrable);
    LocalOptions lo;
    lo.mode = LocalOptions::Mode::L2Kernel;
    REQUIRE_THROWS_AS(local_estimate(Rp, nullptr, lo),
                      KernelNotSquareIntegrable);
    lo.mode = LocalOptions::Mode::L1Kernel;
    REQUIRE_NOTHROW(local_estimate(Rp, nullptr, lo));
  }
}

TEST_CASE("local estimate structure") {
  KernelSpec k = KernelSpec::prony({{0.4, 1.0}});
  validate_kernel(k, 100.0);
  ProblemSpec p = mms_smooth(1, k);
  auto mesh = SpatialMesh::root_mesh(p.make_forest(8));
  TimePartition part = TimePartition::uniform(1.0, 8);
  auto U = solve_primal(p, part, {std::shared_ptr<const SpatialMesh>(mesh)});
  ResidualData R(U, p);
  SECTION("zero kernel gives ups_2 = 0 in both modes") {
    ProblemSpec p0 = mms_smooth(1, KernelSpec::zero());
    auto U0 = solve_primal(p0, part, {std::shared_ptr<const SpatialMesh>(mesh)});
    ResidualData R0(U0, p0);
    for (auto mode : {LocalOptions::Mode::L2Kernel, LocalOptions::Mode::L1Kernel}) {
      LocalOptions opt;
      opt.mode = mode;
      auto rep = local_estimate(R0, nullptr, opt);
      for (auto& row : rep.slabs) REQUIRE(row.ups_2 == 0.0);
    }
  }
  SECTION("bounds are finite and nonnegative for both modes") {
    for (auto mode : {LocalOptions::Mode::L2Kernel, LocalOptions::Mode::L1Kernel}) {
      LocalOptions opt;
      opt.mode = mode;
      auto rep = local_estimate(R, nullptr, opt);
      REQUIRE(std::isfinite(rep.bound));
      REQUIRE(rep.bound > 0.0);
    }
  }
}

TEST_CASE("example1 bound") {
  SECTION("exact-reproduction problem gives a bound at quadrature level") {
    KernelSpec k = KernelSpec::prony({{0.4, 1.0}});
    validate_kernel(k, 100.0);
    ProblemSpec p = mms_linear(k);
    auto mesh = SpatialMesh::root_mesh(p.make_forest(5));
    auto U = solve_primal(p, TimePartition::uniform(1.0, 4),
                          {std::shared_ptr<const SpatialMesh>(mesh)});
    auto rep = example1_bound(U, p);
    REQUIRE(rep.bound <= 1e-8);
  }
  SECTION("smooth MMS: bound within a fixed band of the true error") {
    KernelSpec k = KernelSpec::prony({{0.4, 1.0}});
    validate_kernel(k, 100.0);
    ProblemSpec p = mms_smooth(1, k);
    std::vector<double> effectivity;
    for (int lev = 0; lev < 3; ++lev) {
      const int n = 8 << lev;
      auto mesh = SpatialMesh::root_mesh(p.make_forest(n));
      auto U = solve_primal(p, TimePartition::uniform(1.0, n),
                            {std::shared_ptr<const SpatialMesh>(mesh)});
      auto rep = example1_bound(U, p);
      const FeSpace& spN = *U.level_space[U.N()];
      const double e1T =
          l2_error_vs(spN, spN.expand(U.u1[U.N()]),
                      [&](const Vec& x) { return p.exact->u1(x, 1.0); });
      effectivity.push_back(rep.bound / e1T);
    }
    CAPTURE(effectivity);
    const double lo = *std::min_element(effectivity.begin(), effectivity.end());
    const double hi = *std::max_element(effectivity.begin(), effectivity.end());
    REQUIRE(hi / lo <= 100.0);  // order match: fixed two-decade band
  }
}
