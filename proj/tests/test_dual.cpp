// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "viscofem/dual_solver.hpp"
#include "viscofem/forms.hpp"

using namespace viscofem;
using Catch::Approx;

namespace {
ProblemSpec wave_problem(KernelSpec ker, double T) {
  ProblemSpec p;
  p.dim = 1;
  p.T = T;
  p.elast = {0.5, 0.5};
  p.kernel = std::move(ker);
  if (!p.kernel.validated() && !p.kernel.is_zero())
    validate_kernel(p.kernel, 100.0);
  p.side_tags = {BTag::Dirichlet, BTag::Neumann, BTag::None, BTag::None};
  p.f = pdetail::zero_fn;
  p.g = pdetail::zero_fn;
  p.u0 = [](const Vec&) { return Eigen::Vector2d(0, 0); };
  p.v0 = [](const Vec&) { return Eigen::Vector2d(0, 0); };
  return p;
}

DualData smooth_terminal_data() {
  DualData d;
  d.z1T = [](const Vec& x) {
    return Eigen::Vector2d(std::sin(M_PI * x.x() / 2.0), 0.0);
  };
  d.z2T = [](const Vec& x) {
    return Eigen::Vector2d(std::sin(M_PI * x.x()) +
                               0.3 * std::sin(2.0 * M_PI * x.x()),
                           0.0);
  };
  return d;
}
}  // namespace

TEST_CASE("zero dual data gives the zero dual solution") {
  ProblemSpec p = wave_problem(KernelSpec::prony({{0.4, 1.0}}), 1.0);
  auto mesh = SpatialMesh::root_mesh(p.make_forest(8));
  auto z = solve_dual(p, TimePartition::uniform(1.0, 4), {mesh}, DualData{},
                      {0, 0});
  for (int m = 0; m <= z.N(); ++m) {
    REQUIRE(z.u1[m].norm() == 0.0);
    REQUIRE(z.u2[m].norm() == 0.0);
  }
}

TEST_CASE("zero-kernel dual conserves energy backward in time") {
  ProblemSpec p = wave_problem(KernelSpec::zero(), 1.0);
  auto mesh = SpatialMesh::root_mesh(p.make_forest(16));
  auto z = solve_dual(p, TimePartition::uniform(1.0, 10), {mesh},
                      smooth_terminal_data(), {0, 0});
  auto rep = stability_report(z, p.elast);
  REQUIRE(rep.max_ratio == Approx(1.0).epsilon(1e-6));
  // every level carries exactly the terminal energy
  for (int m = 0; m <= z.N(); ++m) {
    const double e = std::sqrt(sqr(rep.z1_l2[m]) + sqr(rep.z2_V[m]));
    REQUIRE(e == Approx(rep.terminal).epsilon(1e-9));
  }
}

TEST_CASE("dual stability ratio does not grow with the horizon") {
  std::vector<double> ratios;
  for (double T : {1.0, 2.0, 4.0}) {
    ProblemSpec p = wave_problem(KernelSpec::prony({{0.4, 1.0}}), T);
    auto mesh = SpatialMesh::root_mesh(p.make_forest(16));
    const int N = static_cast<int>(10 * T);
    auto z = solve_dual(p, TimePartition::uniform(T, N), {mesh},
                        smooth_terminal_data(), {0, 0});
    ratios.push_back(stability_report(z, p.elast).max_ratio);
  }
  const double lo = *std::min_element(ratios.begin(), ratios.end());
  const double hi = *std::max_element(ratios.begin(), ratios.end());
  CAPTURE(ratios);
  REQUIRE(hi / lo <= 1.2);
}

TEST_CASE("discrete dual satisfies z1 = -dz2/dt slabwise (j2 = 0)") {
  ProblemSpec p = wave_problem(KernelSpec::prony({{0.3, 1.5}}), 1.0);
  auto mesh = SpatialMesh::root_mesh(p.make_forest(12));
  auto z = solve_dual(p, TimePartition::uniform(1.0, 6), {mesh},
                      smooth_terminal_data(), {0, 0});
  for (int n = 1; n <= z.N(); ++n) {
    const double k = z.part.k(n);
    // slab-average identity of the reversed velocity equation
    Eigen::VectorXd lhs = (z.u2b[n - 1] - z.u2a[n - 1]) / k;
    Eigen::VectorXd rhs = -0.5 * (z.u1a[n - 1] + z.u1b[n - 1]);
    REQUIRE((lhs - rhs).lpNorm<Eigen::Infinity>() <
            1e-10 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("adjoint consistency of the enriched dual") {
  // L*(v) == B*(v, z) up to the enriched discretization error, which must
  // decrease with enrichment
  ProblemSpec p = wave_problem(KernelSpec::prony({{0.4, 1.0}}), 1.0);
  auto mesh = SpatialMesh::root_mesh(p.make_forest(16));
  TimePartition part = TimePartition::uniform(1.0, 8);
  DualData data = smooth_terminal_data();
  auto vsp = std::make_shared<FeSpace>(mesh);

  std::vector<double> worst_by_enrich;
  for (int e : {1, 2, 3}) {
    auto z = solve_dual(p, part, {mesh}, data, {e, e});
    PairField zpair = z.trial_pair();
    std::mt19937 rng(47);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    double worst = 0.0;
    const int reps = e == 3 ? 8 : 12;
    for (int rep = 0; rep < reps; ++rep) {
      PairField v;
      v.c1.part = v.c2.part = part;
      std::vector<Eigen::VectorXd> l1, l2;
      for (int n = 0; n <= part.N(); ++n) {
        Eigen::VectorXd a(vsp->n_dofs()), b(vsp->n_dofs());
        for (int i = 0; i < a.size(); ++i) {
          a[i] = U(rng);
          b[i] = U(rng);
        }
        l1.push_back(vsp->expand(a));
        l2.push_back(vsp->expand(b));
      }
      for (int n = 1; n <= part.N(); ++n) {
        v.c1.space.push_back(vsp);
        v.c2.space.push_back(vsp);
        v.c1.val_a.push_back(l1[n - 1]);
        v.c1.val_b.push_back(l1[n]);
        v.c2.val_a.push_back(l2[n - 1]);
        v.c2.val_b.push_back(l2[n]);
      }
      PairField v_ref = refine_in_time(v, z.part);
      const double Bs = eval_Bstar(v_ref, zpair, p.kernel, p.elast);
      const double Ls = eval_Lstar(v_ref, data.j1, data.j2, data.z1T, data.z2T);
      worst = std::max(worst, std::abs(Bs - Ls) / std::max(1.0, std::abs(Ls)));
    }
    worst_by_enrich.push_back(worst);
  }
  CAPTURE(worst_by_enrich);
  REQUIRE(worst_by_enrich[1] < worst_by_enrich[0]);
  REQUIRE(worst_by_enrich[2] < worst_by_enrich[1]);
  REQUIRE(worst_by_enrich[2] <= 1e-2);
}

TEST_CASE("time reversal round trip") {
  TimePartition part;
  part.nodes = {0.0, 0.25, 0.375, 1.0};  // dyadic: reversal is exact
  const double T = part.T();
  TimePartition rev;
  rev.nodes = {T - part.nodes[3], T - part.nodes[2], T - part.nodes[1],
               T - part.nodes[0]};
  TimePartition back;
  back.nodes = {T - rev.nodes[3], T - rev.nodes[2], T - rev.nodes[1],
                T - rev.nodes[0]};
  REQUIRE(back.nodes == part.nodes);
  // slab weights computed on the doubly reversed partition are identical
  KernelSpec k = KernelSpec::prony({{0.4, 1.0}});
  validate_kernel(k, 10.0);
  for (int n = 1; n <= 3; ++n)
    for (int j = 1; j <= n; ++j) {
      auto w1 = slab_weights(k, part.nodes[n - 1], part.nodes[n],
                             part.nodes[j - 1], part.nodes[j]);
      auto w2 = slab_weights(k, back.nodes[n - 1], back.nodes[n],
                             back.nodes[j - 1], back.nodes[j]);
      REQUIRE(w1.left == w2.left);
      REQUIRE(w1.right == w2.right);
    }
}

TEST_CASE("general dual data with loads runs and matches the strong relation") {
  // j2 nonzero: z1 = -dz2/dt - j2
  ProblemSpec p = wave_problem(KernelSpec::zero(), 1.0);
  auto mesh = SpatialMesh::root_mesh(p.make_forest(10));
  DualData d;
  d.j1 = [](const Vec& x, double t) {
    return Eigen::Vector2d(std::sin(M_PI * x.x()) * t, 0.0);
  };
  d.j2 = [](const Vec& x, double t) {
    return Eigen::Vector2d(0.2 * x.x() * (1.0 - t), 0.0);
  };
  d.j2_dt = [](const Vec& x, double) {
    return Eigen::Vector2d(-0.2 * x.x(), 0.0);
  };
  d.z1T = [](const Vec& x) { return Eigen::Vector2d(0.1 * x.x(), 0.0); };
  auto z = solve_dual(p, TimePartition::uniform(1.0, 5), {mesh}, d, {0, 1});
  // slabwise: -dz2/dt = avg(z1 + j2)
  for (int n = 1; n <= z.N(); ++n) {
    const double k = z.part.k(n);
    const FeSpace& sp = *z.slab_space[n - 1];
    auto jinterp = [&](double t) {
      Eigen::VectorXd full(sp.n_nodes() * sp.vdim());
      const auto& verts = sp.mesh().active_vertices();
      for (std::size_t i = 0; i < verts.size(); ++i) {
        auto val = d.j2(sp.mesh().forest().xy[verts[i]], t);
        for (int c = 0; c < sp.vdim(); ++c) full[i * sp.vdim() + c] = val[c];
      }
      sp.constrain_full(full);
      return full;
    };
    Eigen::VectorXd lhs = -(z.u2b[n - 1] - z.u2a[n - 1]) / k;
    Eigen::VectorXd rhs =
        0.5 * (z.u1a[n - 1] + z.u1b[n - 1] +
               jinterp(z.part.nodes[n - 1]) + jinterp(z.part.nodes[n]));
    REQUIRE((lhs - rhs).lpNorm<Eigen::Infinity>() <
            1e-9 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>()));
  }
}
