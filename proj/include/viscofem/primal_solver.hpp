// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <map>
#include <memory>

#include "viscofem/forms.hpp"

namespace viscofem {

struct PrimalOptions {
  int load_tq = 5;              // Gauss points in time for load integration
  bool prony_recurrence = true; // exact history recurrence when available
};

// ---------------------------------------------------------------------------
// Slab-by-slab time stepping for the velocity-displacement form. On each slab
// the velocity equation eliminates U1^n, leaving one SPD system
//   [M + (k/2)(k/2 - w_rr) S] U2^n = rhs
// with w_rr the right-endpoint self-convolution weight of the slab.
// ---------------------------------------------------------------------------
class PrimalStepper {
 public:
  PrimalStepper(const ProblemSpec& prob, TimePartition part,
                std::vector<std::shared_ptr<const SpatialMesh>> meshes,
                PrimalOptions opts = {})
      : prob_(prob), opts_(opts) {
    part.check();
    if (!prob_.kernel.validated())
      validate_kernel(prob_.kernel, std::max(part.T(), 1.0));
    if (static_cast<int>(meshes.size()) == 1)
      meshes.assign(part.N() + 1, meshes[0]);
    if (static_cast<int>(meshes.size()) != part.N() + 1)
      throw MeshFamilyViolation("need one mesh per time level");
    for (auto& m : meshes)
      if (!m->has_dirichlet())
        throw MeshFamilyViolation("meas(Gamma_D) = 0");

    sol_.part = std::move(part);
    sol_.level_space = build_level_spaces(meshes);
    sol_.slab_space = build_slab_spaces(meshes, sol_.level_space);
    const int N = sol_.N();
    sol_.u1.resize(N + 1);
    sol_.u2.resize(N + 1);
    sol_.u1a.resize(N);
    sol_.u1b.resize(N);
    sol_.u2a.resize(N);
    sol_.u2b.resize(N);

    // initial data: L2 projections onto the level-0 space
    const FeSpace& s0 = *sol_.level_space[0];
    OperatorSet& ops0 = operators(0);
    sol_.u1[0] = ops0.mass_solver().solve(
        s0.restrict_dual(volume_load_dual(s0, prob_.u0)));
    sol_.u2[0] = ops0.mass_solver().solve(
        s0.restrict_dual(volume_load_dual(s0, prob_.v0)));

    use_recurrence_ = opts_.prony_recurrence && prob_.kernel.is_prony();
  }

  int current() const { return n_; }
  bool done() const { return n_ > sol_.N(); }
  const SpaceTimeSolution& solution() const { return sol_; }
  const ProblemSpec& problem() const { return prob_; }

  // Advances the solution over slab n = current().
  void step() {
    const int n = n_;
    if (n > sol_.N()) return;
    const double a = sol_.part.nodes[n - 1], b = sol_.part.nodes[n];
    const double k = b - a;
    const KernelSpec& ker = prob_.kernel;
    const FeSpace& tsp = *sol_.level_space[n];
    auto usp = sol_.slab_space[n - 1];
    OperatorSet& ops = operators(n);

    // prolong the previous level values into the slab space (exact)
    const FeSpace& psp = *sol_.level_space[n - 1];
    sol_.u1a[n - 1] = prolong_full(psp, psp.expand(sol_.u1[n - 1]), *usp);
    sol_.u2a[n - 1] = prolong_full(psp, psp.expand(sol_.u2[n - 1]), *usp);

    // velocity-equation elimination: U1^n = G + (k/2) U2^n with
    // G the L2 projection into V_h^n of U1^{n-1} + (k/2) U2^{n-1}
    Eigen::VectorXd transfer = sol_.u1a[n - 1] + 0.5 * k * sol_.u2a[n - 1];
    Eigen::VectorXd G;
    const bool nested = usp.get() == sol_.level_space[n].get();
    if (nested) {
      G = tsp.collapse(transfer);
    } else {
      G = ops.mass_solver().solve(
          tsp.restrict_dual(cross_mass_dual(*usp, transfer, tsp)));
    }

    const SegmentVals w_nn = ker.is_zero()
                                 ? SegmentVals{}
                                 : slab_weights(ker, a, b, a, b);
    const double cl = 0.5 * k - w_nn.left;
    const double cr = 0.5 * k - w_nn.right;

    Eigen::VectorXd rhs =
        tsp.restrict_dual(cross_mass_dual(*usp, sol_.u2a[n - 1], tsp));
    rhs -= cl * tsp.restrict_dual(
                    cross_stiffness_dual(*usp, sol_.u1a[n - 1], tsp, prob_.elast));
    rhs -= cr * (ops.S() * G);
    rhs += history_dual(n, tsp);
    rhs += tsp.restrict_dual(slab_load_dual_full(tsp, prob_, a, b, opts_.load_tq));

    const double c_n = 0.5 * k * cr;
    Eigen::VectorXd u2n = factorized(n, c_n, ops).solve(rhs);
    if (!u2n.allFinite()) throw LinearSolveFailure("slab " + std::to_string(n));
    sol_.u2[n] = u2n;
    sol_.u1[n] = G + 0.5 * k * u2n;

    sol_.u1b[n - 1] = prolong_full(tsp, tsp.expand(sol_.u1[n]), *usp);
    sol_.u2b[n - 1] = prolong_full(tsp, tsp.expand(sol_.u2[n]), *usp);

    advance_history(n);
    ++n_;
  }

  SpaceTimeSolution finish() {
    while (!done()) step();
    return sol_;
  }

  OperatorSet& operators(int level) {
    const int mesh_id = sol_.level_space[level]->mesh().id();
    auto it = ops_.find(mesh_id);
    if (it == ops_.end())
      it = ops_.emplace(mesh_id,
                        std::make_unique<OperatorSet>(sol_.level_space[level],
                                                      prob_.elast))
               .first;
    return *it->second;
  }

 private:
  // history contribution sum_{j<n} [w_l a(U1^{j-1}, .) + w_r a(U1^j, .)]
  Eigen::VectorXd history_dual(int n, const FeSpace& tsp) {
    const KernelSpec& ker = prob_.kernel;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(tsp.n_dofs());
    if (ker.is_zero() || n == 1) return acc;
    const double a = sol_.part.nodes[n - 1], b = sol_.part.nodes[n];
    if (use_recurrence_ && prony_state_) {
      // sum_i gamma_i em0(lambda_i, k_n) a(H_i, phi)
      auto hsp = prony_space_;
      for (std::size_t i = 0; i < ker.terms().size(); ++i) {
        const double gam = ker.terms()[i].gamma, lam = ker.terms()[i].lambda;
        const double fac = gam * kdetail::em(0, lam, b - a);
        acc += fac * tsp.restrict_dual(cross_stiffness_dual(
                         *hsp, prony_state_->H[i], tsp, prob_.elast));
      }
      return acc;
    }
    for (int j = 1; j < n; ++j) {
      const SegmentVals w =
          slab_weights(ker, a, b, sol_.part.nodes[j - 1], sol_.part.nodes[j]);
      const FeSpace& jsp = *sol_.slab_space[j - 1];
      acc += w.left * tsp.restrict_dual(
                          cross_stiffness_dual(jsp, sol_.u1a[j - 1], tsp, prob_.elast));
      acc += w.right * tsp.restrict_dual(
                           cross_stiffness_dual(jsp, sol_.u1b[j - 1], tsp, prob_.elast));
    }
    return acc;
  }

  void advance_history(int n) {
    if (!use_recurrence_) return;
    const KernelSpec& ker = prob_.kernel;
    auto usp = sol_.slab_space[n - 1];
    if (!prony_state_) {
      prony_state_ = PronyHistoryState::make(ker, usp->n_nodes() * usp->vdim(),
                                             sol_.part.nodes[n - 1]);
      prony_space_ = usp;
    } else if (prony_space_.get() != usp.get()) {
      // transfer the accumulators into the new slab space; exact only for
      // nested refinement, so fall back to the dense path otherwise
      if (!is_refinement_of(usp->mesh(), prony_space_->mesh())) {
        use_recurrence_ = false;
        prony_state_.reset();
        return;
      }
      PronyHistoryState moved = PronyHistoryState::make(
          ker, usp->n_nodes() * usp->vdim(), prony_state_->time);
      for (std::size_t i = 0; i < prony_state_->H.size(); ++i)
        moved.H[i] = prolong_full(*prony_space_, prony_state_->H[i], *usp);
      *prony_state_ = std::move(moved);
      prony_space_ = usp;
    }
    prony_state_->advance(ker, sol_.part.nodes[n - 1], sol_.part.nodes[n],
                          sol_.u1a[n - 1], sol_.u1b[n - 1]);
  }

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& factorized(
      int level, double c, OperatorSet& ops) {
    const auto key = std::make_pair(sol_.level_space[level]->mesh().id(),
                                    std::bit_cast<std::int64_t>(c));
    auto it = solvers_.find(key);
    if (it == solvers_.end()) {
      auto solver =
          std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
      Eigen::SparseMatrix<double> A = ops.M() + c * ops.S();
      solver->compute(A);
      if (solver->info() != Eigen::Success)
        throw LinearSolveFailure("factorization failed");
      it = solvers_.emplace(key, std::move(solver)).first;
    }
    return *it->second;
  }

  ProblemSpec prob_;
  PrimalOptions opts_;
  SpaceTimeSolution sol_;
  int n_ = 1;
  bool use_recurrence_ = false;
  std::optional<PronyHistoryState> prony_state_;
  std::shared_ptr<const FeSpace> prony_space_;
  std::map<int, std::unique_ptr<OperatorSet>> ops_;
  std::map<std::pair<int, std::int64_t>,
           std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>>
      solvers_;
};

inline SpaceTimeSolution solve_primal(
    const ProblemSpec& prob, const TimePartition& part,
    std::vector<std::shared_ptr<const SpatialMesh>> meshes,
    PrimalOptions opts = {}) {
  PrimalStepper stepper(prob, part, std::move(meshes), opts);
  return stepper.finish();
}

// discrete energy ||U2^n||^2 + ||U1^n||_V^2 at every time level
inline std::vector<double> energy_history(const SpaceTimeSolution& U,
                                          const ElasticParams& par) {
  std::vector<double> E;
  std::map<int, std::unique_ptr<OperatorSet>> ops;
  for (int n = 0; n <= U.N(); ++n) {
    const int id = U.level_space[n]->mesh().id();
    auto it = ops.find(id);
    if (it == ops.end())
      it = ops.emplace(id, std::make_unique<OperatorSet>(U.level_space[n], par))
               .first;
    const double m = it->second->discrete_norm(U.u2[n], 0);
    const double s = it->second->discrete_norm(U.u1[n], 1);
    E.push_back(m * m + s * s);
  }
  return E;
}

}  // namespace viscofem
