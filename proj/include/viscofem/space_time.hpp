// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "viscofem/assembly.hpp"

namespace viscofem {

using SpaceTimeFn = std::function<Eigen::Vector2d(const Vec&, double)>;

struct TimePartition {
  std::vector<double> nodes;  // 0 = t_0 < t_1 < ... < t_N

  static TimePartition uniform(double T, int N) {
    TimePartition p;
    p.nodes.resize(N + 1);
    for (int i = 0; i <= N; ++i) p.nodes[i] = T * i / N;
    return p;
  }

  int N() const { return static_cast<int>(nodes.size()) - 1; }
  double T() const { return nodes.back(); }
  double k(int n) const { return nodes[n] - nodes[n - 1]; }  // slab n in 1..N
  double t(int n) const { return nodes[n]; }

  void check() const {
    if (nodes.empty() || nodes.front() != 0.0)
      throw IncompatibleSlabbing("partition must start at 0");
    for (int n = 1; n <= N(); ++n)
      if (k(n) <= 0.0) throw IncompatibleSlabbing("nonincreasing time nodes");
  }

  // slab containing t (1-based); boundaries resolve to the later slab
  int slab_of(double t_) const {
    int n = int(std::upper_bound(nodes.begin(), nodes.end(), t_) - nodes.begin());
    return std::clamp(n, 1, N());
  }

  TimePartition halved_marked(const std::vector<int>& slabs) const {
    std::vector<bool> mark(N() + 1, false);
    for (int s : slabs) mark[s] = true;
    TimePartition out;
    out.nodes.push_back(0.0);
    for (int n = 1; n <= N(); ++n) {
      if (mark[n]) out.nodes.push_back(0.5 * (nodes[n - 1] + nodes[n]));
      out.nodes.push_back(nodes[n]);
    }
    return out;
  }
  TimePartition halved() const {
    std::vector<int> all(N());
    for (int n = 1; n <= N(); ++n) all[n - 1] = n;
    return halved_marked(all);
  }
};

// ---------------------------------------------------------------------------
// A space-time function given per slab by a FE space and full nodal vectors at
// the slab ends (linear in t inside the slab; jumps allowed at the nodes).
// Piecewise-constant-in-time functions have equal endpoint vectors.
// ---------------------------------------------------------------------------
struct SpaceTimeField {
  TimePartition part;
  std::vector<std::shared_ptr<const FeSpace>> space;  // per slab, size N
  std::vector<Eigen::VectorXd> val_a, val_b;          // FULL vectors per slab

  int N() const { return part.N(); }
  const FeSpace& slab_space(int n) const { return *space[n - 1]; }

  Eigen::VectorXd at(int n, double t) const {  // value inside slab n
    const double xi = (t - part.nodes[n - 1]) / part.k(n);
    return (1.0 - xi) * val_a[n - 1] + xi * val_b[n - 1];
  }
  Eigen::VectorXd derivative(int n) const {
    return (val_b[n - 1] - val_a[n - 1]) / part.k(n);
  }
  // value at t = 0+ / t = T-
  const Eigen::VectorXd& initial() const { return val_a.front(); }
  const Eigen::VectorXd& terminal() const { return val_b.back(); }
};

struct PairField {
  SpaceTimeField c1, c2;  // (displacement-like, velocity-like) components
};

// Re-expresses a field on a finer partition whose nodes contain the original
// ones (values at inserted nodes by linear interpolation; exact).
inline SpaceTimeField refine_in_time(const SpaceTimeField& f,
                                     const TimePartition& fine) {
  SpaceTimeField out;
  out.part = fine;
  for (int m = 1; m <= fine.N(); ++m) {
    const double a = fine.nodes[m - 1], b = fine.nodes[m];
    const double mid = 0.5 * (a + b);
    const int n = f.part.slab_of(mid);
    out.space.push_back(f.space[n - 1]);
    out.val_a.push_back(f.at(n, a));
    out.val_b.push_back(f.at(n, b));
  }
  return out;
}

inline PairField refine_in_time(const PairField& f, const TimePartition& fine) {
  return {refine_in_time(f.c1, fine), refine_in_time(f.c2, fine)};
}

// ---------------------------------------------------------------------------
// The discrete space-time solution: nodal coefficient pairs per level plus the
// per-slab union spaces hosting the trial functions, with prolonged endpoint
// values (exact by construction: the slab space refines both level meshes).
// ---------------------------------------------------------------------------
struct SpaceTimeSolution {
  TimePartition part;
  std::vector<std::shared_ptr<const FeSpace>> level_space;  // size N+1
  std::vector<Eigen::VectorXd> u1, u2;                      // free dofs per level
  std::vector<std::shared_ptr<const FeSpace>> slab_space;   // size N
  // prolonged FULL endpoint vectors in the slab space
  std::vector<Eigen::VectorXd> u1a, u1b, u2a, u2b;

  int N() const { return part.N(); }

  PairField trial_pair() const {
    PairField pf;
    pf.c1.part = pf.c2.part = part;
    pf.c1.space = pf.c2.space = slab_space;
    pf.c1.val_a = u1a;
    pf.c1.val_b = u1b;
    pf.c2.val_a = u2a;
    pf.c2.val_b = u2b;
    return pf;
  }

  // pointwise space-time evaluation (component pair at (x, t))
  std::pair<Eigen::Vector2d, Eigen::Vector2d> eval(const Vec& x, double t) const {
    const int n = part.slab_of(t);
    const double xi = (t - part.nodes[n - 1]) / part.k(n);
    const FeSpace& sp = *slab_space[n - 1];
    const Eigen::Vector2d v1 = sp.eval_full(u1a[n - 1] * (1 - xi) + u1b[n - 1] * xi, x);
    const Eigen::Vector2d v2 = sp.eval_full(u2a[n - 1] * (1 - xi) + u2b[n - 1] * xi, x);
    return {v1, v2};
  }
};

// Builds the per-slab union space list for a sequence of per-level meshes.
inline std::vector<std::shared_ptr<const FeSpace>> build_level_spaces(
    const std::vector<std::shared_ptr<const SpatialMesh>>& meshes) {
  std::vector<std::shared_ptr<const FeSpace>> out;
  out.reserve(meshes.size());
  std::map<int, std::shared_ptr<const FeSpace>> seen;
  for (const auto& m : meshes) {
    auto it = seen.find(m->id());
    if (it == seen.end())
      it = seen.emplace(m->id(), std::make_shared<FeSpace>(m)).first;
    out.push_back(it->second);
  }
  return out;
}

inline std::vector<std::shared_ptr<const FeSpace>> build_slab_spaces(
    const std::vector<std::shared_ptr<const SpatialMesh>>& meshes,
    std::vector<std::shared_ptr<const FeSpace>>& level_spaces) {
  std::vector<std::shared_ptr<const FeSpace>> out;
  for (std::size_t n = 1; n < meshes.size(); ++n) {
    auto u = union_mesh(std::shared_ptr<const SpatialMesh>(meshes[n - 1]),
                        std::shared_ptr<const SpatialMesh>(meshes[n]));
    if (u->id() == meshes[n]->id())
      out.push_back(level_spaces[n]);
    else if (u->id() == meshes[n - 1]->id())
      out.push_back(level_spaces[n - 1]);
    else
      out.push_back(std::make_shared<FeSpace>(u));
  }
  return out;
}

}  // namespace viscofem
