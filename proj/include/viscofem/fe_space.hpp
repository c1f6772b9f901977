// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <unordered_map>
#include <vector>

#include "viscofem/mesh.hpp"

namespace viscofem {

// ---------------------------------------------------------------------------
// Continuous P1 space on a SpatialMesh. Vector-valued with vdim = dim
// (scalar displacement in 1D). Nodes are the active forest vertices; Dirichlet
// nodes are fixed to zero and hanging nodes are interpolated from their edge
// endpoints, resolved transitively to free nodes.
// ---------------------------------------------------------------------------
class FeSpace {
 public:
  enum class NodeKind : std::uint8_t { Free, Dirichlet, Hanging };

  explicit FeSpace(std::shared_ptr<const SpatialMesh> mesh)
      : mesh_(std::move(mesh)), vdim_(mesh_->dim()) {
    const auto& verts = mesh_->active_vertices();
    n_nodes_ = static_cast<int>(verts.size());
    node_of_vertex_.reserve(n_nodes_);
    for (int i = 0; i < n_nodes_; ++i) node_of_vertex_[verts[i]] = i;

    kind_.assign(n_nodes_, NodeKind::Free);
    for (const auto& [hv, masters] : mesh_->hanging()) {
      (void)masters;
      kind_[node_of_vertex_.at(hv)] = NodeKind::Hanging;
    }
    for (int dv : mesh_->dirichlet_vertices()) {
      auto it = node_of_vertex_.find(dv);
      if (it != node_of_vertex_.end()) kind_[it->second] = NodeKind::Dirichlet;
    }

    free_index_.assign(n_nodes_, -1);
    for (int i = 0; i < n_nodes_; ++i)
      if (kind_[i] == NodeKind::Free) {
        free_index_[i] = static_cast<int>(free_nodes_.size());
        free_nodes_.push_back(i);
      }

    resolve_constraints();
    build_expansion();
  }

  const SpatialMesh& mesh() const { return *mesh_; }
  std::shared_ptr<const SpatialMesh> mesh_ptr() const { return mesh_; }
  int vdim() const { return vdim_; }
  int n_nodes() const { return n_nodes_; }
  int n_dofs() const { return static_cast<int>(free_nodes_.size()) * vdim_; }
  int node_of_vertex(int v) const { return node_of_vertex_.at(v); }
  int vertex_of_node(int n) const { return mesh_->active_vertices()[n]; }
  NodeKind kind(int node) const { return kind_[node]; }
  int free_slot(int node) const { return free_index_[node]; }

  // expansion matrix: full nodal dofs = C * free dofs
  const Eigen::SparseMatrix<double>& expansion() const { return C_; }

  Eigen::VectorXd expand(const Eigen::VectorXd& free) const {
    return C_ * free;
  }
  Eigen::VectorXd restrict_dual(const Eigen::VectorXd& full_dual) const {
    return C_.transpose() * full_dual;
  }
  // extract free part from a full vector satisfying the constraints
  Eigen::VectorXd collapse(const Eigen::VectorXd& full) const {
    Eigen::VectorXd out(n_dofs());
    for (std::size_t s = 0; s < free_nodes_.size(); ++s)
      for (int c = 0; c < vdim_; ++c)
        out[s * vdim_ + c] = full[free_nodes_[s] * vdim_ + c];
    return out;
  }
  // projects arbitrary full nodal values onto the constrained subspace
  void constrain_full(Eigen::VectorXd& full) const {
    for (int i = 0; i < n_nodes_; ++i) {
      if (kind_[i] == NodeKind::Dirichlet)
        for (int c = 0; c < vdim_; ++c) full[i * vdim_ + c] = 0.0;
    }
    for (const auto& [node, row] : constraint_rows_) {
      for (int c = 0; c < vdim_; ++c) {
        double v = 0.0;
        for (const auto& [m, w] : row) v += w * full[m * vdim_ + c];
        full[node * vdim_ + c] = v;
      }
    }
  }

  // pointwise evaluation of the FE function given FULL nodal values
  Eigen::Vector2d eval_full(const Eigen::VectorXd& full, const Vec& x) const {
    std::array<double, 3> bary;
    const int c = mesh_->locate(x, bary);
    if (c < 0) throw Error("point outside mesh");
    return eval_on_cell(full, c, bary);
  }
  Eigen::Vector2d eval_on_cell(const Eigen::VectorXd& full, int cell,
                               const std::array<double, 3>& bary) const {
    const auto& cv = mesh_->forest().cells[cell].v;
    Eigen::Vector2d out = Eigen::Vector2d::Zero();
    const int nv = vdim_ == 1 ? 2 : 3;
    for (int i = 0; i < nv; ++i) {
      const int node = node_of_vertex_.at(cv[i]);
      for (int c = 0; c < vdim_; ++c)
        out[c] += bary[i] * full[node * vdim_ + c];
    }
    return out;
  }

  // P1 gradient on a cell from FULL nodal values: out(c, d) = d u_c / d x_d
  Eigen::Matrix2d grad_on_cell(const Eigen::VectorXd& full, int cell) const {
    const Forest& f = mesh_->forest();
    const auto& cv = f.cells[cell].v;
    Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
    if (vdim_ == 1) {
      const double x0 = f.xy[cv[0]].x(), x1 = f.xy[cv[1]].x();
      const int n0 = node_of_vertex_.at(cv[0]), n1 = node_of_vertex_.at(cv[1]);
      g(0, 0) = (full[n1] - full[n0]) / (x1 - x0);
      return g;
    }
    std::array<Vec, 3> gb = basis_gradients(cell);
    for (int i = 0; i < 3; ++i) {
      const int node = node_of_vertex_.at(cv[i]);
      for (int c = 0; c < 2; ++c) {
        g(c, 0) += full[node * 2 + c] * gb[i].x();
        g(c, 1) += full[node * 2 + c] * gb[i].y();
      }
    }
    return g;
  }

  // gradients of the three barycentric basis functions on a triangle
  std::array<Vec, 3> basis_gradients(int cell) const {
    const Forest& f = mesh_->forest();
    const auto& cv = f.cells[cell].v;
    const Vec p0 = f.xy[cv[0]], p1 = f.xy[cv[1]], p2 = f.xy[cv[2]];
    const double det = (p1.x() - p0.x()) * (p2.y() - p0.y()) -
                       (p2.x() - p0.x()) * (p1.y() - p0.y());
    return {Vec(p1.y() - p2.y(), p2.x() - p1.x()) / det,
            Vec(p2.y() - p0.y(), p0.x() - p2.x()) / det,
            Vec(p0.y() - p1.y(), p1.x() - p0.x()) / det};
  }

 private:
  void resolve_constraints() {
    // hanging value = average of edge endpoints, resolved to free nodes
    for (const auto& [hv, masters] : mesh_->hanging()) {
      const int node = node_of_vertex_.at(hv);
      if (kind_[node] == NodeKind::Dirichlet) continue;
      std::vector<std::pair<int, double>> row = {
          {node_of_vertex_.at(masters[0]), 0.5},
          {node_of_vertex_.at(masters[1]), 0.5}};
      // expand chained constraints (a master may itself be hanging)
      for (int guard = 0; guard < 32; ++guard) {
        bool again = false;
        std::vector<std::pair<int, double>> next;
        for (auto& [m, w] : row) {
          if (kind_[m] == NodeKind::Hanging) {
            const int mv = vertex_of_node(m);
            const auto& mm = mesh_->hanging().at(mv);
            next.push_back({node_of_vertex_.at(mm[0]), 0.5 * w});
            next.push_back({node_of_vertex_.at(mm[1]), 0.5 * w});
            again = true;
          } else {
            next.push_back({m, w});
          }
        }
        row = std::move(next);
        if (!again) break;
      }
      // drop Dirichlet masters (their value is zero), merge duplicates
      std::map<int, double> merged;
      for (auto& [m, w] : row)
        if (kind_[m] == NodeKind::Free) merged[m] += w;
      constraint_rows_[node] =
          std::vector<std::pair<int, double>>(merged.begin(), merged.end());
    }
  }

  void build_expansion() {
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < n_nodes_; ++i) {
      if (kind_[i] == NodeKind::Free) {
        for (int c = 0; c < vdim_; ++c)
          trips.emplace_back(i * vdim_ + c, free_index_[i] * vdim_ + c, 1.0);
      } else if (kind_[i] == NodeKind::Hanging) {
        for (const auto& [m, w] : constraint_rows_[i])
          for (int c = 0; c < vdim_; ++c)
            trips.emplace_back(i * vdim_ + c, free_index_[m] * vdim_ + c, w);
      }
    }
    C_.resize(n_nodes_ * vdim_, n_dofs());
    C_.setFromTriplets(trips.begin(), trips.end());
  }

  std::shared_ptr<const SpatialMesh> mesh_;
  int vdim_;
  int n_nodes_ = 0;
  std::unordered_map<int, int> node_of_vertex_;
  std::vector<NodeKind> kind_;
  std::vector<int> free_index_;
  std::vector<int> free_nodes_;
  std::map<int, std::vector<std::pair<int, double>>> constraint_rows_;
  Eigen::SparseMatrix<double> C_;
};

// Evaluate the constrained FE function of `from` at the nodes of `to`
// (exact transfer when `to` refines `from`; interpolation otherwise).
// Returns FULL nodal values on `to`, constrained.
inline Eigen::VectorXd prolong_full(const FeSpace& from,
                                    const Eigen::VectorXd& full_from,
                                    const FeSpace& to) {
  Eigen::VectorXd out(to.n_nodes() * to.vdim());
  const auto& verts = to.mesh().active_vertices();
  for (std::size_t i = 0; i < verts.size(); ++i) {
    const Vec x = to.mesh().forest().xy[verts[i]];
    const Eigen::Vector2d v = from.eval_full(full_from, x);
    for (int c = 0; c < to.vdim(); ++c) out[i * to.vdim() + c] = v[c];
  }
  to.constrain_full(out);
  return out;
}

}  // namespace viscofem
