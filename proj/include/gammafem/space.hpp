#pragma once

#include <map>
#include <memory>
#include <vector>

#include "gammafem/basis.hpp"
#include "gammafem/mesh.hpp"
#include "gammafem/solvers.hpp"
#include "gammafem/sparse.hpp"

namespace gfem {

/// Scalar Lagrange finite element space with the local-to-global DoF map.
/// P1 DoFs are mesh nodes; P2 adds one DoF per edge (2D) or per cell
/// midpoint (1D). The mesh must outlive the space.
class LagrangeSpace {
 public:
  LagrangeSpace(const SimplicialMesh& mesh, Index order);

  const SimplicialMesh& mesh() const { return *mesh_; }
  Index order() const { return basis_.order(); }
  Index ndof() const { return ndof_; }
  Index local_count() const { return basis_.count(); }
  const ReferenceBasis& basis() const { return basis_; }

  std::span<const Index> cell_dofs(Index cell) const {
    const Index k = basis_.count();
    return {cell2dof_.data() + static_cast<std::size_t>(cell * k), static_cast<std::size_t>(k)};
  }

  /// DoFs on the geometric boundary, ascending. Empty for closed curves.
  const std::vector<Index>& boundary_dofs() const { return boundary_dofs_; }

  /// Global DoF of the edge (a, b); 2D P2 only.
  Index edge_dof(Index a, Index b) const;

  bool has_edge_dofs() const { return order() == 2 && mesh_->dim == 2; }

 private:
  const SimplicialMesh* mesh_;
  ReferenceBasis basis_;
  Index ndof_ = 0;
  std::vector<Index> cell2dof_;  // [N * K]
  std::vector<Index> boundary_dofs_;
  std::map<std::pair<Index, Index>, Index> edge_dofs_;
};

/// Trace machinery of a 2D P1 space: the boundary curve, its P1 mass matrix,
/// and the weights w with w . v = integral of the piecewise-linear v over
/// the boundary. Construct via make_boundary_space.
struct BoundarySpace {
  BoundaryTrace trace;
  std::unique_ptr<LagrangeSpace> space;  // P1 on trace.curve
  CsrMatrix mass;                        // [n_b, n_b]
  std::unique_ptr<DenseCholesky> mass_factor;
  std::vector<double> weights;           // mass row sums
  double total_weight = 0.0;             // = perimeter

  Index n_bdof() const { return trace.curve.num_nodes(); }

  /// integral of v over the boundary (w . v).
  double integral(std::span<const double> v) const;
  /// sqrt(v^T M v).
  double norm(std::span<const double> v) const;
  double inner(std::span<const double> u, std::span<const double> v) const;
  /// v <- v - (w.v / w.1) 1, making the boundary integral zero.
  void project_mean_zero(std::span<double> v) const;
  /// parent_load[node_map[i]] += (M v)_i; the Neumann load of nodal data v.
  void scatter_channel_load(std::span<const double> v, std::span<double> parent_load) const;
};

std::unique_ptr<BoundarySpace> make_boundary_space(const SimplicialMesh& mesh2d);

/// Boundary functions stored per channel: values is [L, n_bdof] on the trace
/// space of `boundary`.
struct BoundaryChannelSet {
  const BoundarySpace* boundary = nullptr;
  DenseTensor values;          // [L, n_bdof]
  std::vector<Index> labels;   // channel labels, size L

  Index channels() const { return values.rank() ? values.extent(0) : 0; }
  std::span<const double> channel(Index l) const {
    const Index nb = values.extent(1);
    return {values.data().data() + static_cast<std::size_t>(l * nb), static_cast<std::size_t>(nb)};
  }
  void validate() const;
};

}  // namespace gfem
