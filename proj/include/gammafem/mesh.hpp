#pragma once

#include <array>
#include <vector>

#include "gammafem/tensor.hpp"

namespace gfem {

/// Simplicial mesh of intrinsic dimension dim whose nodes live in
/// embed_dim >= dim coordinates (a closed boundary curve is dim 1 embedded
/// in 2D). Cells store dim+1 vertex ids each, positively oriented.
struct SimplicialMesh {
  Index dim = 0;
  Index embed_dim = 0;
  DenseTensor nodes;          // [num_nodes, embed_dim]
  std::vector<Index> cells;   // [num_cells * (dim + 1)]
  bool closed_curve = false;

  Index num_nodes() const { return nodes.rank() ? nodes.extent(0) : 0; }
  Index num_cells() const {
    return static_cast<Index>(cells.size()) / (dim + 1);
  }
  Index cell_vertex(Index n, Index b) const {
    return cells[static_cast<std::size_t>(n * (dim + 1) + b)];
  }
  double node_coord(Index v, Index d) const { return nodes[v * embed_dim + d]; }

  void validate() const;
};

/// Uniform mesh of a box: intervals for D=1, each grid square split into two
/// triangles along the (+1,+1) diagonal for D=2, each cube into six
/// positively oriented tetrahedra for D=3.
SimplicialMesh uniform_mesh(Index dim, Index divisions, std::span<const double> lo,
                            std::span<const double> hi);

/// [N, D+1, D] gradients of the barycentric coordinates per cell. For a
/// curve embedded in 2D the derivative is taken along arclength (D = 1).
DenseTensor barycentric_jacobians(const SimplicialMesh& mesh);

/// Cell measures (length/area/volume), all positive.
std::vector<double> cell_measures(const SimplicialMesh& mesh);

/// Uniform refinement. D=1 bisects segments, D=2 splits each triangle into
/// four by edge midpoints. Parent nodes are a prefix of the refined nodes.
SimplicialMesh uniform_refine(const SimplicialMesh& mesh, Index times);

/// Boundary facet of a full-dimensional mesh: the facet opposite vertex
/// `local` of cell `cell`, belonging to exactly one cell.
struct BoundaryFacet {
  Index cell = 0;
  Index local = 0;
  std::array<Index, 3> vertices{};  // first `dim` entries used
};

std::vector<BoundaryFacet> boundary_facets(const SimplicialMesh& mesh);

/// The boundary of a 2D mesh as a closed curve: nodes ordered
/// counterclockwise starting from the lexicographically smallest corner.
struct BoundaryTrace {
  SimplicialMesh curve;             // dim 1, embedded in 2D, closed
  std::vector<Index> node_map;      // curve node -> parent node id
  std::vector<double> arclength;    // from the start node, per curve node
  std::vector<double> theta;        // atan2(y, x) per curve node
  double perimeter = 0.0;
};

BoundaryTrace boundary_trace_mesh(const SimplicialMesh& mesh2d);

}  // namespace gfem
