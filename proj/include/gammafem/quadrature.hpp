#pragma once

#include "gammafem/tensor.hpp"

namespace gfem {

/// Quadrature on the reference D-simplex in barycentric coordinates.
/// Weights sum to 1; physical integrals multiply by the cell measure.
struct QuadratureRule {
  Index dim = 0;
  Index degree = 0;              // declared polynomial exactness
  DenseTensor points;            // [Q, D+1], rows sum to 1, entries in (0, 1)
  std::vector<double> weights;   // [Q]

  Index count() const { return points.rank() ? points.extent(0) : 0; }
};

/// Gauss rule of at least the requested degree for D in {1, 2, 3}, built as a
/// conical product of Gauss-Legendre and Gauss-Jacobi lines. All weights are
/// positive and all points are interior.
QuadratureRule simplex_quadrature(Index dim, Index degree);

/// Gauss-Legendre nodes/weights on [0, 1] (weights sum to 1).
void gauss_legendre_01(Index m, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace gfem
