#pragma once

#include "gammafem/mesh.hpp"
#include "gammafem/quadrature.hpp"
#include "gammafem/tensor.hpp"

namespace gfem {

/// Lagrange shape functions on the reference D-simplex, expressed in
/// barycentric coordinates. Supported: order 1 for D in {1,2,3}, order 2 for
/// D in {1,2}. Local ordering is vertices first, then edge midpoints in
/// lexicographic local-pair order ((0,1), (0,2), (1,2)).
class ReferenceBasis {
 public:
  ReferenceBasis(Index dim, Index order);

  Index dim() const { return dim_; }
  Index order() const { return order_; }
  Index count() const { return count_; }  // K shape functions

  /// f_k at barycentric points: [Q, K].
  DenseTensor values(const DenseTensor& bary) const;

  /// df_k/dlambda_b at barycentric points: [Q, K, D+1].
  DenseTensor lambda_gradients(const DenseTensor& bary) const;

  /// Barycentric coordinates of the Lagrange nodes: [K, D+1].
  DenseTensor nodes() const;

 private:
  Index dim_;
  Index order_;
  Index count_;
};

/// Physical shape-function gradients bPhi[n,q,k,d] = F[q,k,b] J[n,b,d],
/// contracted over the barycentric axis b.
DenseTensor shape_gradients(const SimplicialMesh& mesh, const ReferenceBasis& basis,
                            const QuadratureRule& quad);

}  // namespace gfem
