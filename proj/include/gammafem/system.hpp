#pragma once

#include <memory>
#include <optional>

#include "gammafem/forms.hpp"
#include "gammafem/solvers.hpp"
#include "gammafem/space.hpp"

namespace gfem {

enum class SolverBackend { Auto, Cg, DenseFactor };

/// Pure-Neumann Laplacian with the mean-zero constraint w . u = 0 enforced
/// through a Lagrange multiplier on the boundary-integral functional. The
/// bordered system
///     [K w; w^T 0] [u; mu] = [b; 0]
/// is solved by eliminating mu = (1.b)/(1.w) and applying the SPD operator
/// K + alpha w w^T to the compatible remainder, which yields exactly the
/// constrained solution. The solve map b -> u is self-adjoint.
class MeanZeroSolver {
 public:
  /// K is kept by reference; w are boundary weights of the same space.
  MeanZeroSolver(const CsrMatrix& k, std::vector<double> w,
                 SolverBackend backend = SolverBackend::Auto, CgOptions cg = {});

  Index size() const { return k_->nrows(); }
  std::span<const double> w() const { return w_; }
  double alpha() const { return alpha_; }
  bool uses_factor() const { return factor_ != nullptr; }
  Index factorization_count() const { return factorizations_; }

  /// Solves for one right-hand side (need not be compatible; the multiplier
  /// removes the incompatible part). Result satisfies w . u = 0.
  std::vector<double> solve(std::span<const double> b) const;

  /// Batched solve over rows of b: [L, n] -> [L, n].
  DenseTensor solve_rows(const DenseTensor& b) const;

 private:
  void eliminate_multiplier(std::span<double> b) const;

  const CsrMatrix* k_;
  std::vector<double> w_;
  double alpha_ = 1.0;
  double w_dot_one_ = 0.0;
  CgOptions cg_;
  std::unique_ptr<DenseCholesky> factor_;
  std::unique_ptr<RankOneAugmentedOperator> op_;
  Index factorizations_ = 0;
};

struct NeumannSolveResult {
  DenseTensor solutions;                // [L, ndof]
  std::vector<double> compat_residual;  // |1 . b| / ||b|| per load before projection
  std::vector<bool> compat_warning;     // residual above 1e-8
};

/// Solves K phi_l = load_l with the mean-zero constraint for each row of
/// `loads`. Incompatible loads (nonzero mean beyond 1e-8 relative) are
/// flagged, then projected by the multiplier elimination.
NeumannSolveResult solve_neumann_meanzero(const MeanZeroSolver& solver, const DenseTensor& loads);

/// Background (sigma == 1) Dirichlet-to-Neumann map on the boundary curve of
/// a 2D P1 space: g on the trace nodes is harmonically extended and the
/// variationally consistent flux t with M_b t = a(w_g, v_r) is returned on
/// the trace nodes. Self-adjoint in the boundary mass inner product.
class BackgroundDtn {
 public:
  BackgroundDtn(const LagrangeSpace& space, const BoundarySpace& boundary, CgOptions cg = {});

  std::vector<double> apply(std::span<const double> g) const;
  DenseTensor apply_rows(const DenseTensor& g) const;

 private:
  const LagrangeSpace* space_;
  const BoundarySpace* boundary_;
  CsrMatrix k_;
  CsrMatrix k_ii_;
  CsrMatrix k_ib_;
  std::vector<Index> interior_;             // interior dof ids
  std::vector<Index> dof_to_interior_;      // -1 for boundary dofs
  CgOptions cg_;
};

/// Locates points in a full-dimensional mesh by cell walking. Points on
/// shared facets resolve to the lowest containing cell index.
class PointLocator {
 public:
  explicit PointLocator(const SimplicialMesh& mesh);

  struct Hit {
    Index cell = -1;
    std::array<double, 4> lambda{};
  };

  /// Throws std::invalid_argument when x lies outside the mesh.
  Hit locate(std::span<const double> x) const;

  const DenseTensor& jacobians() const { return jacobians_; }

 private:
  Hit locate_from(std::span<const double> x, Index start) const;
  void barycentric(Index cell, std::span<const double> x, std::array<double, 4>& lambda) const;

  const SimplicialMesh* mesh_;
  DenseTensor jacobians_;
  std::vector<Index> neighbor_;         // [N * (dim+1)], -1 on boundary
  std::vector<std::vector<Index>> node_cells_;
  mutable Index last_cell_ = 0;
};

/// u restricted to the boundary curve nodes (2D P1).
std::vector<double> trace_values(const LagrangeSpace& space, std::span<const double> u,
                                 const BoundarySpace& boundary);

/// Gradients of the FE function at interior points: [P, D].
DenseTensor grad_at_points(const LagrangeSpace& space, std::span<const double> u,
                           const DenseTensor& points, const PointLocator& locator);

/// Sparse row r -> d . grad v_r(x), supported on the containing cell.
struct PointGradientRow {
  Index cell = -1;
  std::vector<Index> dofs;
  std::vector<double> coefficients;
};
PointGradientRow basis_gradients_at_point(const LagrangeSpace& space, std::span<const double> x,
                                          std::span<const double> direction,
                                          const PointLocator& locator);

}  // namespace gfem
