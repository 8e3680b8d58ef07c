#pragma once

#include <memory>
#include <span>
#include <vector>

#include "gammafem/sparse.hpp"
#include "gammafem/tensor.hpp"

namespace gfem {

/// Abstract symmetric linear operator for iterative solvers. The block apply
/// works on column-interleaved storage: x and y hold ncols values per point,
/// so ncols == 1 is an ordinary contiguous vector.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual Index size() const = 0;
  virtual void apply_block(const double* x, double* y, Index ncols) const = 0;
  /// Diagonal entries, used by the Jacobi preconditioner.
  virtual std::vector<double> diagonal() const = 0;

  void apply(std::span<const double> x, std::span<double> y) const {
    apply_block(x.data(), y.data(), 1);
  }
};

/// CSR-backed operator. Construction rejects matrices that are not symmetric
/// to 1e-12 relative.
class CsrOperator : public LinearOperator {
 public:
  explicit CsrOperator(const CsrMatrix& m, Index plane = 0);
  Index size() const override { return m_->nrows(); }
  void apply_block(const double* x, double* y, Index ncols) const override;
  std::vector<double> diagonal() const override;

 private:
  const CsrMatrix* m_;
  Index plane_;
};

/// K + alpha * w w^T without forming the rank-one term.
class RankOneAugmentedOperator : public LinearOperator {
 public:
  RankOneAugmentedOperator(const CsrMatrix& k, std::vector<double> w, double alpha,
                           Index plane = 0);
  Index size() const override { return k_->nrows(); }
  void apply_block(const double* x, double* y, Index ncols) const override;
  std::vector<double> diagonal() const override;
  double alpha() const { return alpha_; }
  std::span<const double> w() const { return w_; }

 private:
  const CsrMatrix* k_;
  std::vector<double> w_;
  double alpha_;
  Index plane_;
};

struct CgOptions {
  double tol = 1e-10;        // relative residual target
  Index max_iterations = 0;  // 0 selects 10 * n
  bool jacobi = false;
};

struct CgReport {
  Index iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Unpreconditioned (or Jacobi) conjugate gradients. On convergence the true
/// residual is recomputed; iteration continues if it has drifted above tol,
/// so the reported residual is always the actual one.
CgReport cg_solve(const LinearOperator& a, std::span<const double> b, std::span<double> x,
                  const CgOptions& opts = {});

/// Multi right-hand-side CG over B rows (B is [L, n], X is [L, n]). All
/// columns advance through one shared matvec per iteration; converged columns
/// are frozen, so each column reproduces its standalone solve exactly.
std::vector<CgReport> cg_solve_multi(const LinearOperator& a, const DenseTensor& b, DenseTensor& x,
                                     const CgOptions& opts = {});

/// Throws std::runtime_error naming the worst column if any report failed.
void require_converged(const std::vector<CgReport>& reports, const char* what);

/// Dense Cholesky factorization (LL^T) of an SPD matrix, reusable across many
/// right-hand sides. Throws on a nonpositive pivot.
class DenseCholesky {
 public:
  explicit DenseCholesky(const DenseTensor& a);  // [n, n]
  /// Densifies a CSR matrix, optionally adding alpha * w w^T first.
  DenseCholesky(const CsrMatrix& a, std::span<const double> w, double alpha);
  ~DenseCholesky();
  DenseCholesky(DenseCholesky&&) noexcept;
  DenseCholesky& operator=(DenseCholesky&&) noexcept;

  Index size() const;
  std::vector<double> solve(std::span<const double> b) const;
  void solve_inplace(std::span<double> b) const;
  /// Solves for many right-hand sides given as rows of B ([m, n]); returns
  /// the solutions as rows.
  DenseTensor solve_rows(const DenseTensor& b) const;
  std::vector<double> factor_diagonal() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Eigenpairs of A f = lambda M f with M-orthonormal eigenvectors.
struct EigenPairs {
  std::vector<double> eigenvalues;  // ascending
  DenseTensor eigenvectors;         // [n, k], column j pairs with eigenvalues[j]
};

/// Smallest-k generalized symmetric eigenpairs via dense reduction. With
/// skip_null, leading near-zero eigenvalues (the constant mode of a closed
/// curve Laplacian) are excluded before counting k. Eigenvector signs are
/// fixed by making the largest-magnitude entry positive.
EigenPairs sym_gen_eig(const CsrMatrix& a, const CsrMatrix& m, Index k, bool skip_null);

}  // namespace gfem
