#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gammafem/tensor.hpp"

namespace gfem {

/// Triplet-format sparse matrix. Duplicate (row, col) entries are summed on
/// conversion to CSR. Supports batched value planes sharing one index set.
struct CooMatrix {
  Index nrows = 0;
  Index ncols = 0;
  std::vector<Index> rows;
  std::vector<Index> cols;
  std::vector<double> values;  // [batch, nnz] flattened; batch 0 means plain
  Index batch = 0;

  Index nnz() const { return static_cast<Index>(rows.size()); }
  Index planes() const { return batch == 0 ? 1 : batch; }

  void push(Index r, Index c, double v);
  void validate() const;
};

/// Compressed sparse row matrix, optionally carrying several value planes
/// over one shared sparsity pattern.
class CsrMatrix {
 public:
  CsrMatrix() = default;
  CsrMatrix(Index nrows, Index ncols, std::vector<Index> row_offsets,
            std::vector<Index> col_indices, std::vector<double> values, Index batch = 0);

  Index nrows() const { return nrows_; }
  Index ncols() const { return ncols_; }
  Index nnz() const { return static_cast<Index>(col_indices_.size()); }
  Index batch() const { return batch_; }
  Index planes() const { return batch_ == 0 ? 1 : batch_; }

  std::span<const Index> row_offsets() const { return row_offsets_; }
  std::span<const Index> col_indices() const { return col_indices_; }
  std::span<const double> values(Index plane = 0) const;
  std::span<double> values(Index plane = 0);

  /// Extracts one plane as an unbatched matrix sharing the pattern.
  CsrMatrix plane(Index b) const;

  /// y = A x using the given plane.
  void matvec(std::span<const double> x, std::span<double> y, Index plane = 0) const;

  std::vector<double> matvec(std::span<const double> x, Index plane = 0) const;

  /// Row sums, one per row.
  std::vector<double> row_sums(Index plane = 0) const;

  double value_at(Index r, Index c, Index plane = 0) const;

  /// Max |A - A^T| over the pattern; infinity when the pattern itself is
  /// unsymmetric.
  double symmetry_error(Index plane = 0) const;

  CsrMatrix transpose() const;

 private:
  Index nrows_ = 0;
  Index ncols_ = 0;
  std::vector<Index> row_offsets_;
  std::vector<Index> col_indices_;
  std::vector<double> values_;
  Index batch_ = 0;
};

/// Deterministic COO -> CSR conversion: triplets sorted by (row, col, value)
/// and runs of equal (row, col) summed in sorted order, so the result does
/// not depend on the order triplets were emitted in.
CsrMatrix coo_to_csr(const CooMatrix& coo);

/// Dense [nrows, ncols] copy of one plane.
DenseTensor csr_to_dense(const CsrMatrix& m, Index plane = 0);

}  // namespace gfem
