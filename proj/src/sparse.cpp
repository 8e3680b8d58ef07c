#include "gammafem/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace gfem {

void CooMatrix::push(Index r, Index c, double v) {
  rows.push_back(r);
  cols.push_back(c);
  values.push_back(v);
}

void CooMatrix::validate() const {
  if (cols.size() != rows.size())
    throw std::invalid_argument("CooMatrix: rows/cols length mismatch");
  const Index n = nnz();
  if (static_cast<Index>(values.size()) != n * planes())
    throw std::invalid_argument("CooMatrix: values length mismatch");
  for (Index i = 0; i < n; ++i) {
    if (rows[static_cast<std::size_t>(i)] < 0 || rows[static_cast<std::size_t>(i)] >= nrows ||
        cols[static_cast<std::size_t>(i)] < 0 || cols[static_cast<std::size_t>(i)] >= ncols)
      throw std::invalid_argument("CooMatrix: index out of range");
  }
}

CsrMatrix::CsrMatrix(Index nrows, Index ncols, std::vector<Index> row_offsets,
                     std::vector<Index> col_indices, std::vector<double> values, Index batch)
    : nrows_(nrows),
      ncols_(ncols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)),
      batch_(batch) {
  if (static_cast<Index>(row_offsets_.size()) != nrows_ + 1)
    throw std::invalid_argument("CsrMatrix: row_offsets length");
  if (row_offsets_.front() != 0 || row_offsets_.back() != nnz())
    throw std::invalid_argument("CsrMatrix: row_offsets endpoints");
  if (static_cast<Index>(values_.size()) != nnz() * planes())
    throw std::invalid_argument("CsrMatrix: values length");
}

std::span<const double> CsrMatrix::values(Index plane) const {
  return {values_.data() + static_cast<std::size_t>(plane * nnz()), static_cast<std::size_t>(nnz())};
}

std::span<double> CsrMatrix::values(Index plane) {
  return {values_.data() + static_cast<std::size_t>(plane * nnz()), static_cast<std::size_t>(nnz())};
}

CsrMatrix CsrMatrix::plane(Index b) const {
  auto v = values(b);
  return CsrMatrix(nrows_, ncols_, row_offsets_, col_indices_,
                   std::vector<double>(v.begin(), v.end()), 0);
}

void CsrMatrix::matvec(std::span<const double> x, std::span<double> y, Index plane) const {
  if (static_cast<Index>(x.size()) != ncols_ || static_cast<Index>(y.size()) != nrows_)
    throw std::invalid_argument("CsrMatrix::matvec: size mismatch");
  const double* v = values_.data() + static_cast<std::size_t>(plane * nnz());
  for (Index r = 0; r < nrows_; ++r) {
    double acc = 0.0;
    for (Index p = row_offsets_[static_cast<std::size_t>(r)];
         p < row_offsets_[static_cast<std::size_t>(r) + 1]; ++p)
      acc += v[p] * x[static_cast<std::size_t>(col_indices_[static_cast<std::size_t>(p)])];
    y[static_cast<std::size_t>(r)] = acc;
  }
}

std::vector<double> CsrMatrix::matvec(std::span<const double> x, Index plane) const {
  std::vector<double> y(static_cast<std::size_t>(nrows_));
  matvec(x, y, plane);
  return y;
}

std::vector<double> CsrMatrix::row_sums(Index plane) const {
  std::vector<double> s(static_cast<std::size_t>(nrows_), 0.0);
  const double* v = values_.data() + static_cast<std::size_t>(plane * nnz());
  for (Index r = 0; r < nrows_; ++r) {
    double acc = 0.0;
    for (Index p = row_offsets_[static_cast<std::size_t>(r)];
         p < row_offsets_[static_cast<std::size_t>(r) + 1]; ++p)
      acc += v[p];
    s[static_cast<std::size_t>(r)] = acc;
  }
  return s;
}

double CsrMatrix::value_at(Index r, Index c, Index plane) const {
  const double* v = values_.data() + static_cast<std::size_t>(plane * nnz());
  const Index lo = row_offsets_[static_cast<std::size_t>(r)];
  const Index hi = row_offsets_[static_cast<std::size_t>(r) + 1];
  const auto begin = col_indices_.begin() + static_cast<std::ptrdiff_t>(lo);
  const auto end = col_indices_.begin() + static_cast<std::ptrdiff_t>(hi);
  const auto it = std::lower_bound(begin, end, c);
  if (it == end || *it != c) return 0.0;
  return v[lo + (it - begin)];
}

double CsrMatrix::symmetry_error(Index plane) const {
  if (nrows_ != ncols_) return std::numeric_limits<double>::infinity();
  const CsrMatrix t = transpose();
  if (t.row_offsets_ != row_offsets_ || t.col_indices_ != col_indices_)
    return std::numeric_limits<double>::infinity();
  auto a = values(plane);
  auto b = t.values(0);
  double err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) err = std::max(err, std::abs(a[i] - b[i]));
  return err;
}

CsrMatrix CsrMatrix::transpose() const {
  std::vector<Index> offs(static_cast<std::size_t>(ncols_) + 1, 0);
  for (Index c : col_indices_) offs[static_cast<std::size_t>(c) + 1]++;
  for (std::size_t i = 1; i < offs.size(); ++i) offs[i] += offs[i - 1];
  std::vector<Index> cols(col_indices_.size());
  std::vector<double> vals(col_indices_.size());
  std::vector<Index> cursor(offs.begin(), offs.end() - 1);
  const auto v0 = values(0);
  for (Index r = 0; r < nrows_; ++r) {
    for (Index p = row_offsets_[static_cast<std::size_t>(r)];
         p < row_offsets_[static_cast<std::size_t>(r) + 1]; ++p) {
      const Index c = col_indices_[static_cast<std::size_t>(p)];
      const Index dst = cursor[static_cast<std::size_t>(c)]++;
      cols[static_cast<std::size_t>(dst)] = r;
      vals[static_cast<std::size_t>(dst)] = v0[static_cast<std::size_t>(p)];
    }
  }
  return CsrMatrix(ncols_, nrows_, std::move(offs), std::move(cols), std::move(vals), 0);
}

CsrMatrix coo_to_csr(const CooMatrix& coo) {
  coo.validate();
  const Index n = coo.nnz();
  const Index nplanes = coo.planes();

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::stable_sort(perm.begin(), perm.end(), [&](Index a, Index b) {
    const auto ia = static_cast<std::size_t>(a);
    const auto ib = static_cast<std::size_t>(b);
    if (coo.rows[ia] != coo.rows[ib]) return coo.rows[ia] < coo.rows[ib];
    if (coo.cols[ia] != coo.cols[ib]) return coo.cols[ia] < coo.cols[ib];
    return coo.values[ia] < coo.values[ib];
  });

  // Count distinct (row, col) pairs.
  Index out_nnz = 0;
  for (Index i = 0; i < n; ++i) {
    const auto pi = static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]);
    if (i == 0) {
      ++out_nnz;
      continue;
    }
    const auto pp = static_cast<std::size_t>(perm[static_cast<std::size_t>(i - 1)]);
    if (coo.rows[pi] != coo.rows[pp] || coo.cols[pi] != coo.cols[pp]) ++out_nnz;
  }

  std::vector<Index> offs(static_cast<std::size_t>(coo.nrows) + 1, 0);
  std::vector<Index> cols(static_cast<std::size_t>(out_nnz));
  std::vector<double> vals(static_cast<std::size_t>(out_nnz * nplanes), 0.0);

  Index k = -1;
  Index prev_r = -1, prev_c = -1;
  for (Index i = 0; i < n; ++i) {
    const auto pi = static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]);
    const Index r = coo.rows[pi];
    const Index c = coo.cols[pi];
    if (r != prev_r || c != prev_c) {
      ++k;
      cols[static_cast<std::size_t>(k)] = c;
      offs[static_cast<std::size_t>(r) + 1]++;
      prev_r = r;
      prev_c = c;
    }
    for (Index b = 0; b < nplanes; ++b)
      vals[static_cast<std::size_t>(b * out_nnz + k)] +=
          coo.values[static_cast<std::size_t>(b * n) + pi];
  }
  for (std::size_t i = 1; i < offs.size(); ++i) offs[i] += offs[i - 1];

  return CsrMatrix(coo.nrows, coo.ncols, std::move(offs), std::move(cols), std::move(vals),
                   coo.batch);
}

DenseTensor csr_to_dense(const CsrMatrix& m, Index plane) {
  DenseTensor d({m.nrows(), m.ncols()});
  const auto offs = m.row_offsets();
  const auto cols = m.col_indices();
  const auto vals = m.values(plane);
  for (Index r = 0; r < m.nrows(); ++r)
    for (Index p = offs[static_cast<std::size_t>(r)]; p < offs[static_cast<std::size_t>(r) + 1];
         ++p)
      d.at({r, cols[static_cast<std::size_t>(p)]}) = vals[static_cast<std::size_t>(p)];
  return d;
}

}  // namespace gfem
