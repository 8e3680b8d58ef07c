#include "gammafem/solvers.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gfem {

namespace {

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

CsrOperator::CsrOperator(const CsrMatrix& m, Index plane) : m_(&m), plane_(plane) {
  if (m.nrows() != m.ncols()) throw std::invalid_argument("CsrOperator: matrix not square");
  const double scale = std::max(1.0, max_abs(m.values(plane)));
  if (m.symmetry_error(plane) > 1e-12 * scale)
    throw std::invalid_argument("CsrOperator: matrix not symmetric");
}

void CsrOperator::apply_block(const double* x, double* y, Index ncols) const {
  const auto offs = m_->row_offsets();
  const auto cols = m_->col_indices();
  const auto vals = m_->values(plane_);
  const Index n = m_->nrows();
  const Index L = ncols;
  for (Index r = 0; r < n; ++r) {
    double* yr = y + r * L;
    for (Index j = 0; j < L; ++j) yr[j] = 0.0;
    for (Index p = offs[static_cast<std::size_t>(r)]; p < offs[static_cast<std::size_t>(r) + 1];
         ++p) {
      const double v = vals[static_cast<std::size_t>(p)];
      const double* xc = x + cols[static_cast<std::size_t>(p)] * L;
      for (Index j = 0; j < L; ++j) yr[j] += v * xc[j];
    }
  }
}

std::vector<double> CsrOperator::diagonal() const {
  std::vector<double> d(static_cast<std::size_t>(m_->nrows()));
  for (Index r = 0; r < m_->nrows(); ++r) d[static_cast<std::size_t>(r)] = m_->value_at(r, r, plane_);
  return d;
}

RankOneAugmentedOperator::RankOneAugmentedOperator(const CsrMatrix& k, std::vector<double> w,
                                                   double alpha, Index plane)
    : k_(&k), w_(std::move(w)), alpha_(alpha), plane_(plane) {
  if (k.nrows() != k.ncols() || static_cast<Index>(w_.size()) != k.nrows())
    throw std::invalid_argument("RankOneAugmentedOperator: size mismatch");
}

void RankOneAugmentedOperator::apply_block(const double* x, double* y, Index ncols) const {
  const auto offs = k_->row_offsets();
  const auto cols = k_->col_indices();
  const auto vals = k_->values(plane_);
  const Index n = k_->nrows();
  const Index L = ncols;
  std::vector<double> wdot(static_cast<std::size_t>(L), 0.0);
  for (Index i = 0; i < n; ++i) {
    const double wi = w_[static_cast<std::size_t>(i)];
    const double* xi = x + i * L;
    for (Index j = 0; j < L; ++j) wdot[static_cast<std::size_t>(j)] += wi * xi[j];
  }
  for (Index j = 0; j < L; ++j) wdot[static_cast<std::size_t>(j)] *= alpha_;
  for (Index r = 0; r < n; ++r) {
    double* yr = y + r * L;
    for (Index j = 0; j < L; ++j) yr[j] = 0.0;
    for (Index p = offs[static_cast<std::size_t>(r)]; p < offs[static_cast<std::size_t>(r) + 1];
         ++p) {
      const double v = vals[static_cast<std::size_t>(p)];
      const double* xc = x + cols[static_cast<std::size_t>(p)] * L;
      for (Index j = 0; j < L; ++j) yr[j] += v * xc[j];
    }
    const double wr = w_[static_cast<std::size_t>(r)];
    for (Index j = 0; j < L; ++j) yr[j] += wdot[static_cast<std::size_t>(j)] * wr;
  }
}

std::vector<double> RankOneAugmentedOperator::diagonal() const {
  std::vector<double> d(static_cast<std::size_t>(k_->nrows()));
  for (Index r = 0; r < k_->nrows(); ++r)
    d[static_cast<std::size_t>(r)] =
        k_->value_at(r, r, plane_) + alpha_ * w_[static_cast<std::size_t>(r)] * w_[static_cast<std::size_t>(r)];
  return d;
}

namespace {

// Block PCG on column-interleaved storage. Each column runs the textbook
// iteration with its own scalars; converged columns freeze so every column
// reproduces its standalone solve bit for bit.
std::vector<CgReport> cg_block(const LinearOperator& a, const double* b, double* x, Index L,
                               const CgOptions& opts) {
  const Index n = a.size();
  const Index maxit = opts.max_iterations > 0 ? opts.max_iterations : 10 * n;
  const std::size_t total = static_cast<std::size_t>(n * L);

  std::vector<double> invdiag;
  if (opts.jacobi) {
    invdiag = a.diagonal();
    for (double& d : invdiag) {
      if (d <= 0.0) throw std::runtime_error("cg_solve: nonpositive diagonal with Jacobi");
      d = 1.0 / d;
    }
  }

  std::vector<double> r(total), z(total), p(total), ap(total);
  std::vector<double> rz(static_cast<std::size_t>(L), 0.0);
  std::vector<double> bnorm(static_cast<std::size_t>(L), 0.0);
  std::vector<char> active(static_cast<std::size_t>(L), 1);
  std::vector<CgReport> reports(static_cast<std::size_t>(L));

  std::fill(x, x + total, 0.0);
  std::copy(b, b + total, r.data());

  for (Index j = 0; j < L; ++j) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double v = b[i * L + j];
      s += v * v;
    }
    bnorm[static_cast<std::size_t>(j)] = std::sqrt(s);
    if (bnorm[static_cast<std::size_t>(j)] == 0.0) {
      active[static_cast<std::size_t>(j)] = 0;
      reports[static_cast<std::size_t>(j)] = {0, 0.0, true};
    }
  }

  auto precondition = [&](Index j) {
    if (opts.jacobi) {
      for (Index i = 0; i < n; ++i)
        z[static_cast<std::size_t>(i * L + j)] =
            r[static_cast<std::size_t>(i * L + j)] * invdiag[static_cast<std::size_t>(i)];
    } else {
      for (Index i = 0; i < n; ++i)
        z[static_cast<std::size_t>(i * L + j)] = r[static_cast<std::size_t>(i * L + j)];
    }
  };
  auto dot_col = [&](const std::vector<double>& u, const std::vector<double>& v, Index j) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i)
      s += u[static_cast<std::size_t>(i * L + j)] * v[static_cast<std::size_t>(i * L + j)];
    return s;
  };

  for (Index j = 0; j < L; ++j) {
    if (!active[static_cast<std::size_t>(j)]) continue;
    precondition(j);
    for (Index i = 0; i < n; ++i)
      p[static_cast<std::size_t>(i * L + j)] = z[static_cast<std::size_t>(i * L + j)];
    rz[static_cast<std::size_t>(j)] = dot_col(r, z, j);
  }

  std::vector<double> colx(static_cast<std::size_t>(n)), colax(static_cast<std::size_t>(n));
  Index n_active = 0;
  for (char f : active) n_active += f;

  Index iter = 0;
  while (n_active > 0 && iter < maxit) {
    a.apply_block(p.data(), ap.data(), L);
    ++iter;
    for (Index j = 0; j < L; ++j) {
      const std::size_t sj = static_cast<std::size_t>(j);
      if (!active[sj]) continue;
      reports[sj].iterations = iter;
      const double pap = dot_col(p, ap, j);
      if (!(pap > 0.0)) {
        active[sj] = 0;
        --n_active;
        reports[sj].converged = false;
        reports[sj].relative_residual = std::sqrt(std::max(0.0, rz[sj])) / bnorm[sj];
        continue;
      }
      const double alpha = rz[sj] / pap;
      for (Index i = 0; i < n; ++i) {
        x[i * L + j] += alpha * p[static_cast<std::size_t>(i * L + j)];
        r[static_cast<std::size_t>(i * L + j)] -= alpha * ap[static_cast<std::size_t>(i * L + j)];
      }
      double rr = 0.0;
      for (Index i = 0; i < n; ++i) {
        const double v = r[static_cast<std::size_t>(i * L + j)];
        rr += v * v;
      }
      if (std::sqrt(rr) <= opts.tol * bnorm[sj]) {
        // Recurrence says done; confirm against the true residual.
        for (Index i = 0; i < n; ++i) colx[static_cast<std::size_t>(i)] = x[i * L + j];
        a.apply(colx, colax);
        double tr = 0.0;
        for (Index i = 0; i < n; ++i) {
          const double v = b[i * L + j] - colax[static_cast<std::size_t>(i)];
          tr += v * v;
        }
        const double true_res = std::sqrt(tr);
        if (true_res <= opts.tol * bnorm[sj]) {
          active[sj] = 0;
          --n_active;
          reports[sj].converged = true;
          reports[sj].relative_residual = true_res / bnorm[sj];
          continue;
        }
        // Drift: restart from the true residual.
        for (Index i = 0; i < n; ++i)
          r[static_cast<std::size_t>(i * L + j)] =
              b[i * L + j] - colax[static_cast<std::size_t>(i)];
        precondition(j);
        for (Index i = 0; i < n; ++i)
          p[static_cast<std::size_t>(i * L + j)] = z[static_cast<std::size_t>(i * L + j)];
        rz[sj] = dot_col(r, z, j);
        continue;
      }
      precondition(j);
      const double rz_new = dot_col(r, z, j);
      const double beta = rz_new / rz[sj];
      rz[sj] = rz_new;
      for (Index i = 0; i < n; ++i)
        p[static_cast<std::size_t>(i * L + j)] =
            z[static_cast<std::size_t>(i * L + j)] + beta * p[static_cast<std::size_t>(i * L + j)];
    }
  }

  for (Index j = 0; j < L; ++j) {
    const std::size_t sj = static_cast<std::size_t>(j);
    if (!active[sj]) continue;
    // Ran out of iterations; report the true residual.
    for (Index i = 0; i < n; ++i) colx[static_cast<std::size_t>(i)] = x[i * L + j];
    a.apply(colx, colax);
    double tr = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double v = b[i * L + j] - colax[static_cast<std::size_t>(i)];
      tr += v * v;
    }
    reports[sj].converged = false;
    reports[sj].relative_residual = std::sqrt(tr) / bnorm[sj];
  }
  return reports;
}

}  // namespace

CgReport cg_solve(const LinearOperator& a, std::span<const double> b, std::span<double> x,
                  const CgOptions& opts) {
  if (static_cast<Index>(b.size()) != a.size() || static_cast<Index>(x.size()) != a.size())
    throw std::invalid_argument("cg_solve: size mismatch");
  for (double v : b)
    if (!std::isfinite(v)) throw std::invalid_argument("cg_solve: non-finite right-hand side");
  return cg_block(a, b.data(), x.data(), 1, opts)[0];
}

std::vector<CgReport> cg_solve_multi(const LinearOperator& a, const DenseTensor& b, DenseTensor& x,
                                     const CgOptions& opts) {
  if (b.rank() != 2 || b.extent(1) != a.size())
    throw std::invalid_argument("cg_solve_multi: B must be [L, n]");
  b.require_finite("cg_solve_multi");
  const Index L = b.extent(0);
  const Index n = a.size();
  x = DenseTensor({L, n});

  // Interleave rows into [n, L] blocks, solve, and scatter back.
  std::vector<double> bi(static_cast<std::size_t>(n * L)), xi(static_cast<std::size_t>(n * L));
  for (Index l = 0; l < L; ++l)
    for (Index i = 0; i < n; ++i)
      bi[static_cast<std::size_t>(i * L + l)] = b[l * n + i];
  auto reports = cg_block(a, bi.data(), xi.data(), L, opts);
  for (Index l = 0; l < L; ++l)
    for (Index i = 0; i < n; ++i) x[l * n + i] = xi[static_cast<std::size_t>(i * L + l)];
  return reports;
}

void require_converged(const std::vector<CgReport>& reports, const char* what) {
  for (std::size_t j = 0; j < reports.size(); ++j) {
    if (!reports[j].converged)
      throw std::runtime_error(std::string(what) + ": CG failed on column " + std::to_string(j) +
                               " (relative residual " +
                               std::to_string(reports[j].relative_residual) + ")");
  }
}

struct DenseCholesky::Impl {
  Eigen::LLT<Eigen::MatrixXd> llt;
  Index n = 0;

  void init(const Eigen::MatrixXd& m) {
    n = m.rows();
    llt.compute(m);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("DenseCholesky: matrix is not positive definite");
  }
};

DenseCholesky::DenseCholesky(const DenseTensor& a) : impl_(std::make_unique<Impl>()) {
  if (a.rank() != 2 || a.extent(0) != a.extent(1))
    throw std::invalid_argument("DenseCholesky: matrix must be square");
  const Index n = a.extent(0);
  Eigen::MatrixXd m(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) m(i, j) = a[i * n + j];
  impl_->init(m);
}

DenseCholesky::DenseCholesky(const CsrMatrix& a, std::span<const double> w, double alpha)
    : impl_(std::make_unique<Impl>()) {
  if (a.nrows() != a.ncols()) throw std::invalid_argument("DenseCholesky: matrix must be square");
  const Index n = a.nrows();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  const auto offs = a.row_offsets();
  const auto cols = a.col_indices();
  const auto vals = a.values(0);
  for (Index r = 0; r < n; ++r)
    for (Index p = offs[static_cast<std::size_t>(r)]; p < offs[static_cast<std::size_t>(r) + 1];
         ++p)
      m(r, cols[static_cast<std::size_t>(p)]) = vals[static_cast<std::size_t>(p)];
  if (!w.empty()) {
    if (static_cast<Index>(w.size()) != n)
      throw std::invalid_argument("DenseCholesky: rank-one vector size mismatch");
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        m(i, j) += alpha * w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(j)];
  }
  impl_->init(m);
}

DenseCholesky::~DenseCholesky() = default;
DenseCholesky::DenseCholesky(DenseCholesky&&) noexcept = default;
DenseCholesky& DenseCholesky::operator=(DenseCholesky&&) noexcept = default;

Index DenseCholesky::size() const { return impl_->n; }

void DenseCholesky::solve_inplace(std::span<double> b) const {
  Eigen::Map<Eigen::VectorXd> v(b.data(), static_cast<Eigen::Index>(b.size()));
  impl_->llt.solveInPlace(v);
}

std::vector<double> DenseCholesky::solve(std::span<const double> b) const {
  std::vector<double> x(b.begin(), b.end());
  solve_inplace(x);
  return x;
}

DenseTensor DenseCholesky::solve_rows(const DenseTensor& b) const {
  if (b.rank() != 2 || b.extent(1) != impl_->n)
    throw std::invalid_argument("DenseCholesky::solve_rows: B must be [m, n]");
  const Index m = b.extent(0);
  const Index n = impl_->n;
  Eigen::MatrixXd rhs(n, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) rhs(i, j) = b[j * n + i];
  impl_->llt.solveInPlace(rhs);
  DenseTensor out({m, n});
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) out[j * n + i] = rhs(i, j);
  return out;
}

std::vector<double> DenseCholesky::factor_diagonal() const {
  const Index n = impl_->n;
  std::vector<double> d(static_cast<std::size_t>(n));
  Eigen::MatrixXd l = impl_->llt.matrixL();
  for (Index i = 0; i < n; ++i) d[static_cast<std::size_t>(i)] = l(i, i);
  return d;
}

EigenPairs sym_gen_eig(const CsrMatrix& a, const CsrMatrix& m, Index k, bool skip_null) {
  if (a.nrows() != a.ncols() || m.nrows() != m.ncols() || a.nrows() != m.nrows())
    throw std::invalid_argument("sym_gen_eig: A and M must be square and equal-sized");
  const Index n = a.nrows();
  if (k < 1 || k > n) throw std::invalid_argument("sym_gen_eig: k out of range");
  const double a_scale = std::max(1.0, max_abs(a.values(0)));
  if (a.symmetry_error(0) > 1e-10 * a_scale)
    throw std::invalid_argument("sym_gen_eig: A not symmetric");

  Eigen::MatrixXd ad = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd md = Eigen::MatrixXd::Zero(n, n);
  auto fill = [n](Eigen::MatrixXd& dst, const CsrMatrix& src) {
    const auto offs = src.row_offsets();
    const auto cols = src.col_indices();
    const auto vals = src.values(0);
    for (Index r = 0; r < n; ++r)
      for (Index p = offs[static_cast<std::size_t>(r)]; p < offs[static_cast<std::size_t>(r) + 1];
           ++p)
        dst(r, cols[static_cast<std::size_t>(p)]) = vals[static_cast<std::size_t>(p)];
  };
  fill(ad, a);
  fill(md, m);

  // Dense reduction: Cholesky of M, symmetric eigensolve, back-transform.
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(ad, md);
  if (ges.info() != Eigen::Success)
    throw std::runtime_error("sym_gen_eig: eigensolve failed (is M positive definite?)");

  const Eigen::VectorXd& evals = ges.eigenvalues();
  const Eigen::MatrixXd& evecs = ges.eigenvectors();

  Index start = 0;
  if (skip_null) {
    const double null_tol = 1e-10 * std::max(1.0, std::abs(evals(n - 1)));
    while (start < n && evals(start) <= null_tol) ++start;
  }
  if (start + k > n) throw std::invalid_argument("sym_gen_eig: k out of range after null skip");

  EigenPairs out;
  out.eigenvalues.resize(static_cast<std::size_t>(k));
  out.eigenvectors = DenseTensor({n, k});
  for (Index j = 0; j < k; ++j) {
    out.eigenvalues[static_cast<std::size_t>(j)] = evals(start + j);
    // Sign convention: largest-magnitude entry positive (first on ties).
    Index arg = 0;
    double best = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double mag = std::abs(evecs(i, start + j));
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    const double s = evecs(arg, start + j) < 0.0 ? -1.0 : 1.0;
    for (Index i = 0; i < n; ++i) out.eigenvectors[i * k + j] = s * evecs(i, start + j);
  }

  // Contract checks: M-orthonormality and per-pair residual in the M-norm.
  Eigen::MatrixXd f(n, k);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < k; ++j) f(i, j) = out.eigenvectors[i * k + j];
  const Eigen::MatrixXd gram = f.transpose() * md * f;
  const double ortho_err = (gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
  if (ortho_err > 1e-8)
    throw std::runtime_error("sym_gen_eig: eigenvectors lost M-orthonormality");
  for (Index j = 0; j < k; ++j) {
    const Eigen::VectorXd res =
        ad * f.col(j) - out.eigenvalues[static_cast<std::size_t>(j)] * (md * f.col(j));
    const double rnorm = std::sqrt(std::max(0.0, res.dot(md * res)));
    const double fnorm = std::sqrt(f.col(j).dot(md * f.col(j)));
    const double scale = std::max(1.0, std::abs(out.eigenvalues[static_cast<std::size_t>(j)]));
    if (rnorm > 1e-8 * scale * fnorm)
      throw std::runtime_error("sym_gen_eig: residual too large for pair " + std::to_string(j));
  }
  return out;
}

}  // namespace gfem
