#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>

#include "gammafem/rng.hpp"
#include "gammafem/solvers.hpp"
#include "gammafem/sparse.hpp"
#include "gammafem/tensor.hpp"

using namespace gfem;

namespace {

// Independent contraction oracle: enumerate every assignment of every letter
// and accumulate products into a map keyed by the output multi-index.
DenseTensor contract_oracle(const std::string& spec,
                            const std::vector<const DenseTensor*>& ops) {
  const auto arrow = spec.find("->");
  const std::string out_sub = spec.substr(arrow + 2);
  std::vector<std::string> subs;
  {
    std::string cur;
    for (char ch : spec.substr(0, arrow)) {
      if (ch == ',') {
        subs.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    subs.push_back(cur);
  }
  std::map<char, Index> extent;
  for (std::size_t i = 0; i < subs.size(); ++i)
    for (std::size_t a = 0; a < subs[i].size(); ++a)
      extent[subs[i][a]] = ops[i]->extent(static_cast<Index>(a));

  std::vector<char> letters;
  for (const auto& [l, e] : extent) letters.push_back(l);

  std::vector<Index> out_shape;
  for (char l : out_sub) out_shape.push_back(extent[l]);
  DenseTensor result(out_shape);

  std::map<char, Index> assign;
  std::function<void(std::size_t)> walk = [&](std::size_t li) {
    if (li == letters.size()) {
      double prod = 1.0;
      for (std::size_t i = 0; i < subs.size(); ++i) {
        Index flat = 0;
        const auto strides = ops[i]->strides();
        for (std::size_t a = 0; a < subs[i].size(); ++a)
          flat += assign[subs[i][a]] * strides[a];
        prod *= (*ops[i])[flat];
      }
      Index oflat = 0;
      const auto ostrides = result.strides();
      for (std::size_t a = 0; a < out_sub.size(); ++a)
        oflat += assign[out_sub[a]] * ostrides[a];
      result[oflat] += prod;
      return;
    }
    for (Index v = 0; v < extent[letters[li]]; ++v) {
      assign[letters[li]] = v;
      walk(li + 1);
    }
  };
  walk(0);
  return result;
}

DenseTensor random_tensor(Rng& rng, std::vector<Index> shape) {
  DenseTensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

CsrMatrix poisson_1d(Index n) {
  CooMatrix coo;
  coo.nrows = n;
  coo.ncols = n;
  for (Index i = 0; i < n; ++i) {
    coo.push(i, i, 2.0);
    if (i > 0) coo.push(i, i - 1, -1.0);
    if (i + 1 < n) coo.push(i, i + 1, -1.0);
  }
  return coo_to_csr(coo);
}

}  // namespace

TEST_CASE("contract: identity matmul leaves the matrix unchanged") {
  DenseTensor a({2, 2}, {1, 2, 3, 4});
  DenseTensor id({2, 2}, {1, 0, 0, 1});
  const auto c = contract("ij,jk->ik", a, id);
  for (Index i = 0; i < 4; ++i) CHECK(c[i] == doctest::Approx(a[i]).epsilon(1e-15));
}

TEST_CASE("contract: dot product") {
  DenseTensor x({3}, {1, 2, 3});
  DenseTensor y({3}, {4, 5, 6});
  const auto c = contract("i,i->", x, y);
  CHECK(c.size() == 1);
  CHECK(c[0] == doctest::Approx(32.0));
}

TEST_CASE("contract: shape-gradient contraction has shape [N,Q,K,D]") {
  const Index q = 3, k = 4, d = 2, n = 5;
  Rng rng(7);
  const auto f = random_tensor(rng, {q, k, d + 1});
  const auto j = random_tensor(rng, {n, d + 1, d});
  const auto phi = contract("qkb,nbd->nqkd", f, j);
  REQUIRE(phi.shape() == std::vector<Index>({n, q, k, d}));
  const auto oracle = contract_oracle("qkb,nbd->nqkd", {&f, &j});
  for (Index i = 0; i < phi.size(); ++i) CHECK(phi[i] == doctest::Approx(oracle[i]).epsilon(1e-13));
}

TEST_CASE("contract: agrees with the brute-force oracle on random specs") {
  Rng rng(11);
  const std::vector<std::string> specs = {
      "ab,bc->ac", "abc,cd->abd", "ab,ab->", "abcd->bd", "a,ab,b->", "ii->", "ij,j->i",
      "abc,bd,d->ac"};
  for (const auto& spec : specs) {
    // Parse extents from the spec with random small sizes.
    std::map<char, Index> extent;
    const auto arrow = spec.find("->");
    std::vector<std::string> subs;
    std::string cur;
    for (char ch : spec.substr(0, arrow)) {
      if (ch == ',') {
        subs.push_back(cur);
        cur.clear();
      } else
        cur.push_back(ch);
    }
    subs.push_back(cur);
    for (const auto& sub : subs)
      for (char l : sub)
        if (!extent.count(l)) extent[l] = 2 + static_cast<Index>(rng.next_u64() % 4);
    std::vector<DenseTensor> store;
    for (const auto& sub : subs) {
      std::vector<Index> shape;
      for (char l : sub) shape.push_back(extent[l]);
      store.push_back(random_tensor(rng, shape));
    }
    std::vector<const DenseTensor*> ops;
    for (const auto& t : store) ops.push_back(&t);
    const auto got = contract(spec, ops);
    const auto want = contract_oracle(spec, ops);
    REQUIRE(got.shape() == want.shape());
    for (Index i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("contract: multilinearity in each operand") {
  Rng rng(13);
  const auto a = random_tensor(rng, {3, 4});
  const auto b = random_tensor(rng, {4, 2});
  DenseTensor b2 = b;
  for (Index i = 0; i < b2.size(); ++i) b2[i] *= -2.5;
  const auto ab = contract("ij,jk->ik", a, b);
  const auto ab2 = contract("ij,jk->ik", a, b2);
  for (Index i = 0; i < ab.size(); ++i)
    CHECK(ab2[i] == doctest::Approx(-2.5 * ab[i]).epsilon(1e-13));
}

TEST_CASE("contract: errors on malformed specs") {
  DenseTensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  DenseTensor b({2, 2}, {1, 0, 0, 1});
  CHECK_THROWS(contract("ij,jk->ik", a, b));   // j extent mismatch (3 vs 2)
  CHECK_THROWS(contract("ij->iz", a));         // unknown output letter
  CHECK_THROWS(contract("ij->ii", a));         // repeated output letter
  CHECK_THROWS(contract("ij,ij", a, a));       // missing arrow
}

TEST_CASE("coo_to_csr: duplicates are summed") {
  CooMatrix coo;
  coo.nrows = 2;
  coo.ncols = 2;
  coo.push(0, 0, 1.0);
  coo.push(0, 0, 2.0);
  const auto csr = coo_to_csr(coo);
  CHECK(csr.nnz() == 1);
  CHECK(csr.value_at(0, 0) == doctest::Approx(3.0));
}

TEST_CASE("coo_to_csr: matvec round-trips against the dense oracle") {
  Rng rng(17);
  CooMatrix coo;
  coo.nrows = 2;
  coo.ncols = 2;
  double dense[2][2] = {};
  for (Index r = 0; r < 2; ++r)
    for (Index c = 0; c < 2; ++c) {
      const double v = rng.uniform(-1, 1);
      dense[r][c] = v;
      coo.push(r, c, v);
    }
  const auto csr = coo_to_csr(coo);
  const std::vector<double> x = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  const auto y = csr.matvec(x);
  for (Index r = 0; r < 2; ++r)
    CHECK(y[r] == doctest::Approx(dense[r][0] * x[0] + dense[r][1] * x[1]).epsilon(1e-14));
}

TEST_CASE("coo_to_csr: local blocks scattered by a DoF map match dense assembly") {
  // Two 'elements' with K=3 local DoFs sharing two global DoFs.
  const Index dofs[2][3] = {{0, 1, 3}, {0, 3, 2}};
  Rng rng(19);
  double local[2][3][3];
  for (auto& e : local)
    for (auto& r : e)
      for (auto& v : r) v = rng.uniform(-1, 1);

  double dense[4][4] = {};
  CooMatrix coo;
  coo.nrows = 4;
  coo.ncols = 4;
  for (Index e = 0; e < 2; ++e)
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 3; ++j) {
        dense[dofs[e][i]][dofs[e][j]] += local[e][i][j];
        coo.push(dofs[e][i], dofs[e][j], local[e][i][j]);
      }
  const auto csr = coo_to_csr(coo);
  for (Index r = 0; r < 4; ++r)
    for (Index c = 0; c < 4; ++c)
      CHECK(csr.value_at(r, c) == doctest::Approx(dense[r][c]).epsilon(1e-14));
}

TEST_CASE("coo_to_csr: independent of triplet order") {
  Rng rng(23);
  CooMatrix coo;
  coo.nrows = 6;
  coo.ncols = 6;
  for (Index t = 0; t < 40; ++t)
    coo.push(static_cast<Index>(rng.next_u64() % 6), static_cast<Index>(rng.next_u64() % 6),
             rng.uniform(-1, 1));
  const auto base = coo_to_csr(coo);

  std::vector<Index> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  for (int rep = 0; rep < 5; ++rep) {
    // Fisher-Yates with the deterministic rng.
    for (Index i = 39; i > 0; --i)
      std::swap(perm[i], perm[static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(i + 1))]);
    CooMatrix shuffled;
    shuffled.nrows = 6;
    shuffled.ncols = 6;
    for (Index i = 0; i < 40; ++i)
      shuffled.push(coo.rows[perm[i]], coo.cols[perm[i]], coo.values[perm[i]]);
    const auto got = coo_to_csr(shuffled);
    REQUIRE(got.nnz() == base.nnz());
    for (Index i = 0; i < got.nnz(); ++i) {
      CHECK(got.col_indices()[i] == base.col_indices()[i]);
      CHECK(got.values(0)[i] == base.values(0)[i]);  // bitwise
    }
  }
}

TEST_CASE("cg_solve: identity converges in one iteration") {
  CooMatrix coo;
  coo.nrows = 5;
  coo.ncols = 5;
  for (Index i = 0; i < 5; ++i) coo.push(i, i, 1.0);
  const auto a = coo_to_csr(coo);
  const CsrOperator op(a);
  std::vector<double> b = {1, -2, 3, -4, 5}, x(5, 0.0);
  const auto rep = cg_solve(op, b, x);
  CHECK(rep.converged);
  CHECK(rep.iterations == 1);
  for (Index i = 0; i < 5; ++i) CHECK(x[i] == doctest::Approx(b[i]).epsilon(1e-14));
}

TEST_CASE("cg_solve: 1D Poisson matches the dense direct oracle") {
  const Index n = 8;
  const auto a = poisson_1d(n);
  const CsrOperator op(a);
  std::vector<double> b(n, 1.0), x(n, 0.0);
  const auto rep = cg_solve(op, b, x, {1e-12, 0, false});
  CHECK(rep.converged);

  Eigen::MatrixXd ad = Eigen::MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    ad(i, i) = 2.0;
    if (i > 0) ad(i, i - 1) = -1.0;
    if (i + 1 < n) ad(i, i + 1) = -1.0;
  }
  const Eigen::VectorXd want = ad.ldlt().solve(Eigen::VectorXd::Ones(n));
  for (Index i = 0; i < n; ++i) CHECK(x[i] == doctest::Approx(want(i)).epsilon(1e-10));
}

TEST_CASE("cg_solve_multi: batched columns equal looped single solves") {
  const Index n = 40, l_count = 10;
  const auto a = poisson_1d(n);
  const CsrOperator op(a);
  Rng rng(29);
  DenseTensor b({l_count, n});
  for (Index i = 0; i < b.size(); ++i) b[i] = rng.uniform(-1, 1);

  DenseTensor x;
  const auto reps = cg_solve_multi(op, b, x);
  for (const auto& r : reps) CHECK(r.converged);

  for (Index l = 0; l < l_count; ++l) {
    std::vector<double> bl(b.data().begin() + l * n, b.data().begin() + (l + 1) * n);
    std::vector<double> xl(n, 0.0);
    const auto rep = cg_solve(op, bl, xl);
    CHECK(rep.iterations == reps[l].iterations);
    for (Index i = 0; i < n; ++i) {
      CHECK(std::abs(x[l * n + i] - xl[i]) <= 1e-12);
      CHECK(x[l * n + i] == xl[i]);  // bitwise: same arithmetic per column
    }
  }
}

TEST_CASE("cg_solve: reported residual is the actual residual") {
  const Index n = 30;
  const auto a = poisson_1d(n);
  const CsrOperator op(a);
  Rng rng(31);
  std::vector<double> b(n), x(n, 0.0);
  for (auto& v : b) v = rng.uniform(-1, 1);
  const auto rep = cg_solve(op, b, x, {1e-8, 0, false});
  std::vector<double> ax(n);
  op.apply(x, ax);
  double rr = 0.0, bb = 0.0;
  for (Index i = 0; i < n; ++i) {
    rr += (b[i] - ax[i]) * (b[i] - ax[i]);
    bb += b[i] * b[i];
  }
  CHECK(std::sqrt(rr / bb) == doctest::Approx(rep.relative_residual).epsilon(1e-10));
  CHECK(rep.relative_residual <= 1e-8);
}

TEST_CASE("cg_solve: non-symmetric matrices are rejected") {
  CooMatrix coo;
  coo.nrows = 2;
  coo.ncols = 2;
  coo.push(0, 0, 1.0);
  coo.push(0, 1, 0.5);
  coo.push(1, 1, 1.0);
  const auto a = coo_to_csr(coo);
  CHECK_THROWS(CsrOperator(a));
}

TEST_CASE("DenseCholesky: 4*I has factor diagonal 2") {
  DenseTensor a({3, 3});
  for (Index i = 0; i < 3; ++i) a.at({i, i}) = 4.0;
  const DenseCholesky f(a);
  for (double d : f.factor_diagonal()) CHECK(d == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("DenseCholesky: agrees with CG on a random SPD matrix") {
  const Index n = 10;
  Rng rng(37);
  Eigen::MatrixXd g(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) g(i, j) = rng.uniform(-1, 1);
  const Eigen::MatrixXd spd = g * g.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);

  DenseTensor a({n, n});
  CooMatrix coo;
  coo.nrows = n;
  coo.ncols = n;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      a.at({i, j}) = spd(i, j);
      coo.push(i, j, spd(i, j));
    }
  const DenseCholesky f(a);
  const auto csr = coo_to_csr(coo);
  const CsrOperator op(csr);

  std::vector<double> b(n), xcg(n, 0.0);
  for (auto& v : b) v = rng.uniform(-1, 1);
  const auto xch = f.solve(b);
  const auto rep = cg_solve(op, b, xcg, {1e-13, 0, false});
  CHECK(rep.converged);
  for (Index i = 0; i < n; ++i) CHECK(std::abs(xch[i] - xcg[i]) <= 1e-9);
}

TEST_CASE("DenseCholesky: repeated solves with one factor are bit-stable") {
  DenseTensor a({2, 2}, {4.0, 1.0, 1.0, 3.0});
  const DenseCholesky f(a);
  const std::vector<double> b = {1.0, 2.0};
  const auto first = f.solve(b);
  for (int i = 0; i < 100; ++i) {
    const auto again = f.solve(b);
    CHECK(again[0] == first[0]);
    CHECK(again[1] == first[1]);
  }
  const DenseCholesky fresh(a);
  const auto other = fresh.solve(b);
  CHECK(other[0] == first[0]);
  CHECK(other[1] == first[1]);
}

TEST_CASE("DenseCholesky: rejects non-SPD input") {
  DenseTensor a({2, 2}, {1.0, 2.0, 2.0, 1.0});  // eigenvalues 3, -1
  CHECK_THROWS(DenseCholesky(a));
}

TEST_CASE("sym_gen_eig: A = M = I gives unit eigenvalues and orthonormal vectors") {
  CooMatrix coo;
  coo.nrows = 6;
  coo.ncols = 6;
  for (Index i = 0; i < 6; ++i) coo.push(i, i, 1.0);
  const auto id = coo_to_csr(coo);
  const auto pairs = sym_gen_eig(id, id, 4, false);
  for (double l : pairs.eigenvalues) CHECK(l == doctest::Approx(1.0).epsilon(1e-12));
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) {
      double dot = 0.0;
      for (Index r = 0; r < 6; ++r)
        dot += pairs.eigenvectors[r * 4 + i] * pairs.eigenvectors[r * 4 + j];
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10));
    }
}

TEST_CASE("sym_gen_eig: periodic P1 spectrum on a perimeter-8 circulant") {
  // Uniform closed P1 mesh of perimeter 8: stiffness and consistent mass are
  // circulant; the analytic operator eigenvalues are (pi k / 4)^2, twofold.
  const Index nb = 256;
  const double h = 8.0 / static_cast<double>(nb);
  CooMatrix ka, ma;
  ka.nrows = ka.ncols = nb;
  ma.nrows = ma.ncols = nb;
  for (Index i = 0; i < nb; ++i) {
    const Index j = (i + 1) % nb;
    ka.push(i, i, 2.0 / h);
    ka.push(i, j, -1.0 / h);
    ka.push(j, i, -1.0 / h);
    ma.push(i, i, 2.0 * h / 3.0);
    ma.push(i, j, h / 6.0);
    ma.push(j, i, h / 6.0);
  }
  const auto a = coo_to_csr(ka);
  const auto m = coo_to_csr(ma);
  const auto pairs = sym_gen_eig(a, m, 16, true);

  for (Index k = 1; k <= 16; ++k) {
    const double exact = std::pow(std::numbers::pi * std::ceil(k / 2.0) / 4.0, 2);
    const double got = pairs.eigenvalues[k - 1];
    CHECK(std::abs(got - exact) / exact <= 1e-2);
  }

  // F^T M F = I to 1e-8.
  const Index kk = 16;
  for (Index i = 0; i < kk; ++i)
    for (Index j = i; j < kk; ++j) {
      std::vector<double> fj(nb);
      for (Index r = 0; r < nb; ++r) fj[r] = pairs.eigenvectors[r * kk + j];
      const auto mfj = m.matvec(fj);
      double dot = 0.0;
      for (Index r = 0; r < nb; ++r) dot += pairs.eigenvectors[r * kk + i] * mfj[r];
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) <= 1e-8);
    }
}

TEST_CASE("sym_gen_eig: rejects k out of range and non-SPD mass") {
  CooMatrix coo;
  coo.nrows = 3;
  coo.ncols = 3;
  for (Index i = 0; i < 3; ++i) coo.push(i, i, 1.0);
  const auto id = coo_to_csr(coo);
  CHECK_THROWS(sym_gen_eig(id, id, 4, false));
  CHECK_THROWS(sym_gen_eig(id, id, 0, false));

  CooMatrix bad;
  bad.nrows = 3;
  bad.ncols = 3;
  bad.push(0, 0, -1.0);
  bad.push(1, 1, 1.0);
  bad.push(2, 2, 1.0);
  CHECK_THROWS(sym_gen_eig(id, coo_to_csr(bad), 2, false));
}
