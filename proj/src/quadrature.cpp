#include "gammafem/quadrature.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace gfem {

namespace {

// Nodes/weights for int_0^1 g(t) (1-t)^alpha dt via Golub-Welsch on the
// monic Jacobi recurrence (beta = 0).
void gauss_jacobi_01(Index m, Index alpha, std::vector<double>& nodes,
                     std::vector<double>& weights) {
  if (m < 1 || m > 64) throw std::invalid_argument("gauss_jacobi_01: bad point count");
  const double a = static_cast<double>(alpha);
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(m, m);
  jac(0, 0) = -a / (a + 2.0);
  for (Index kk = 1; kk < m; ++kk) {
    const double k = static_cast<double>(kk);
    jac(kk, kk) = -(a * a) / ((2.0 * k + a) * (2.0 * k + a + 2.0));
    const double bk = 4.0 * k * k * (k + a) * (k + a) /
                      ((2.0 * k + a) * (2.0 * k + a) * (2.0 * k + a + 1.0) * (2.0 * k + a - 1.0));
    const double off = std::sqrt(bk);
    jac(kk, kk - 1) = off;
    jac(kk - 1, kk) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  if (es.info() != Eigen::Success) throw std::runtime_error("gauss_jacobi_01: eigensolve failed");

  // mu0 = int_{-1}^{1} (1-x)^alpha dx; the [0,1] transform divides by 2^{a+1}.
  const double mu0 = std::pow(2.0, a + 1.0) / (a + 1.0);
  nodes.resize(static_cast<std::size_t>(m));
  weights.resize(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    nodes[static_cast<std::size_t>(i)] = 0.5 * (es.eigenvalues()(i) + 1.0);
    const double v0 = es.eigenvectors()(0, i);
    weights[static_cast<std::size_t>(i)] = mu0 * v0 * v0 / std::pow(2.0, a + 1.0);
  }
}

}  // namespace

void gauss_legendre_01(Index m, std::vector<double>& nodes, std::vector<double>& weights) {
  gauss_jacobi_01(m, 0, nodes, weights);
}

QuadratureRule simplex_quadrature(Index dim, Index degree) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("simplex_quadrature: dim must be 1..3");
  if (degree < 0) throw std::invalid_argument("simplex_quadrature: negative degree");
  const Index m = degree / 2 + 1;  // Gauss lines are exact to 2m-1 >= degree

  std::vector<double> t1, w1, t2, w2, t3, w3;
  gauss_jacobi_01(m, 0, t1, w1);
  if (dim >= 2) gauss_jacobi_01(m, 1, t2, w2);
  if (dim >= 3) gauss_jacobi_01(m, 2, t3, w3);

  QuadratureRule rule;
  rule.dim = dim;
  rule.degree = 2 * m - 1;

  if (dim == 1) {
    rule.points = DenseTensor({m, 2});
    rule.weights.resize(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
      rule.points.at({i, 0}) = 1.0 - t1[static_cast<std::size_t>(i)];
      rule.points.at({i, 1}) = t1[static_cast<std::size_t>(i)];
      rule.weights[static_cast<std::size_t>(i)] = w1[static_cast<std::size_t>(i)];
    }
    return rule;
  }

  if (dim == 2) {
    const Index q = m * m;
    rule.points = DenseTensor({q, 3});
    rule.weights.resize(static_cast<std::size_t>(q));
    Index idx = 0;
    for (Index j = 0; j < m; ++j) {
      for (Index i = 0; i < m; ++i, ++idx) {
        const double eta = t2[static_cast<std::size_t>(j)];
        const double xi = t1[static_cast<std::size_t>(i)];
        const double x = xi * (1.0 - eta);
        const double y = eta;
        rule.points.at({idx, 0}) = 1.0 - x - y;
        rule.points.at({idx, 1}) = x;
        rule.points.at({idx, 2}) = y;
        // The collapsed-square Jacobian lives in the Jacobi weight; reference
        // area is 1/2, so scale by 2 to make weights sum to 1.
        rule.weights[static_cast<std::size_t>(idx)] =
            2.0 * w1[static_cast<std::size_t>(i)] * w2[static_cast<std::size_t>(j)];
      }
    }
    return rule;
  }

  const Index q = m * m * m;
  rule.points = DenseTensor({q, 4});
  rule.weights.resize(static_cast<std::size_t>(q));
  Index idx = 0;
  for (Index k = 0; k < m; ++k) {
    for (Index j = 0; j < m; ++j) {
      for (Index i = 0; i < m; ++i, ++idx) {
        const double zeta = t3[static_cast<std::size_t>(k)];
        const double eta = t2[static_cast<std::size_t>(j)];
        const double xi = t1[static_cast<std::size_t>(i)];
        const double x = xi * (1.0 - eta) * (1.0 - zeta);
        const double y = eta * (1.0 - zeta);
        const double z = zeta;
        rule.points.at({idx, 0}) = 1.0 - x - y - z;
        rule.points.at({idx, 1}) = x;
        rule.points.at({idx, 2}) = y;
        rule.points.at({idx, 3}) = z;
        rule.weights[static_cast<std::size_t>(idx)] = 6.0 * w1[static_cast<std::size_t>(i)] *
                                                      w2[static_cast<std::size_t>(j)] *
                                                      w3[static_cast<std::size_t>(k)];
      }
    }
  }
  return rule;
}

}  // namespace gfem
