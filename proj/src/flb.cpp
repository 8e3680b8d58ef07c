#include "gammafem/flb.hpp"

#include <cmath>
#include <stdexcept>

#include "gammafem/forms.hpp"
#include "gammafem/solvers.hpp"

namespace gfem {

SpectralBasis::SpectralBasis(const BoundarySpace& boundary, Index k0, Index refine_level)
    : boundary_(&boundary), k0_(k0), refine_level_(refine_level) {
  if (refine_level < 0) throw std::invalid_argument("SpectralBasis: negative refine level");

  SimplicialMesh curve = boundary.trace.curve;
  for (Index level = 0; level < refine_level; ++level) {
    level_cells_.push_back(curve.cells);
    level_nodes_.push_back(curve.num_nodes());
    curve = uniform_refine(curve, 1);
  }
  fine_curve_ = std::move(curve);

  if (k0 < 1 || k0 >= fine_curve_.num_nodes())
    throw std::invalid_argument("SpectralBasis: truncation out of range");

  const LagrangeSpace fine_space(fine_curve_, 1);
  const CsrMatrix a = assemble_stiffness(fine_space, 1.0);
  fine_mass_ = assemble_mass(fine_space, MassDomain::Full);

  auto pairs = sym_gen_eig(a, fine_mass_, k0, /*skip_null=*/true);
  eigenvalues_ = std::move(pairs.eigenvalues);
  eigenvectors_ = std::move(pairs.eigenvectors);
  if (eigenvalues_.front() <= 1e-10)
    throw std::runtime_error("SpectralBasis: null mode survived the skip");
}

SpectralBasis build_spectral_basis(const BoundarySpace& boundary, Index k0, Index refine_level) {
  return SpectralBasis(boundary, k0, refine_level);
}

std::vector<double> SpectralBasis::prolong(std::span<const double> u) const {
  if (static_cast<Index>(u.size()) != coarse_size())
    throw std::invalid_argument("SpectralBasis::prolong: expected coarse-sized input");
  std::vector<double> v(u.begin(), u.end());
  for (std::size_t level = 0; level < level_cells_.size(); ++level) {
    const auto& cells = level_cells_[level];
    const Index nv = level_nodes_[level];
    const Index nc = static_cast<Index>(cells.size()) / 2;
    v.resize(static_cast<std::size_t>(nv + nc));
    for (Index c = 0; c < nc; ++c)
      v[static_cast<std::size_t>(nv + c)] =
          0.5 * (v[static_cast<std::size_t>(cells[static_cast<std::size_t>(2 * c)])] +
                 v[static_cast<std::size_t>(cells[static_cast<std::size_t>(2 * c + 1)])]);
  }
  return v;
}

std::vector<double> SpectralBasis::restrict_to_coarse(std::span<const double> u) const {
  if (static_cast<Index>(u.size()) != fine_size())
    throw std::invalid_argument("SpectralBasis::restrict_to_coarse: expected fine-sized input");
  return {u.begin(), u.begin() + static_cast<std::ptrdiff_t>(coarse_size())};
}

std::vector<double> SpectralBasis::expand(std::span<const double> u) const {
  std::vector<double> fine;
  if (static_cast<Index>(u.size()) == coarse_size() && coarse_size() != fine_size()) {
    fine = prolong(u);
  } else if (static_cast<Index>(u.size()) == fine_size()) {
    fine.assign(u.begin(), u.end());
  } else {
    throw std::invalid_argument("SpectralBasis::expand: size matches neither level");
  }
  const auto mu = fine_mass_.matvec(fine);
  std::vector<double> alpha(static_cast<std::size_t>(k0_), 0.0);
  const Index n = fine_size();
  for (Index i = 0; i < n; ++i) {
    const double m = mu[static_cast<std::size_t>(i)];
    for (Index k = 0; k < k0_; ++k)
      alpha[static_cast<std::size_t>(k)] += eigenvectors_[i * k0_ + k] * m;
  }
  return alpha;
}

std::vector<double> SpectralBasis::synthesize_fine(std::span<const double> coefficients) const {
  if (static_cast<Index>(coefficients.size()) != k0_)
    throw std::invalid_argument("SpectralBasis::synthesize_fine: coefficient size mismatch");
  const Index n = fine_size();
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  for (Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Index k = 0; k < k0_; ++k)
      acc += eigenvectors_[i * k0_ + k] * coefficients[static_cast<std::size_t>(k)];
    v[static_cast<std::size_t>(i)] = acc;
  }
  return v;
}

namespace {

std::vector<double> weighted_synthesis(const SpectralBasis& basis, std::span<const double> u,
                                       double gamma, bool log_weight) {
  auto alpha = basis.expand(u);
  const auto& lambda = basis.eigenvalues();
  for (Index k = 0; k < basis.k0(); ++k) {
    const double l = lambda[static_cast<std::size_t>(k)];
    double w = std::pow(l, gamma);
    if (log_weight) w *= std::log(l);
    alpha[static_cast<std::size_t>(k)] *= w;
  }
  return basis.synthesize_fine(alpha);
}

}  // namespace

std::vector<double> apply_flb(const SpectralBasis& basis, std::span<const double> u, double gamma) {
  return basis.restrict_to_coarse(weighted_synthesis(basis, u, gamma, false));
}

std::vector<double> apply_flb_fine(const SpectralBasis& basis, std::span<const double> u,
                                   double gamma) {
  return weighted_synthesis(basis, u, gamma, false);
}

std::vector<double> flb_gamma_derivative(const SpectralBasis& basis, std::span<const double> u,
                                         double gamma) {
  return basis.restrict_to_coarse(weighted_synthesis(basis, u, gamma, true));
}

double h_gamma_seminorm_of_coefficients(const SpectralBasis& basis, std::span<const double> alpha,
                                        double gamma) {
  const auto& lambda = basis.eigenvalues();
  double acc = 0.0;
  for (Index k = 0; k < basis.k0(); ++k) {
    const double w = std::pow(lambda[static_cast<std::size_t>(k)], 2.0 * gamma);
    acc += w * alpha[static_cast<std::size_t>(k)] * alpha[static_cast<std::size_t>(k)];
  }
  return std::sqrt(acc);
}

double h_gamma_seminorm(const SpectralBasis& basis, std::span<const double> u, double gamma) {
  const auto alpha = basis.expand(u);
  return h_gamma_seminorm_of_coefficients(basis, alpha, gamma);
}

std::vector<double> spectrum(const SpectralBasis& basis, std::span<const double> u) {
  auto alpha = basis.expand(u);
  for (double& a : alpha) a *= a;
  return alpha;
}

std::vector<double> smooth_field(const SpectralBasis& basis, std::span<const double> v,
                                 double order) {
  return apply_flb(basis, v, order);
}

}  // namespace gfem
