#pragma once

#include <memory>
#include <vector>

#include "gammafem/space.hpp"
#include "gammafem/sparse.hpp"

namespace gfem {

/// Spectral basis of the Laplace-Beltrami operator on the closed boundary
/// curve. Eigenpairs are computed on a uniformly refined copy of the curve
/// (refinement sharpens the high eigenvalues); the original boundary nodes
/// are a prefix of the refined nodes, so restriction is index injection and
/// prolongation is per-level midpoint interpolation.
class SpectralBasis {
 public:
  SpectralBasis(const BoundarySpace& boundary, Index k0, Index refine_level);

  Index k0() const { return k0_; }
  Index refine_level() const { return refine_level_; }
  Index coarse_size() const { return boundary_->n_bdof(); }
  Index fine_size() const { return fine_curve_.num_nodes(); }
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }
  const DenseTensor& eigenvectors() const { return eigenvectors_; }  // [n_fine, K0]
  const CsrMatrix& fine_mass() const { return fine_mass_; }
  const BoundarySpace& boundary() const { return *boundary_; }
  const SimplicialMesh& fine_curve() const { return fine_curve_; }

  /// Coarse nodal values -> fine nodal values (P1 interpolation per level).
  std::vector<double> prolong(std::span<const double> u) const;
  /// Fine -> coarse by prefix injection.
  std::vector<double> restrict_to_coarse(std::span<const double> u) const;

  /// Spectral coefficients alpha_k = psi_k^T M u. Accepts coarse-sized
  /// input (prolonged first) or fine-sized input.
  std::vector<double> expand(std::span<const double> u) const;

  /// Fine-level synthesis sum_k c_k psi_k.
  std::vector<double> synthesize_fine(std::span<const double> coefficients) const;

 private:
  const BoundarySpace* boundary_;
  SimplicialMesh fine_curve_;
  Index k0_ = 0;
  Index refine_level_ = 0;
  std::vector<double> eigenvalues_;
  DenseTensor eigenvectors_;
  CsrMatrix fine_mass_;
  // Cells of each level before refinement, for midpoint prolongation.
  std::vector<std::vector<Index>> level_cells_;
  std::vector<Index> level_nodes_;
};

SpectralBasis build_spectral_basis(const BoundarySpace& boundary, Index k0,
                                   Index refine_level = 2);

/// Truncated fractional operator sum_k alpha_k lambda_k^gamma psi_k,
/// restricted to the original boundary nodes. gamma may be negative;
/// gamma == 0 projects onto the retained span.
std::vector<double> apply_flb(const SpectralBasis& basis, std::span<const double> u, double gamma);

/// Same operator without the final restriction (fine-level output). On the
/// fine level the matrix identities are exact: applying orders a then b
/// equals order a+b to rounding.
std::vector<double> apply_flb_fine(const SpectralBasis& basis, std::span<const double> u,
                                   double gamma);

/// d/dgamma of apply_flb: sum_k alpha_k lambda_k^gamma log(lambda_k) psi_k.
std::vector<double> flb_gamma_derivative(const SpectralBasis& basis, std::span<const double> u,
                                         double gamma);

/// Spectral seminorm (sum_k lambda_k^{2 gamma} alpha_k^2)^{1/2} over the
/// retained (nonzero) modes.
double h_gamma_seminorm(const SpectralBasis& basis, std::span<const double> u, double gamma);
double h_gamma_seminorm_of_coefficients(const SpectralBasis& basis,
                                        std::span<const double> alpha, double gamma);

/// Per-mode energies E_k = alpha_k^2.
std::vector<double> spectrum(const SpectralBasis& basis, std::span<const double> u);

/// Fractional smoothing alias used for noise shaping (order -0.75).
std::vector<double> smooth_field(const SpectralBasis& basis, std::span<const double> v,
                                 double order);

}  // namespace gfem
