#pragma once

#include <optional>
#include <vector>

#include "gammafem/flb.hpp"
#include "gammafem/rng.hpp"
#include "gammafem/system.hpp"

namespace gfem {

/// The differentiable map Gamma -> Phi: each channel's boundary datum xi_l is
/// passed through the fractional operator at order gamma_l, turned into a
/// compatibility-projected Neumann load, and solved against the shared
/// sigma == 1 stiffness under the mean-zero constraint. Only the loads depend
/// on Gamma, so one adjoint solve serves every channel's gradient.
class FeatureOperator {
 public:
  /// xi holds either one shared row broadcast over `channels`, or one row
  /// per channel.
  FeatureOperator(const LagrangeSpace& space, const BoundarySpace& boundary,
                  const SpectralBasis& basis, DenseTensor xi, Index channels,
                  SolverBackend backend = SolverBackend::Auto, CgOptions cg = {1e-12, 0, false});

  Index channels() const { return channels_; }
  const LagrangeSpace& space() const { return *space_; }
  const BoundarySpace& boundary() const { return *boundary_; }
  const SpectralBasis& basis() const { return *basis_; }
  const MeanZeroSolver& solver() const { return *solver_; }
  const CsrMatrix& stiffness() const { return k_; }
  std::span<const double> xi_row(Index l) const;

  /// gammas has length 1 (shared) or `channels`.
  double channel_gamma(std::span<const double> gammas, Index l) const;

  /// Neumann loads of the fractional boundary data: [channels, ndof].
  DenseTensor loads(std::span<const double> gammas) const;
  /// d(loads)/dgamma_l, row l: [channels, ndof].
  DenseTensor load_gamma_derivatives(std::span<const double> gammas) const;

  /// Phi = [channels, ndof], all channels solved as one multi-column system.
  DenseTensor forward(std::span<const double> gammas) const;

 private:
  void check_gammas(std::span<const double> gammas) const;

  const LagrangeSpace* space_;
  const BoundarySpace* boundary_;
  const SpectralBasis* basis_;
  DenseTensor xi_;  // [1 or L, n_bdof]
  Index channels_;
  CsrMatrix k_;
  std::unique_ptr<MeanZeroSolver> solver_;
};

struct AdamOptions {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Index max_iterations = 500;
  double gradient_tol = 1e-8;
};

struct GammaRecoveryProblem {
  const FeatureOperator* op = nullptr;
  std::vector<double> phi_target;   // target on the subdomain, full-length
  CsrMatrix subdomain_mass;         // M_d (zero outside the subdomain)
  AdamOptions optimizer;
  std::optional<std::vector<double>> true_gamma;  // for reporting only
};

/// Squared subdomain misfit of sum_l phi_l against the target, and its
/// adjoint gradient with respect to Gamma.
struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> gradient;  // same length as Gamma
};
LossAndGrad loss_and_grad(const GammaRecoveryProblem& problem, std::span<const double> gammas);

struct TrajectoryPoint {
  Index iteration = 0;
  std::vector<double> gammas;
  double loss = 0.0;
};

struct RecoveryResult {
  std::vector<TrajectoryPoint> trajectory;
  std::vector<double> gammas;
  double loss = 0.0;
  bool converged = false;  // gradient tolerance reached before max iterations
};

/// Adam descent from gamma0, recording the full trajectory. Aborts with a
/// diagnostic if the loss increases 50 iterations in a row.
RecoveryResult recover_gamma(const GammaRecoveryProblem& problem, std::span<const double> gamma0);

/// Max relative adjoint-vs-central-difference error over the components.
double fd_gradient_check(const GammaRecoveryProblem& problem, std::span<const double> gammas,
                         double step);

/// values <- values * (1 + delta * G), G i.i.d. standard normal.
void multiplicative_noise(std::span<double> values, double delta, Rng& rng);

}  // namespace gfem
