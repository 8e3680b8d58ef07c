#include "gammafem/feature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gammafem/forms.hpp"

namespace gfem {

FeatureOperator::FeatureOperator(const LagrangeSpace& space, const BoundarySpace& boundary,
                                 const SpectralBasis& basis, DenseTensor xi, Index channels,
                                 SolverBackend backend, CgOptions cg)
    : space_(&space), boundary_(&boundary), basis_(&basis), xi_(std::move(xi)),
      channels_(channels) {
  if (space.order() != 1 || space.mesh().dim != 2)
    throw std::invalid_argument("FeatureOperator: needs a 2D P1 space");
  if (xi_.rank() != 2 || xi_.extent(1) != boundary.n_bdof())
    throw std::invalid_argument("FeatureOperator: xi must be [1 or L, n_bdof]");
  if (xi_.extent(0) != 1 && xi_.extent(0) != channels)
    throw std::invalid_argument("FeatureOperator: xi row count must be 1 or channels");
  if (channels < 1) throw std::invalid_argument("FeatureOperator: need at least one channel");
  xi_.require_finite("FeatureOperator: xi");
  k_ = assemble_stiffness(space, 1.0);
  solver_ = std::make_unique<MeanZeroSolver>(k_, boundary_weights(space), backend, cg);
}

std::span<const double> FeatureOperator::xi_row(Index l) const {
  const Index nb = xi_.extent(1);
  const Index row = xi_.extent(0) == 1 ? 0 : l;
  return {xi_.data().data() + row * nb, static_cast<std::size_t>(nb)};
}

double FeatureOperator::channel_gamma(std::span<const double> gammas, Index l) const {
  return gammas.size() == 1 ? gammas[0] : gammas[static_cast<std::size_t>(l)];
}

void FeatureOperator::check_gammas(std::span<const double> gammas) const {
  if (gammas.size() != 1 && static_cast<Index>(gammas.size()) != channels_)
    throw std::invalid_argument("FeatureOperator: Gamma length must be 1 or channels");
  for (double g : gammas)
    if (!std::isfinite(g)) throw std::invalid_argument("FeatureOperator: non-finite gamma");
}

namespace {

DenseTensor assemble_fractional_loads(const FeatureOperator& op, std::span<const double> gammas,
                                      bool derivative) {
  const BoundarySpace& boundary = op.boundary();
  const Index l_count = op.channels();
  const Index ndof = op.space().ndof();
  DenseTensor loads({l_count, ndof});
  for (Index l = 0; l < l_count; ++l) {
    const double gamma = op.channel_gamma(gammas, l);
    auto zeta = derivative ? flb_gamma_derivative(op.basis(), op.xi_row(l), gamma)
                           : apply_flb(op.basis(), op.xi_row(l), gamma);
    boundary.project_mean_zero(zeta);
    std::span<double> row(loads.data().data() + l * ndof, static_cast<std::size_t>(ndof));
    boundary.scatter_channel_load(zeta, row);
  }
  return loads;
}

}  // namespace

DenseTensor FeatureOperator::loads(std::span<const double> gammas) const {
  check_gammas(gammas);
  return assemble_fractional_loads(*this, gammas, false);
}

DenseTensor FeatureOperator::load_gamma_derivatives(std::span<const double> gammas) const {
  check_gammas(gammas);
  return assemble_fractional_loads(*this, gammas, true);
}

DenseTensor FeatureOperator::forward(std::span<const double> gammas) const {
  check_gammas(gammas);
  return solver_->solve_rows(loads(gammas));
}

LossAndGrad loss_and_grad(const GammaRecoveryProblem& problem, std::span<const double> gammas) {
  const FeatureOperator& op = *problem.op;
  const Index n = op.space().ndof();
  const Index l_count = op.channels();
  if (static_cast<Index>(problem.phi_target.size()) != n)
    throw std::invalid_argument("loss_and_grad: target size mismatch");

  const DenseTensor phi = op.forward(gammas);
  std::vector<double> residual(static_cast<std::size_t>(n), 0.0);
  for (Index l = 0; l < l_count; ++l)
    for (Index i = 0; i < n; ++i) residual[static_cast<std::size_t>(i)] += phi[l * n + i];
  for (Index i = 0; i < n; ++i)
    residual[static_cast<std::size_t>(i)] -= problem.phi_target[static_cast<std::size_t>(i)];

  const auto m_r = problem.subdomain_mass.matvec(residual);
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) loss += residual[static_cast<std::size_t>(i)] * m_r[static_cast<std::size_t>(i)];

  // One adjoint solve serves all channels: K is gamma-independent.
  std::vector<double> adjoint_rhs(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) adjoint_rhs[static_cast<std::size_t>(i)] = 2.0 * m_r[static_cast<std::size_t>(i)];
  const auto p_hat = op.solver().solve(adjoint_rhs);

  const DenseTensor db = op.load_gamma_derivatives(gammas);
  std::vector<double> per_channel(static_cast<std::size_t>(l_count), 0.0);
  for (Index l = 0; l < l_count; ++l) {
    double g = 0.0;
    for (Index i = 0; i < n; ++i) g += p_hat[static_cast<std::size_t>(i)] * db[l * n + i];
    per_channel[static_cast<std::size_t>(l)] = g;
  }

  LossAndGrad out;
  out.loss = loss;
  if (gammas.size() == 1) {
    double total = 0.0;
    for (double g : per_channel) total += g;
    out.gradient = {total};
  } else {
    out.gradient = std::move(per_channel);
  }
  return out;
}

RecoveryResult recover_gamma(const GammaRecoveryProblem& problem, std::span<const double> gamma0) {
  for (double g : gamma0)
    if (!std::isfinite(g)) throw std::invalid_argument("recover_gamma: non-finite start");
  const AdamOptions& opts = problem.optimizer;
  const std::size_t dim = gamma0.size();

  RecoveryResult result;
  result.gammas.assign(gamma0.begin(), gamma0.end());
  std::vector<double> m(dim, 0.0), v(dim, 0.0);

  double previous_loss = std::numeric_limits<double>::infinity();
  Index rising = 0;

  for (Index iter = 1; iter <= opts.max_iterations; ++iter) {
    const auto lg = loss_and_grad(problem, result.gammas);
    result.loss = lg.loss;
    result.trajectory.push_back({iter - 1, result.gammas, lg.loss});

    if (lg.loss > previous_loss) {
      if (++rising >= 50)
        throw std::runtime_error("recover_gamma: loss increased 50 consecutive iterations");
    } else {
      rising = 0;
    }
    previous_loss = lg.loss;

    double gmax = 0.0;
    for (double g : lg.gradient) gmax = std::max(gmax, std::abs(g));
    if (gmax <= opts.gradient_tol) {
      result.converged = true;
      break;
    }

    const double t = static_cast<double>(iter);
    for (std::size_t i = 0; i < dim; ++i) {
      m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * lg.gradient[i];
      v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * lg.gradient[i] * lg.gradient[i];
      const double mhat = m[i] / (1.0 - std::pow(opts.beta1, t));
      const double vhat = v[i] / (1.0 - std::pow(opts.beta2, t));
      result.gammas[i] -= opts.learning_rate * mhat / (std::sqrt(vhat) + opts.epsilon);
    }
  }

  const auto final_lg = loss_and_grad(problem, result.gammas);
  result.loss = final_lg.loss;
  result.trajectory.push_back(
      {static_cast<Index>(result.trajectory.size()), result.gammas, final_lg.loss});
  return result;
}

double fd_gradient_check(const GammaRecoveryProblem& problem, std::span<const double> gammas,
                         double step) {
  if (!(step > 0.0)) throw std::invalid_argument("fd_gradient_check: step must be positive");
  const auto base = loss_and_grad(problem, gammas);
  double gscale = 0.0;
  for (double g : base.gradient) gscale = std::max(gscale, std::abs(g));

  double worst = 0.0;
  std::vector<double> probe(gammas.begin(), gammas.end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    probe[i] = gammas[i] + step;
    const double up = loss_and_grad(problem, probe).loss;
    probe[i] = gammas[i] - step;
    const double down = loss_and_grad(problem, probe).loss;
    probe[i] = gammas[i];
    const double fd = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(fd), std::abs(base.gradient[i]), 1e-12 * std::max(1.0, gscale)});
    worst = std::max(worst, std::abs(fd - base.gradient[i]) / denom);
  }
  return worst;
}

void multiplicative_noise(std::span<double> values, double delta, Rng& rng) {
  if (delta < 0.0) throw std::invalid_argument("multiplicative_noise: negative delta");
  for (double& v : values) v *= 1.0 + delta * rng.gaussian();
}

}  // namespace gfem
