#include "gammafem/system.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <stdexcept>

namespace gfem {

namespace {

constexpr Index kDenseFactorLimit = 5000;

double vec_sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

double vec_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

MeanZeroSolver::MeanZeroSolver(const CsrMatrix& k, std::vector<double> w, SolverBackend backend,
                               CgOptions cg)
    : k_(&k), w_(std::move(w)), cg_(cg) {
  if (k.nrows() != k.ncols() || static_cast<Index>(w_.size()) != k.nrows())
    throw std::invalid_argument("MeanZeroSolver: size mismatch");
  w_dot_one_ = vec_sum(w_);
  if (!(std::abs(w_dot_one_) > 0.0))
    throw std::invalid_argument("MeanZeroSolver: boundary weights sum to zero");

  double trace = 0.0;
  for (Index i = 0; i < k.nrows(); ++i) trace += k.value_at(i, i);
  double ww = 0.0;
  for (double x : w_) ww += x * x;
  alpha_ = (trace / static_cast<double>(k.nrows())) / ww;

  const bool dense = backend == SolverBackend::DenseFactor ||
                     (backend == SolverBackend::Auto && k.nrows() <= kDenseFactorLimit);
  if (dense) {
    factor_ = std::make_unique<DenseCholesky>(k, w_, alpha_);
    ++factorizations_;
  } else {
    op_ = std::make_unique<RankOneAugmentedOperator>(k, w_, alpha_);
  }
}

void MeanZeroSolver::eliminate_multiplier(std::span<double> b) const {
  const double mu = vec_sum(b) / w_dot_one_;
  for (std::size_t i = 0; i < b.size(); ++i) b[i] -= mu * w_[i];
}

std::vector<double> MeanZeroSolver::solve(std::span<const double> b) const {
  std::vector<double> rhs(b.begin(), b.end());
  eliminate_multiplier(rhs);
  if (factor_) {
    factor_->solve_inplace(rhs);
    return rhs;
  }
  std::vector<double> x(rhs.size(), 0.0);
  const auto report = cg_solve(*op_, rhs, x, cg_);
  if (!report.converged)
    throw std::runtime_error("MeanZeroSolver: CG did not converge (residual " +
                             std::to_string(report.relative_residual) + ")");
  return x;
}

DenseTensor MeanZeroSolver::solve_rows(const DenseTensor& b) const {
  if (b.rank() != 2 || b.extent(1) != size())
    throw std::invalid_argument("MeanZeroSolver::solve_rows: loads must be [L, n]");
  DenseTensor rhs = b;
  const Index l_count = rhs.extent(0);
  const Index n = size();
  for (Index l = 0; l < l_count; ++l)
    eliminate_multiplier({rhs.data().data() + l * n, static_cast<std::size_t>(n)});
  if (factor_) return factor_->solve_rows(rhs);
  DenseTensor x;
  const auto reports = cg_solve_multi(*op_, rhs, x, cg_);
  require_converged(reports, "MeanZeroSolver::solve_rows");
  return x;
}

NeumannSolveResult solve_neumann_meanzero(const MeanZeroSolver& solver, const DenseTensor& loads) {
  if (loads.rank() != 2 || loads.extent(1) != solver.size())
    throw std::invalid_argument("solve_neumann_meanzero: loads must be [L, ndof]");
  loads.require_finite("solve_neumann_meanzero");
  NeumannSolveResult out;
  const Index l_count = loads.extent(0);
  const Index n = solver.size();
  out.compat_residual.resize(static_cast<std::size_t>(l_count));
  out.compat_warning.resize(static_cast<std::size_t>(l_count));
  for (Index l = 0; l < l_count; ++l) {
    const std::span<const double> row(loads.data().data() + l * n, static_cast<std::size_t>(n));
    const double norm = vec_norm(row);
    const double res = norm > 0.0 ? std::abs(vec_sum(row)) / norm : 0.0;
    out.compat_residual[static_cast<std::size_t>(l)] = res;
    out.compat_warning[static_cast<std::size_t>(l)] = res > 1e-8;
  }
  out.solutions = solver.solve_rows(loads);
  return out;
}

BackgroundDtn::BackgroundDtn(const LagrangeSpace& space, const BoundarySpace& boundary,
                             CgOptions cg)
    : space_(&space), boundary_(&boundary), cg_(cg) {
  if (space.order() != 1 || space.mesh().dim != 2)
    throw std::invalid_argument("BackgroundDtn: needs a 2D P1 space");
  k_ = assemble_stiffness(space, 1.0);

  const Index n = space.ndof();
  const Index nb = boundary.n_bdof();
  std::vector<Index> dof_to_trace(static_cast<std::size_t>(n), -1);
  for (Index i = 0; i < nb; ++i)
    dof_to_trace[static_cast<std::size_t>(boundary.trace.node_map[static_cast<std::size_t>(i)])] = i;

  dof_to_interior_.assign(static_cast<std::size_t>(n), -1);
  for (Index d = 0; d < n; ++d) {
    if (dof_to_trace[static_cast<std::size_t>(d)] < 0) {
      dof_to_interior_[static_cast<std::size_t>(d)] = static_cast<Index>(interior_.size());
      interior_.push_back(d);
    }
  }

  // Split K into interior-interior and interior-boundary blocks, with
  // boundary columns in trace order.
  CooMatrix ii, ib;
  ii.nrows = static_cast<Index>(interior_.size());
  ii.ncols = ii.nrows;
  ib.nrows = ii.nrows;
  ib.ncols = nb;
  const auto offs = k_.row_offsets();
  const auto cols = k_.col_indices();
  const auto vals = k_.values(0);
  for (Index r = 0; r < n; ++r) {
    const Index ri = dof_to_interior_[static_cast<std::size_t>(r)];
    if (ri < 0) continue;
    for (Index p = offs[static_cast<std::size_t>(r)]; p < offs[static_cast<std::size_t>(r) + 1];
         ++p) {
      const Index c = cols[static_cast<std::size_t>(p)];
      const Index ci = dof_to_interior_[static_cast<std::size_t>(c)];
      if (ci >= 0)
        ii.push(ri, ci, vals[static_cast<std::size_t>(p)]);
      else
        ib.push(ri, dof_to_trace[static_cast<std::size_t>(c)], vals[static_cast<std::size_t>(p)]);
    }
  }
  k_ii_ = coo_to_csr(ii);
  k_ib_ = coo_to_csr(ib);
}

DenseTensor BackgroundDtn::apply_rows(const DenseTensor& g) const {
  const Index nb = boundary_->n_bdof();
  if (g.rank() != 2 || g.extent(1) != nb)
    throw std::invalid_argument("BackgroundDtn: data must be [L, n_bdof]");
  const Index l_count = g.extent(0);
  const Index ni = static_cast<Index>(interior_.size());
  const Index n = space_->ndof();

  // Interior solve K_II u_I = -K_IB g, batched over channels.
  DenseTensor rhs({l_count, ni});
  for (Index l = 0; l < l_count; ++l) {
    const std::span<const double> grow(g.data().data() + l * nb, static_cast<std::size_t>(nb));
    auto kib_g = k_ib_.matvec(grow);
    for (Index i = 0; i < ni; ++i) rhs[l * ni + i] = -kib_g[static_cast<std::size_t>(i)];
  }
  const CsrOperator op(k_ii_);
  DenseTensor ui;
  auto reports = cg_solve_multi(op, rhs, ui, cg_);
  require_converged(reports, "BackgroundDtn");

  DenseTensor t({l_count, nb});
  std::vector<double> full(static_cast<std::size_t>(n));
  std::vector<double> flux(static_cast<std::size_t>(nb));
  for (Index l = 0; l < l_count; ++l) {
    for (Index i = 0; i < ni; ++i)
      full[static_cast<std::size_t>(interior_[static_cast<std::size_t>(i)])] = ui[l * ni + i];
    for (Index i = 0; i < nb; ++i)
      full[static_cast<std::size_t>(boundary_->trace.node_map[static_cast<std::size_t>(i)])] =
          g[l * nb + i];
    const auto ku = k_.matvec(full);
    for (Index i = 0; i < nb; ++i)
      flux[static_cast<std::size_t>(i)] =
          ku[static_cast<std::size_t>(boundary_->trace.node_map[static_cast<std::size_t>(i)])];
    boundary_->mass_factor->solve_inplace(flux);
    for (Index i = 0; i < nb; ++i) t[l * nb + i] = flux[static_cast<std::size_t>(i)];
  }
  return t;
}

std::vector<double> BackgroundDtn::apply(std::span<const double> g) const {
  DenseTensor gt({1, static_cast<Index>(g.size())},
                 std::vector<double>(g.begin(), g.end()));
  const DenseTensor t = apply_rows(gt);
  return {t.data().begin(), t.data().end()};
}

PointLocator::PointLocator(const SimplicialMesh& mesh)
    : mesh_(&mesh), jacobians_(barycentric_jacobians(mesh)) {
  if (mesh.dim != mesh.embed_dim)
    throw std::invalid_argument("PointLocator: needs a full-dimensional mesh");
  const Index nc = mesh.num_cells();
  const Index nb = mesh.dim + 1;
  neighbor_.assign(static_cast<std::size_t>(nc * nb), -1);
  std::map<std::vector<Index>, std::pair<Index, Index>> seen;
  for (Index c = 0; c < nc; ++c) {
    for (Index l = 0; l < nb; ++l) {
      std::vector<Index> key;
      for (Index b = 0; b < nb; ++b)
        if (b != l) key.push_back(mesh.cell_vertex(c, b));
      std::sort(key.begin(), key.end());
      auto it = seen.find(key);
      if (it == seen.end()) {
        seen[key] = {c, l};
      } else {
        const auto [oc, ol] = it->second;
        neighbor_[static_cast<std::size_t>(c * nb + l)] = oc;
        neighbor_[static_cast<std::size_t>(oc * nb + ol)] = c;
      }
    }
  }
  node_cells_.resize(static_cast<std::size_t>(mesh.num_nodes()));
  for (Index c = 0; c < nc; ++c)
    for (Index b = 0; b < nb; ++b)
      node_cells_[static_cast<std::size_t>(mesh.cell_vertex(c, b))].push_back(c);
}

void PointLocator::barycentric(Index cell, std::span<const double> x,
                               std::array<double, 4>& lambda) const {
  const Index d = mesh_->dim;
  const Index v0 = mesh_->cell_vertex(cell, 0);
  lambda.fill(0.0);
  lambda[0] = 1.0;
  for (Index b = 0; b <= d; ++b) {
    double acc = (b == 0) ? 1.0 : 0.0;
    for (Index e = 0; e < d; ++e)
      acc += jacobians_[(cell * (d + 1) + b) * d + e] *
             (x[static_cast<std::size_t>(e)] - mesh_->node_coord(v0, e));
    lambda[static_cast<std::size_t>(b)] = acc;
  }
}

PointLocator::Hit PointLocator::locate_from(std::span<const double> x, Index start) const {
  constexpr double tol = 1e-10;
  const Index d = mesh_->dim;
  const Index nb = d + 1;
  Index cell = start;
  std::array<double, 4> lambda{};
  for (Index step = 0; step <= mesh_->num_cells(); ++step) {
    barycentric(cell, x, lambda);
    Index worst = 0;
    for (Index b = 1; b < nb; ++b)
      if (lambda[static_cast<std::size_t>(b)] < lambda[static_cast<std::size_t>(worst)]) worst = b;
    if (lambda[static_cast<std::size_t>(worst)] >= -tol) {
      // Containing cell found; resolve shared-facet ties to the lowest index.
      Index best = cell;
      for (Index b = 0; b < nb; ++b) {
        for (Index c : node_cells_[static_cast<std::size_t>(mesh_->cell_vertex(cell, b))]) {
          if (c >= best) continue;
          std::array<double, 4> lc{};
          barycentric(c, x, lc);
          bool inside = true;
          for (Index bb = 0; bb < nb; ++bb)
            if (lc[static_cast<std::size_t>(bb)] < -tol) inside = false;
          if (inside) best = c;
        }
      }
      Hit hit;
      hit.cell = best;
      barycentric(best, x, hit.lambda);
      return hit;
    }
    const Index next = neighbor_[static_cast<std::size_t>(cell * nb + worst)];
    if (next < 0) break;  // walked off the boundary
    cell = next;
  }
  return {};
}

PointLocator::Hit PointLocator::locate(std::span<const double> x) const {
  if (static_cast<Index>(x.size()) != mesh_->dim)
    throw std::invalid_argument("PointLocator: point dimension mismatch");
  static thread_local Index hint = 0;
  Index start = hint;
  if (start < 0 || start >= mesh_->num_cells()) start = 0;
  Hit hit = locate_from(x, start);
  if (hit.cell < 0 && start != 0) hit = locate_from(x, 0);
  if (hit.cell < 0) {
    // The walk can stall at the boundary next to nonconvex corners; fall back
    // to scanning before declaring the point outside.
    constexpr double tol = 1e-10;
    for (Index c = 0; c < mesh_->num_cells(); ++c) {
      std::array<double, 4> lc{};
      barycentric(c, x, lc);
      bool inside = true;
      for (Index b = 0; b <= mesh_->dim; ++b)
        if (lc[static_cast<std::size_t>(b)] < -tol) inside = false;
      if (inside) {
        hit.cell = c;
        hit.lambda = lc;
        break;
      }
    }
  }
  if (hit.cell < 0) throw std::invalid_argument("PointLocator: point outside the mesh");
  hint = hit.cell;
  return hit;
}

std::vector<double> trace_values(const LagrangeSpace& space, std::span<const double> u,
                                 const BoundarySpace& boundary) {
  if (space.order() != 1) throw std::invalid_argument("trace_values: P1 spaces only");
  const Index nb = boundary.n_bdof();
  std::vector<double> out(static_cast<std::size_t>(nb));
  for (Index i = 0; i < nb; ++i)
    out[static_cast<std::size_t>(i)] =
        u[static_cast<std::size_t>(boundary.trace.node_map[static_cast<std::size_t>(i)])];
  return out;
}

DenseTensor grad_at_points(const LagrangeSpace& space, std::span<const double> u,
                           const DenseTensor& points, const PointLocator& locator) {
  const Index d = space.mesh().dim;
  if (points.rank() != 2 || points.extent(1) != d)
    throw std::invalid_argument("grad_at_points: points must be [P, D]");
  const Index np = points.extent(0);
  const Index k = space.local_count();
  DenseTensor out({np, d});
  const DenseTensor& jac = locator.jacobians();

  for (Index p = 0; p < np; ++p) {
    const std::span<const double> x(points.data().data() + p * d, static_cast<std::size_t>(d));
    const auto hit = locator.locate(x);
    DenseTensor bary({1, d + 1});
    for (Index b = 0; b <= d; ++b) bary[b] = hit.lambda[static_cast<std::size_t>(b)];
    const DenseTensor f = space.basis().lambda_gradients(bary);  // [1, K, D+1]
    const auto dofs = space.cell_dofs(hit.cell);
    for (Index e = 0; e < d; ++e) {
      double acc = 0.0;
      for (Index i = 0; i < k; ++i) {
        double df = 0.0;
        for (Index b = 0; b <= d; ++b)
          df += f[i * (d + 1) + b] * jac[(hit.cell * (d + 1) + b) * d + e];
        acc += u[static_cast<std::size_t>(dofs[static_cast<std::size_t>(i)])] * df;
      }
      out[p * d + e] = acc;
    }
  }
  return out;
}

PointGradientRow basis_gradients_at_point(const LagrangeSpace& space, std::span<const double> x,
                                          std::span<const double> direction,
                                          const PointLocator& locator) {
  const Index d = space.mesh().dim;
  double dir_norm = 0.0;
  for (double v : direction) dir_norm += v * v;
  if (!(dir_norm > 0.0))
    throw std::invalid_argument("basis_gradients_at_point: zero direction");

  const auto hit = locator.locate(x);
  const DenseTensor& jac = locator.jacobians();
  DenseTensor bary({1, d + 1});
  for (Index b = 0; b <= d; ++b) bary[b] = hit.lambda[static_cast<std::size_t>(b)];
  const DenseTensor f = space.basis().lambda_gradients(bary);
  const Index k = space.local_count();

  PointGradientRow row;
  row.cell = hit.cell;
  const auto dofs = space.cell_dofs(hit.cell);
  row.dofs.assign(dofs.begin(), dofs.end());
  row.coefficients.resize(static_cast<std::size_t>(k), 0.0);
  for (Index i = 0; i < k; ++i) {
    double acc = 0.0;
    for (Index e = 0; e < d; ++e) {
      double df = 0.0;
      for (Index b = 0; b <= d; ++b)
        df += f[i * (d + 1) + b] * jac[(hit.cell * (d + 1) + b) * d + e];
      acc += direction[static_cast<std::size_t>(e)] * df;
    }
    row.coefficients[static_cast<std::size_t>(i)] = acc;
  }
  return row;
}

}  // namespace gfem
