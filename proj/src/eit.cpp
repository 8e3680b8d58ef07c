#include "gammafem/eit.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "gammafem/forms.hpp"
#include "gammafem/rng.hpp"

namespace gfem {

InclusionSet sample_inclusions(Index n_circles, std::uint64_t seed) {
  if (n_circles < 1) throw std::invalid_argument("sample_inclusions: need at least one circle");
  Rng rng(seed);
  InclusionSet set;
  for (Index i = 0; i < n_circles; ++i) {
    Circle c;
    c.cx = rng.uniform(-0.8, 0.8);
    c.cy = rng.uniform(-0.8, 0.8);
    const double bound = std::min(0.9 - std::abs(c.cx), 0.9 - std::abs(c.cy));
    if (!(bound >= 0.1)) throw std::logic_error("sample_inclusions: radius bound below 0.1");
    c.r = rng.uniform(0.1, bound);
    set.circles.push_back(c);
  }
  return set;
}

ConductivityField conductivity_from_inclusions(const SimplicialMesh& mesh,
                                               const InclusionSet& inclusions,
                                               double sigma_inclusion, double sigma_background) {
  if (!(sigma_inclusion > 0.0) || !(sigma_background > 0.0))
    throw std::invalid_argument("conductivity_from_inclusions: conductivities must be positive");
  ConductivityField field;
  field.sigma_inclusion = sigma_inclusion;
  field.sigma_background = sigma_background;
  field.cell_sigma.resize(static_cast<std::size_t>(mesh.num_cells()));
  const Index nb = mesh.dim + 1;
  for (Index c = 0; c < mesh.num_cells(); ++c) {
    double cx = 0.0, cy = 0.0;
    for (Index b = 0; b < nb; ++b) {
      cx += mesh.node_coord(mesh.cell_vertex(c, b), 0) / static_cast<double>(nb);
      cy += mesh.node_coord(mesh.cell_vertex(c, b), 1) / static_cast<double>(nb);
    }
    field.cell_sigma[static_cast<std::size_t>(c)] =
        inclusions.contains(cx, cy) ? sigma_inclusion : sigma_background;
  }
  return field;
}

DenseTensor standard_currents(const BoundarySpace& boundary, std::span<const Index> labels) {
  const Index nb = boundary.n_bdof();
  DenseTensor out({static_cast<Index>(labels.size()), nb});
  for (std::size_t l = 0; l < labels.size(); ++l) {
    std::span<double> row(out.data().data() + static_cast<Index>(l) * nb,
                          static_cast<std::size_t>(nb));
    for (Index i = 0; i < nb; ++i)
      row[static_cast<std::size_t>(i)] =
          std::cos(static_cast<double>(labels[l]) * boundary.trace.theta[static_cast<std::size_t>(i)]);
    boundary.project_mean_zero(row);
  }
  return out;
}

namespace {

CauchyData cauchy_from_solutions(const LagrangeSpace& space, const BoundarySpace& boundary,
                                 const DenseTensor& currents, std::vector<Index> labels,
                                 const DenseTensor& solutions) {
  CauchyData data;
  data.labels = std::move(labels);
  data.g_neumann = currents;
  const Index l_count = currents.extent(0);
  const Index nb = boundary.n_bdof();
  data.g_dirichlet = DenseTensor({l_count, nb});
  for (Index l = 0; l < l_count; ++l) {
    const auto tr = trace_values(
        space, {solutions.data().data() + l * space.ndof(), static_cast<std::size_t>(space.ndof())},
        boundary);
    for (Index i = 0; i < nb; ++i) data.g_dirichlet[l * nb + i] = tr[static_cast<std::size_t>(i)];
  }
  return data;
}

}  // namespace

CauchyData forward_eit(const LagrangeSpace& space, const BoundarySpace& boundary,
                       const ConductivityField& field, const DenseTensor& currents,
                       std::vector<Index> labels, SolverBackend backend, CgOptions cg) {
  if (static_cast<Index>(field.cell_sigma.size()) != space.mesh().num_cells())
    throw std::invalid_argument("forward_eit: conductivity size mismatch");
  DenseTensor coef({space.mesh().num_cells()},
                   std::vector<double>(field.cell_sigma.begin(), field.cell_sigma.end()));
  const CsrMatrix k = assemble_stiffness(space, coef, false);
  const MeanZeroSolver solver(k, boundary_weights(space), backend, cg);

  BoundaryChannelSet channels{&boundary, currents, labels};
  const DenseTensor loads = assemble_channel_loads(space, channels);
  const auto result = solve_neumann_meanzero(solver, loads);
  return cauchy_from_solutions(space, boundary, currents, std::move(labels), result.solutions);
}

std::vector<CauchyData> forward_eit_batched(const LagrangeSpace& space,
                                            const BoundarySpace& boundary,
                                            std::span<const ConductivityField> fields,
                                            const DenseTensor& currents, std::vector<Index> labels,
                                            CgOptions cg) {
  const Index b = static_cast<Index>(fields.size());
  const Index n = space.mesh().num_cells();
  DenseTensor coef({b, n});
  for (Index p = 0; p < b; ++p)
    for (Index c = 0; c < n; ++c)
      coef[p * n + c] = fields[static_cast<std::size_t>(p)].cell_sigma[static_cast<std::size_t>(c)];
  const CsrMatrix k = assemble_stiffness(space, coef, true);

  BoundaryChannelSet channels{&boundary, currents, labels};
  const DenseTensor loads = assemble_channel_loads(space, channels);

  std::vector<CauchyData> out;
  out.reserve(static_cast<std::size_t>(b));
  const auto w = boundary_weights(space);
  for (Index p = 0; p < b; ++p) {
    const CsrMatrix plane = k.plane(p);
    const MeanZeroSolver solver(plane, w, SolverBackend::Cg, cg);
    const auto result = solve_neumann_meanzero(solver, loads);
    out.push_back(cauchy_from_solutions(space, boundary, currents, labels, result.solutions));
  }
  return out;
}

CauchyData add_noise(const CauchyData& data, double delta, NoiseKind kind, std::uint64_t seed,
                     const SpectralBasis* basis) {
  if (delta < 0.0) throw std::invalid_argument("add_noise: negative delta");
  CauchyData out = data;
  out.noise = {kind, delta, seed};
  if (kind == NoiseKind::None || delta == 0.0) return out;
  if (kind == NoiseKind::LowFreq && basis == nullptr)
    throw std::invalid_argument("add_noise: low-frequency noise needs a spectral basis");

  const Index l_count = data.g_dirichlet.extent(0);
  const Index nb = data.g_dirichlet.extent(1);
  for (Index l = 0; l < l_count; ++l) {
    Rng rng = Rng::split(seed, static_cast<std::uint64_t>(l));
    std::vector<double> gu(static_cast<std::size_t>(nb));
    for (Index i = 0; i < nb; ++i)
      gu[static_cast<std::size_t>(i)] = rng.gaussian() * data.g_dirichlet[l * nb + i];
    if (kind == NoiseKind::LowFreq) gu = smooth_field(*basis, gu, -0.75);
    for (Index i = 0; i < nb; ++i)
      out.g_dirichlet[l * nb + i] += delta * gu[static_cast<std::size_t>(i)];
  }
  return out;
}

BoundaryChannelSet compute_xi(const CauchyData& data, const BackgroundDtn& dtn,
                              const BoundarySpace& boundary) {
  const Index l_count = data.g_dirichlet.extent(0);
  const Index nb = boundary.n_bdof();
  const DenseTensor flux = dtn.apply_rows(data.g_dirichlet);
  BoundaryChannelSet xi;
  xi.boundary = &boundary;
  xi.labels = data.labels;
  xi.values = DenseTensor({l_count, nb});
  for (Index l = 0; l < l_count; ++l) {
    std::span<double> row(xi.values.data().data() + l * nb, static_cast<std::size_t>(nb));
    for (Index i = 0; i < nb; ++i)
      row[static_cast<std::size_t>(i)] = data.g_neumann[l * nb + i] - flux[l * nb + i];
    boundary.project_mean_zero(row);
  }
  return xi;
}

DenseTensor characteristic_image(const InclusionSet& inclusions, Index grid_n) {
  if (grid_n < 1) throw std::invalid_argument("characteristic_image: bad grid");
  DenseTensor img({grid_n, grid_n});
  const double h = 2.0 / static_cast<double>(grid_n);
  for (Index iy = 0; iy < grid_n; ++iy)
    for (Index ix = 0; ix < grid_n; ++ix) {
      const double x = -1.0 + (static_cast<double>(ix) + 0.5) * h;
      const double y = -1.0 + (static_cast<double>(iy) + 0.5) * h;
      img[iy * grid_n + ix] = inclusions.contains(x, y) ? 1.0 : 0.0;
    }
  return img;
}

EitGenerator::EitGenerator(const SimplicialMesh& recon_mesh, const BoundarySpace& recon_boundary,
                           Index data_refine, std::vector<Index> labels, CgOptions cg)
    : recon_boundary_(&recon_boundary), labels_(std::move(labels)), cg_(cg) {
  if (data_refine < 0) throw std::invalid_argument("EitGenerator: negative refinement");
  data_mesh_ = uniform_refine(recon_mesh, data_refine);
  data_space_ = std::make_unique<LagrangeSpace>(data_mesh_, 1);
  data_boundary_ = make_boundary_space(data_mesh_);
  data_currents_ = standard_currents(*data_boundary_, labels_);

  // Reconstruction-boundary nodes keep their ids under refinement, so each
  // coarse trace node can be found in the fine trace by parent id.
  std::map<Index, Index> fine_by_parent;
  for (Index i = 0; i < data_boundary_->n_bdof(); ++i)
    fine_by_parent[data_boundary_->trace.node_map[static_cast<std::size_t>(i)]] = i;
  coarse_to_fine_.resize(static_cast<std::size_t>(recon_boundary.n_bdof()));
  for (Index i = 0; i < recon_boundary.n_bdof(); ++i) {
    const Index parent = recon_boundary.trace.node_map[static_cast<std::size_t>(i)];
    const auto it = fine_by_parent.find(parent);
    if (it == fine_by_parent.end())
      throw std::logic_error("EitGenerator: coarse boundary node missing from the fine trace");
    coarse_to_fine_[static_cast<std::size_t>(i)] = it->second;
  }
}

CauchyData EitGenerator::solve_inclusions(const InclusionSet& inclusions, double sigma_inclusion,
                                          double sigma_background) const {
  const auto field =
      conductivity_from_inclusions(data_mesh_, inclusions, sigma_inclusion, sigma_background);
  const CauchyData fine = forward_eit(*data_space_, *data_boundary_, field, data_currents_,
                                      labels_, SolverBackend::Cg, cg_);

  // Restrict both boundary functions to the reconstruction trace nodes; the
  // restricted currents are re-projected to zero coarse mean.
  const Index l_count = fine.g_neumann.extent(0);
  const Index nbf = data_boundary_->n_bdof();
  const Index nbc = recon_boundary_->n_bdof();
  CauchyData out;
  out.labels = labels_;
  out.g_neumann = DenseTensor({l_count, nbc});
  out.g_dirichlet = DenseTensor({l_count, nbc});
  for (Index l = 0; l < l_count; ++l) {
    for (Index i = 0; i < nbc; ++i) {
      const Index fi = coarse_to_fine_[static_cast<std::size_t>(i)];
      out.g_neumann[l * nbc + i] = fine.g_neumann[l * nbf + fi];
      out.g_dirichlet[l * nbc + i] = fine.g_dirichlet[l * nbf + fi];
    }
    recon_boundary_->project_mean_zero(
        {out.g_neumann.data().data() + l * nbc, static_cast<std::size_t>(nbc)});
  }
  return out;
}

EitGenerator::Sample EitGenerator::generate(std::uint64_t seed, Index n_circles,
                                            double sigma_inclusion,
                                            double sigma_background) const {
  Sample sample;
  sample.inclusions = sample_inclusions(n_circles, seed);
  sample.data = solve_inclusions(sample.inclusions, sigma_inclusion, sigma_background);
  return sample;
}

}  // namespace gfem
