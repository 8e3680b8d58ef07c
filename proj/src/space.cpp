#include "gammafem/space.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gfem {

LagrangeSpace::LagrangeSpace(const SimplicialMesh& mesh, Index order)
    : mesh_(&mesh), basis_(mesh.dim, order) {
  const Index nc = mesh.num_cells();
  const Index nv = mesh.num_nodes();
  const Index k = basis_.count();
  cell2dof_.resize(static_cast<std::size_t>(nc * k));

  if (order == 1) {
    ndof_ = nv;
    std::copy(mesh.cells.begin(), mesh.cells.end(), cell2dof_.begin());
  } else if (order == 2 && mesh.dim == 1) {
    ndof_ = nv + nc;
    for (Index c = 0; c < nc; ++c) {
      cell2dof_[static_cast<std::size_t>(c * 3 + 0)] = mesh.cell_vertex(c, 0);
      cell2dof_[static_cast<std::size_t>(c * 3 + 1)] = mesh.cell_vertex(c, 1);
      cell2dof_[static_cast<std::size_t>(c * 3 + 2)] = nv + c;
    }
  } else if (order == 2 && mesh.dim == 2) {
    std::vector<std::pair<Index, Index>> edges;
    edges.reserve(static_cast<std::size_t>(3 * nc));
    for (Index c = 0; c < nc; ++c) {
      const Index v0 = mesh.cell_vertex(c, 0);
      const Index v1 = mesh.cell_vertex(c, 1);
      const Index v2 = mesh.cell_vertex(c, 2);
      edges.emplace_back(std::min(v0, v1), std::max(v0, v1));
      edges.emplace_back(std::min(v0, v2), std::max(v0, v2));
      edges.emplace_back(std::min(v1, v2), std::max(v1, v2));
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    for (std::size_t i = 0; i < edges.size(); ++i)
      edge_dofs_[edges[i]] = nv + static_cast<Index>(i);
    ndof_ = nv + static_cast<Index>(edges.size());
    for (Index c = 0; c < nc; ++c) {
      const Index v0 = mesh.cell_vertex(c, 0);
      const Index v1 = mesh.cell_vertex(c, 1);
      const Index v2 = mesh.cell_vertex(c, 2);
      cell2dof_[static_cast<std::size_t>(c * 6 + 0)] = v0;
      cell2dof_[static_cast<std::size_t>(c * 6 + 1)] = v1;
      cell2dof_[static_cast<std::size_t>(c * 6 + 2)] = v2;
      cell2dof_[static_cast<std::size_t>(c * 6 + 3)] = edge_dof(v0, v1);
      cell2dof_[static_cast<std::size_t>(c * 6 + 4)] = edge_dof(v0, v2);
      cell2dof_[static_cast<std::size_t>(c * 6 + 5)] = edge_dof(v1, v2);
    }
  } else {
    throw std::invalid_argument("LagrangeSpace: unsupported order for this dimension");
  }

  // Boundary DoFs.
  if (mesh.dim >= 2) {
    const auto facets = boundary_facets(mesh);
    std::vector<Index> bd;
    for (const auto& f : facets) {
      for (Index i = 0; i < mesh.dim; ++i) bd.push_back(f.vertices[static_cast<std::size_t>(i)]);
      if (has_edge_dofs())
        bd.push_back(edge_dof(f.vertices[0], f.vertices[1]));
    }
    std::sort(bd.begin(), bd.end());
    bd.erase(std::unique(bd.begin(), bd.end()), bd.end());
    boundary_dofs_ = std::move(bd);
  } else if (!mesh.closed_curve) {
    std::vector<Index> incidence(static_cast<std::size_t>(nv), 0);
    for (Index c = 0; c < nc; ++c) {
      incidence[static_cast<std::size_t>(mesh.cell_vertex(c, 0))]++;
      incidence[static_cast<std::size_t>(mesh.cell_vertex(c, 1))]++;
    }
    for (Index v = 0; v < nv; ++v)
      if (incidence[static_cast<std::size_t>(v)] == 1) boundary_dofs_.push_back(v);
  }
}

Index LagrangeSpace::edge_dof(Index a, Index b) const {
  const auto it = edge_dofs_.find({std::min(a, b), std::max(a, b)});
  if (it == edge_dofs_.end()) throw std::invalid_argument("LagrangeSpace: no such edge DoF");
  return it->second;
}

double BoundarySpace::integral(std::span<const double> v) const {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += weights[i] * v[i];
  return s;
}

double BoundarySpace::inner(std::span<const double> u, std::span<const double> v) const {
  const auto mu = mass.matvec(v);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * mu[i];
  return s;
}

double BoundarySpace::norm(std::span<const double> v) const {
  return std::sqrt(std::max(0.0, inner(v, v)));
}

void BoundarySpace::project_mean_zero(std::span<double> v) const {
  const double shift = integral(v) / total_weight;
  for (double& x : v) x -= shift;
}

void BoundarySpace::scatter_channel_load(std::span<const double> v,
                                         std::span<double> parent_load) const {
  const auto mv = mass.matvec(v);
  for (std::size_t i = 0; i < mv.size(); ++i)
    parent_load[static_cast<std::size_t>(trace.node_map[i])] += mv[i];
}

std::unique_ptr<BoundarySpace> make_boundary_space(const SimplicialMesh& mesh2d) {
  auto bs = std::make_unique<BoundarySpace>();
  bs->trace = boundary_trace_mesh(mesh2d);
  bs->space = std::make_unique<LagrangeSpace>(bs->trace.curve, 1);

  // P1 segment mass, assembled exactly.
  const SimplicialMesh& curve = bs->trace.curve;
  const auto lengths = cell_measures(curve);
  CooMatrix coo;
  coo.nrows = curve.num_nodes();
  coo.ncols = curve.num_nodes();
  for (Index c = 0; c < curve.num_cells(); ++c) {
    const Index a = curve.cell_vertex(c, 0);
    const Index b = curve.cell_vertex(c, 1);
    const double h = lengths[static_cast<std::size_t>(c)];
    coo.push(a, a, h / 3.0);
    coo.push(b, b, h / 3.0);
    coo.push(a, b, h / 6.0);
    coo.push(b, a, h / 6.0);
  }
  bs->mass = coo_to_csr(coo);
  bs->mass_factor = std::make_unique<DenseCholesky>(csr_to_dense(bs->mass));
  bs->weights = bs->mass.row_sums();
  bs->total_weight = 0.0;
  for (double w : bs->weights) bs->total_weight += w;
  return bs;
}

void BoundaryChannelSet::validate() const {
  if (!boundary) throw std::invalid_argument("BoundaryChannelSet: no boundary space");
  if (values.rank() != 2 || values.extent(1) != boundary->n_bdof())
    throw std::invalid_argument("BoundaryChannelSet: values must be [L, n_bdof]");
  if (values.extent(0) < 1) throw std::invalid_argument("BoundaryChannelSet: need L >= 1");
  values.require_finite("BoundaryChannelSet");
}

}  // namespace gfem
