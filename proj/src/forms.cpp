#include "gammafem/forms.hpp"

#include <cmath>
#include <stdexcept>

namespace gfem {

namespace {

Index default_degree(const LagrangeSpace& space, Index requested, bool load) {
  if (requested > 0) return requested;
  return load ? 2 * space.order() + 2 : 2 * space.order();
}

DenseTensor gather_cell_vertices(const SimplicialMesh& mesh) {
  const Index n = mesh.num_cells();
  const Index nb = mesh.dim + 1;
  const Index e = mesh.embed_dim;
  DenseTensor v({n, nb, e});
  for (Index c = 0; c < n; ++c)
    for (Index b = 0; b < nb; ++b)
      for (Index d = 0; d < e; ++d)
        v[(c * nb + b) * e + d] = mesh.node_coord(mesh.cell_vertex(c, b), d);
  return v;
}

DenseTensor measures_tensor(const SimplicialMesh& mesh) {
  auto m = cell_measures(mesh);
  const Index n = static_cast<Index>(m.size());
  return DenseTensor({n}, std::move(m));
}

void require_positive(const DenseTensor& coef) {
  for (double v : coef.data())
    if (!(v > 0.0)) throw std::invalid_argument("assemble_stiffness: nonpositive coefficient");
}

CooMatrix scatter_cells(const LagrangeSpace& space, const DenseTensor& local, Index batch,
                        const std::vector<Index>* cells = nullptr) {
  // local is [N, K, K] or [B, N, K, K]; when `cells` is given, N indexes that
  // subset instead of the full mesh.
  const Index k = space.local_count();
  const Index b_planes = batch == 0 ? 1 : batch;
  const Index n = local.extent(batch == 0 ? 0 : 1);
  CooMatrix coo;
  coo.nrows = space.ndof();
  coo.ncols = space.ndof();
  coo.batch = batch;
  const Index nnz = n * k * k;
  coo.rows.resize(static_cast<std::size_t>(nnz));
  coo.cols.resize(static_cast<std::size_t>(nnz));
  coo.values.resize(static_cast<std::size_t>(b_planes * nnz));
  Index t = 0;
  for (Index c = 0; c < n; ++c) {
    const Index cell = cells ? (*cells)[static_cast<std::size_t>(c)] : c;
    const auto dofs = space.cell_dofs(cell);
    for (Index i = 0; i < k; ++i)
      for (Index j = 0; j < k; ++j, ++t) {
        coo.rows[static_cast<std::size_t>(t)] = dofs[static_cast<std::size_t>(i)];
        coo.cols[static_cast<std::size_t>(t)] = dofs[static_cast<std::size_t>(j)];
        for (Index p = 0; p < b_planes; ++p)
          coo.values[static_cast<std::size_t>(p * nnz + t)] = local[(p * n + c) * k * k + i * k + j];
      }
  }
  return coo;
}

// Slice rows [begin, begin+count) of the leading axis.
DenseTensor slice_leading(const DenseTensor& t, Index begin, Index count) {
  std::vector<Index> shape = t.shape();
  Index row = 1;
  for (std::size_t a = 1; a < shape.size(); ++a) row *= shape[a];
  shape[0] = count;
  std::vector<double> data(t.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                           t.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * row));
  return DenseTensor(std::move(shape), std::move(data));
}

// Like slice_leading, but picks rows of a [B, N, ...] tensor along axis 1.
DenseTensor slice_second(const DenseTensor& t, Index begin, Index count) {
  std::vector<Index> shape = t.shape();
  const Index b = shape[0];
  const Index n = shape[1];
  Index row = 1;
  for (std::size_t a = 2; a < shape.size(); ++a) row *= shape[a];
  shape[1] = count;
  std::vector<double> data(static_cast<std::size_t>(b * count * row));
  for (Index p = 0; p < b; ++p)
    std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>((p * n + begin) * row), count * row,
                data.begin() + static_cast<std::ptrdiff_t>(p * count * row));
  return DenseTensor(std::move(shape), std::move(data));
}

CooMatrix stiffness_coo(const LagrangeSpace& space, double constant, const DenseTensor* coef,
                        bool batched, Index quad_degree) {
  if (!(constant > 0.0)) throw std::invalid_argument("assemble_stiffness: nonpositive coefficient");
  if (coef) require_positive(*coef);
  const SimplicialMesh& mesh = space.mesh();
  const QuadratureRule quad = simplex_quadrature(mesh.dim, default_degree(space, quad_degree, false));
  const DenseTensor f = space.basis().lambda_gradients(quad.points);  // [Q,K,D+1]
  const DenseTensor jac = barycentric_jacobians(mesh);                // [N,D+1,D]
  const DenseTensor w({quad.count()}, quad.weights);
  DenseTensor m = measures_tensor(mesh);
  if (constant != 1.0)
    for (double& v : m.data()) v *= constant;

  const Index n = mesh.num_cells();
  const Index k = space.local_count();
  const Index batch = (batched && coef) ? coef->extent(0) : 0;
  const Index planes = batch == 0 ? 1 : batch;

  CooMatrix coo;
  coo.nrows = space.ndof();
  coo.ncols = space.ndof();
  coo.batch = batch;
  const Index nnz = n * k * k;
  coo.rows.resize(static_cast<std::size_t>(nnz));
  coo.cols.resize(static_cast<std::size_t>(nnz));
  coo.values.resize(static_cast<std::size_t>(planes * nnz));

  // Cells are processed in chunks so the gradient tensor stays bounded.
  const Index per_cell = quad.count() * k * mesh.dim;
  const Index chunk = std::max<Index>(1, 4 * 1024 * 1024 / std::max<Index>(per_cell, 1));
  for (Index begin = 0; begin < n; begin += chunk) {
    const Index count = std::min(chunk, n - begin);
    const DenseTensor jc = slice_leading(jac, begin, count);
    const DenseTensor mc = slice_leading(m, begin, count);
    const DenseTensor phi = contract("qkb,nbd->nqkd", f, jc);
    DenseTensor local;
    if (!coef) {
      local = contract("q,n,nqkd,nqld->nkl", w, mc, phi, phi);
    } else if (!batched && coef->rank() == 1) {
      local = contract("n,q,n,nqkd,nqld->nkl", slice_leading(*coef, begin, count), w, mc, phi, phi);
    } else if (!batched && coef->rank() == 2) {
      local = contract("nq,q,n,nqkd,nqld->nkl", slice_leading(*coef, begin, count), w, mc, phi, phi);
    } else if (batched && coef->rank() == 2) {
      local = contract("bn,q,n,nqkd,nqld->bnkl", slice_second(*coef, begin, count), w, mc, phi, phi);
    } else if (batched && coef->rank() == 3) {
      local = contract("bnq,q,n,nqkd,nqld->bnkl", slice_second(*coef, begin, count), w, mc, phi,
                       phi);
    } else {
      throw std::invalid_argument("assemble_stiffness: unsupported coefficient shape");
    }
    // Scatter the chunk into its triplet range.
    for (Index c = 0; c < count; ++c) {
      const auto dofs = space.cell_dofs(begin + c);
      for (Index i = 0; i < k; ++i)
        for (Index j = 0; j < k; ++j) {
          const Index t = (begin + c) * k * k + i * k + j;
          coo.rows[static_cast<std::size_t>(t)] = dofs[static_cast<std::size_t>(i)];
          coo.cols[static_cast<std::size_t>(t)] = dofs[static_cast<std::size_t>(j)];
          for (Index p = 0; p < planes; ++p)
            coo.values[static_cast<std::size_t>(p * nnz + t)] =
                local[(p * count + c) * k * k + i * k + j];
        }
    }
  }
  return coo;
}

struct FacetData {
  BoundaryFacet facet;
  double measure = 0.0;
  std::array<double, 3> normal{};
  std::vector<Index> dofs;
};

std::array<double, 3> facet_normal(const SimplicialMesh& mesh, const BoundaryFacet& f,
                                   double& measure) {
  std::array<double, 3> n{};
  const Index opp = mesh.cell_vertex(f.cell, f.local);
  if (mesh.dim == 2) {
    const Index a = f.vertices[0];
    const Index b = f.vertices[1];
    const double tx = mesh.node_coord(b, 0) - mesh.node_coord(a, 0);
    const double ty = mesh.node_coord(b, 1) - mesh.node_coord(a, 1);
    measure = std::sqrt(tx * tx + ty * ty);
    n = {ty / measure, -tx / measure, 0.0};
    const double ox = mesh.node_coord(a, 0) - mesh.node_coord(opp, 0);
    const double oy = mesh.node_coord(a, 1) - mesh.node_coord(opp, 1);
    if (n[0] * ox + n[1] * oy < 0.0) {
      n[0] = -n[0];
      n[1] = -n[1];
    }
  } else {
    const Index a = f.vertices[0];
    const Index b = f.vertices[1];
    const Index c = f.vertices[2];
    double u[3], v[3];
    for (Index d = 0; d < 3; ++d) {
      u[d] = mesh.node_coord(b, d) - mesh.node_coord(a, d);
      v[d] = mesh.node_coord(c, d) - mesh.node_coord(a, d);
    }
    n = {u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
    const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    measure = 0.5 * len;
    for (auto& x : n) x /= len;
    double o[3];
    double dot = 0.0;
    for (Index d = 0; d < 3; ++d) {
      o[d] = mesh.node_coord(a, d) - mesh.node_coord(opp, d);
      dot += n[static_cast<std::size_t>(d)] * o[d];
    }
    if (dot < 0.0)
      for (auto& x : n) x = -x;
  }
  return n;
}

std::vector<FacetData> collect_facets(const LagrangeSpace& space) {
  const SimplicialMesh& mesh = space.mesh();
  if (mesh.dim < 2)
    throw std::invalid_argument("boundary assembly: mesh must be 2D or 3D");
  std::vector<FacetData> out;
  for (const auto& f : boundary_facets(mesh)) {
    FacetData fd;
    fd.facet = f;
    fd.normal = facet_normal(mesh, f, fd.measure);
    for (Index i = 0; i < mesh.dim; ++i) fd.dofs.push_back(f.vertices[static_cast<std::size_t>(i)]);
    if (space.has_edge_dofs()) fd.dofs.push_back(space.edge_dof(f.vertices[0], f.vertices[1]));
    out.push_back(std::move(fd));
  }
  return out;
}

// Quadrature, basis values and physical points on the reference facet.
struct FacetRule {
  QuadratureRule quad;
  ReferenceBasis basis;
  DenseTensor values;  // [Q, Kf]

  FacetRule(const LagrangeSpace& space, Index degree)
      : quad(simplex_quadrature(space.mesh().dim - 1, degree)),
        basis(space.mesh().dim - 1, space.order()),
        values(basis.values(quad.points)) {}
};

void facet_point(const SimplicialMesh& mesh, const BoundaryFacet& f, const DenseTensor& bary,
                 Index q, std::span<double> x) {
  const Index dim = mesh.dim;  // facet has `dim` vertices
  for (Index d = 0; d < mesh.embed_dim; ++d) x[static_cast<std::size_t>(d)] = 0.0;
  for (Index i = 0; i < dim; ++i) {
    const double l = bary[q * dim + i];
    for (Index d = 0; d < mesh.embed_dim; ++d)
      x[static_cast<std::size_t>(d)] += l * mesh.node_coord(f.vertices[static_cast<std::size_t>(i)], d);
  }
}

}  // namespace

DenseTensor physical_points(const SimplicialMesh& mesh, const DenseTensor& bary) {
  const DenseTensor v = gather_cell_vertices(mesh);
  return contract("qb,nbe->nqe", bary, v);
}

CsrMatrix assemble_stiffness(const LagrangeSpace& space, double coef, const AssemblyOptions& opts) {
  return coo_to_csr(stiffness_coo(space, coef, nullptr, false, opts.quad_degree));
}

CsrMatrix assemble_stiffness(const LagrangeSpace& space, const DenseTensor& coef, bool batched,
                             const AssemblyOptions& opts) {
  return coo_to_csr(stiffness_coo(space, 1.0, &coef, batched, opts.quad_degree));
}

namespace {

CooMatrix mass_full_coo(const LagrangeSpace& space, Index quad_degree,
                        const std::vector<Index>* cells) {
  const SimplicialMesh& mesh = space.mesh();
  const QuadratureRule quad = simplex_quadrature(mesh.dim, default_degree(space, quad_degree, false));
  const DenseTensor v = space.basis().values(quad.points);  // [Q, K]
  const DenseTensor w({quad.count()}, quad.weights);
  DenseTensor m = measures_tensor(mesh);
  if (cells) {
    DenseTensor sub({static_cast<Index>(cells->size())});
    for (std::size_t i = 0; i < cells->size(); ++i)
      sub[static_cast<Index>(i)] = m[(*cells)[i]];
    m = std::move(sub);
  }
  DenseTensor local;
  if (cells && cells->empty()) {
    local = DenseTensor({0, space.local_count(), space.local_count()});
  } else {
    local = contract("q,qk,ql,n->nkl", w, v, v, m);
  }
  return scatter_cells(space, local, 0, cells);
}

CooMatrix mass_boundary_coo(const LagrangeSpace& space, Index quad_degree) {
  FacetRule rule(space, default_degree(space, quad_degree, false));
  const Index q = rule.quad.count();
  const Index kf = rule.basis.count();
  CooMatrix coo;
  coo.nrows = space.ndof();
  coo.ncols = space.ndof();
  for (const auto& fd : collect_facets(space)) {
    for (Index i = 0; i < kf; ++i)
      for (Index j = 0; j < kf; ++j) {
        double acc = 0.0;
        for (Index p = 0; p < q; ++p)
          acc += rule.quad.weights[static_cast<std::size_t>(p)] * rule.values[p * kf + i] *
                 rule.values[p * kf + j];
        coo.push(fd.dofs[static_cast<std::size_t>(i)], fd.dofs[static_cast<std::size_t>(j)],
                 fd.measure * acc);
      }
  }
  return coo;
}

}  // namespace

CsrMatrix assemble_mass(const LagrangeSpace& space, MassDomain domain,
                        const AssemblyOptions& opts) {
  if (domain == MassDomain::Full) return coo_to_csr(mass_full_coo(space, opts.quad_degree, nullptr));
  return coo_to_csr(mass_boundary_coo(space, opts.quad_degree));
}

SubdomainMass assemble_mass_subdomain(const LagrangeSpace& space, const CellPredicate& inside,
                                      const AssemblyOptions& opts) {
  const SimplicialMesh& mesh = space.mesh();
  const Index nb = mesh.dim + 1;
  std::vector<Index> cells;
  std::vector<double> centroid(static_cast<std::size_t>(mesh.embed_dim));
  for (Index c = 0; c < mesh.num_cells(); ++c) {
    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (Index b = 0; b < nb; ++b)
      for (Index d = 0; d < mesh.embed_dim; ++d)
        centroid[static_cast<std::size_t>(d)] +=
            mesh.node_coord(mesh.cell_vertex(c, b), d) / static_cast<double>(nb);
    if (inside(centroid)) cells.push_back(c);
  }
  SubdomainMass out;
  out.cells = static_cast<Index>(cells.size());
  out.empty = cells.empty();
  out.matrix = coo_to_csr(mass_full_coo(space, opts.quad_degree, &cells));
  return out;
}

std::vector<double> assemble_volume_load(const LagrangeSpace& space, const ScalarField& f,
                                         const AssemblyOptions& opts) {
  const auto loads = assemble_volume_load_batched(
      space, 1, [&](Index, std::span<const double> x) { return f(x); }, opts);
  return {loads.data().begin(), loads.data().end()};
}

DenseTensor assemble_volume_load_batched(const LagrangeSpace& space, Index channels,
                                         const BatchedScalarField& f,
                                         const AssemblyOptions& opts) {
  const SimplicialMesh& mesh = space.mesh();
  const QuadratureRule quad = simplex_quadrature(mesh.dim, default_degree(space, opts.quad_degree, true));
  const DenseTensor v = space.basis().values(quad.points);
  const DenseTensor w({quad.count()}, quad.weights);
  const DenseTensor m = measures_tensor(mesh);
  const Index n = mesh.num_cells();
  const Index q = quad.count();
  const Index e = mesh.embed_dim;
  const Index k = space.local_count();
  DenseTensor out({channels, space.ndof()});

  // Chunked over cells so source samples stay bounded for large batches.
  const Index chunk = std::max<Index>(1, 2 * 1024 * 1024 / std::max<Index>(channels * q, 1));
  for (Index begin = 0; begin < n; begin += chunk) {
    const Index count = std::min(chunk, n - begin);
    const DenseTensor mc = slice_leading(m, begin, count);
    // Physical quadrature points for the chunk.
    DenseTensor verts({count, mesh.dim + 1, e});
    for (Index c = 0; c < count; ++c)
      for (Index b = 0; b <= mesh.dim; ++b)
        for (Index d = 0; d < e; ++d)
          verts[(c * (mesh.dim + 1) + b) * e + d] =
              mesh.node_coord(mesh.cell_vertex(begin + c, b), d);
    const DenseTensor pts = contract("qb,nbe->nqe", quad.points, verts);

    DenseTensor s({channels, count, q});
    for (Index l = 0; l < channels; ++l)
      for (Index c = 0; c < count; ++c)
        for (Index p = 0; p < q; ++p)
          s[(l * count + c) * q + p] =
              f(l, std::span<const double>(pts.data().data() + (c * q + p) * e,
                                           static_cast<std::size_t>(e)));

    const DenseTensor local = contract("lnq,q,qk,n->lnk", s, w, v, mc);  // [L,count,K]
    for (Index l = 0; l < channels; ++l)
      for (Index c = 0; c < count; ++c) {
        const auto dofs = space.cell_dofs(begin + c);
        for (Index i = 0; i < k; ++i)
          out[l * space.ndof() + dofs[static_cast<std::size_t>(i)]] +=
              local[(l * count + c) * k + i];
      }
  }
  return out;
}

std::vector<double> assemble_neumann_load(const LagrangeSpace& space, const BoundaryField& g,
                                          const AssemblyOptions& opts) {
  const auto loads = assemble_neumann_load_batched(
      space, 1,
      [&](Index, std::span<const double> x, std::span<const double> nrm) { return g(x, nrm); },
      opts);
  return {loads.data().begin(), loads.data().end()};
}

DenseTensor assemble_neumann_load_batched(const LagrangeSpace& space, Index channels,
                                          const BatchedBoundaryField& g,
                                          const AssemblyOptions& opts) {
  const SimplicialMesh& mesh = space.mesh();
  FacetRule rule(space, default_degree(space, opts.quad_degree, true));
  const Index q = rule.quad.count();
  const Index kf = rule.basis.count();
  DenseTensor out({channels, space.ndof()});
  std::vector<double> x(static_cast<std::size_t>(mesh.embed_dim));
  for (const auto& fd : collect_facets(space)) {
    const std::span<const double> nrm(fd.normal.data(), static_cast<std::size_t>(mesh.embed_dim));
    for (Index p = 0; p < q; ++p) {
      facet_point(mesh, fd.facet, rule.quad.points, p, x);
      const double scale = fd.measure * rule.quad.weights[static_cast<std::size_t>(p)];
      for (Index l = 0; l < channels; ++l) {
        const double gv = g(l, x, nrm) * scale;
        for (Index i = 0; i < kf; ++i)
          out[l * space.ndof() + fd.dofs[static_cast<std::size_t>(i)]] +=
              gv * rule.values[p * kf + i];
      }
    }
  }
  return out;
}

DenseTensor assemble_channel_loads(const LagrangeSpace& space, const BoundaryChannelSet& channels) {
  channels.validate();
  if (space.order() != 1 || space.mesh().dim != 2)
    throw std::invalid_argument("assemble_channel_loads: needs a 2D P1 space");
  const BoundarySpace& bs = *channels.boundary;
  const Index l_count = channels.channels();
  DenseTensor out({l_count, space.ndof()});
  for (Index l = 0; l < l_count; ++l) {
    std::span<double> row(out.data().data() + l * space.ndof(),
                          static_cast<std::size_t>(space.ndof()));
    bs.scatter_channel_load(channels.channel(l), row);
  }
  return out;
}

std::vector<double> boundary_weights(const LagrangeSpace& space) {
  return assemble_neumann_load(
      space, [](std::span<const double>, std::span<const double>) { return 1.0; });
}

ErrorNorms error_norms(const LagrangeSpace& space, std::span<const double> u,
                       const ScalarField& exact,
                       const std::function<void(std::span<const double>, std::span<double>)>&
                           exact_gradient,
                       Index quad_degree) {
  const SimplicialMesh& mesh = space.mesh();
  const QuadratureRule quad = simplex_quadrature(mesh.dim, default_degree(space, quad_degree, true));
  const DenseTensor v = space.basis().values(quad.points);
  const DenseTensor phi = shape_gradients(mesh, space.basis(), quad);
  const DenseTensor pts = physical_points(mesh, quad.points);
  const auto m = cell_measures(mesh);
  const Index n = mesh.num_cells();
  const Index q = quad.count();
  const Index k = space.local_count();
  const Index d = mesh.dim;
  const Index e = mesh.embed_dim;

  double l2 = 0.0, h1 = 0.0;
  std::vector<double> grad(static_cast<std::size_t>(d));
  for (Index c = 0; c < n; ++c) {
    const auto dofs = space.cell_dofs(c);
    for (Index p = 0; p < q; ++p) {
      const std::span<const double> x(pts.data().data() + (c * q + p) * e,
                                      static_cast<std::size_t>(e));
      double uh = 0.0;
      for (Index i = 0; i < k; ++i)
        uh += u[static_cast<std::size_t>(dofs[static_cast<std::size_t>(i)])] * v[p * k + i];
      const double diff = uh - exact(x);
      const double wm = m[static_cast<std::size_t>(c)] * quad.weights[static_cast<std::size_t>(p)];
      l2 += wm * diff * diff;
      if (exact_gradient) {
        exact_gradient(x, grad);
        for (Index dd = 0; dd < d; ++dd) {
          double gh = 0.0;
          for (Index i = 0; i < k; ++i)
            gh += u[static_cast<std::size_t>(dofs[static_cast<std::size_t>(i)])] *
                  phi[((c * q + p) * k + i) * d + dd];
          const double gd = gh - grad[static_cast<std::size_t>(dd)];
          h1 += wm * gd * gd;
        }
      }
    }
  }
  return {std::sqrt(l2), std::sqrt(h1)};
}

void BilinearForm::add_integrator(ScalarDiffusionIntegrator integ) {
  if (batch_size_ > 0 && !integ.batched)
    throw std::invalid_argument("BilinearForm: unbatched integrator in a batched form");
  if (batch_size_ == 0 && integ.batched)
    throw std::invalid_argument("BilinearForm: batched integrator in an unbatched form");
  if (integ.batched && (!integ.coef || integ.coef->extent(0) != batch_size_))
    throw std::invalid_argument("BilinearForm: integrator batch does not match batch_size");
  diffusion_.push_back(std::move(integ));
}

void BilinearForm::add_integrator(ScalarMassIntegrator integ) {
  if (batch_size_ > 0)
    throw std::invalid_argument("BilinearForm: mass integrators are unbatched");
  mass_.push_back(std::move(integ));
}

CsrMatrix BilinearForm::assemble() const {
  if (diffusion_.empty() && mass_.empty())
    throw std::invalid_argument("BilinearForm: no integrators");
  CooMatrix all;
  all.nrows = space_->ndof();
  all.ncols = space_->ndof();
  all.batch = batch_size_;
  auto append = [&](const CooMatrix& part) {
    if (all.rows.empty()) {
      all = part;
      return;
    }
    if (part.batch != all.batch) throw std::invalid_argument("BilinearForm: batch mismatch");
    const Index old_nnz = all.nnz();
    const Index add_nnz = part.nnz();
    const Index planes = all.planes();
    std::vector<double> merged(static_cast<std::size_t>((old_nnz + add_nnz) * planes));
    for (Index p = 0; p < planes; ++p) {
      std::copy_n(all.values.begin() + static_cast<std::ptrdiff_t>(p * old_nnz), old_nnz,
                  merged.begin() + static_cast<std::ptrdiff_t>(p * (old_nnz + add_nnz)));
      std::copy_n(part.values.begin() + static_cast<std::ptrdiff_t>(p * add_nnz), add_nnz,
                  merged.begin() + static_cast<std::ptrdiff_t>(p * (old_nnz + add_nnz) + old_nnz));
    }
    all.rows.insert(all.rows.end(), part.rows.begin(), part.rows.end());
    all.cols.insert(all.cols.end(), part.cols.begin(), part.cols.end());
    all.values = std::move(merged);
  };
  for (const auto& integ : diffusion_)
    append(stiffness_coo(*space_, integ.constant, integ.coef ? &*integ.coef : nullptr,
                         integ.batched, integ.quad_degree));
  for (const auto& integ : mass_) {
    if (integ.subdomain) {
      // Reuse the subdomain selection logic, then fold in.
      const auto sub = assemble_mass_subdomain(*space_, integ.subdomain, {integ.quad_degree});
      CooMatrix coo;
      coo.nrows = sub.matrix.nrows();
      coo.ncols = sub.matrix.ncols();
      const auto offs = sub.matrix.row_offsets();
      const auto cols = sub.matrix.col_indices();
      const auto vals = sub.matrix.values(0);
      for (Index r = 0; r < sub.matrix.nrows(); ++r)
        for (Index p = offs[static_cast<std::size_t>(r)];
             p < offs[static_cast<std::size_t>(r) + 1]; ++p)
          coo.push(r, cols[static_cast<std::size_t>(p)], vals[static_cast<std::size_t>(p)]);
      append(coo);
    } else if (integ.domain == MassDomain::Full) {
      append(mass_full_coo(*space_, integ.quad_degree, nullptr));
    } else {
      append(mass_boundary_coo(*space_, integ.quad_degree));
    }
  }
  return coo_to_csr(all);
}

void LinearForm::add_integrator(ScalarSourceIntegrator integ) {
  if ((batch_size_ > 0) != integ.batched)
    throw std::invalid_argument("LinearForm: integrator batchedness does not match form");
  sources_.push_back(std::move(integ));
}

void LinearForm::add_integrator(ScalarNeumannIntegrator integ) {
  if ((batch_size_ > 0) != integ.batched)
    throw std::invalid_argument("LinearForm: integrator batchedness does not match form");
  neumann_.push_back(std::move(integ));
}

void LinearForm::add_integrator(ChannelNeumannIntegrator integ) {
  if (!integ.channels) throw std::invalid_argument("LinearForm: null channel set");
  if (batch_size_ > 0 && integ.channels->channels() != batch_size_)
    throw std::invalid_argument("LinearForm: channel count does not match batch_size");
  channels_.push_back(integ);
}

DenseTensor LinearForm::assemble() const {
  const Index l_count = batch_size_ > 0 ? batch_size_ : 1;
  DenseTensor out({l_count, space_->ndof()});
  auto accumulate = [&](const DenseTensor& part) {
    for (Index i = 0; i < out.size(); ++i) out[i] += part[i];
  };
  for (const auto& integ : sources_) {
    if (integ.batched) {
      accumulate(assemble_volume_load_batched(*space_, l_count, integ.batched_f,
                                              {integ.quad_degree}));
    } else {
      accumulate(assemble_volume_load_batched(
          *space_, 1, [&](Index, std::span<const double> x) { return integ.f(x); },
          {integ.quad_degree}));
    }
  }
  for (const auto& integ : neumann_) {
    if (integ.batched) {
      accumulate(assemble_neumann_load_batched(*space_, l_count, integ.batched_g,
                                               {integ.quad_degree}));
    } else {
      accumulate(assemble_neumann_load_batched(
          *space_, 1,
          [&](Index, std::span<const double> x, std::span<const double> n) {
            return integ.g(x, n);
          },
          {integ.quad_degree}));
    }
  }
  for (const auto& integ : channels_) accumulate(assemble_channel_loads(*space_, *integ.channels));
  return out;
}

}  // namespace gfem
