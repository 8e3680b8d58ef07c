#include "gammafem/dsm.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "gammafem/forms.hpp"

namespace gfem {

ProbeCache::ProbeCache(const LagrangeSpace& space, const BoundarySpace& boundary,
                       const SpectralBasis& basis, Index grid_n)
    : space_(&space), boundary_(&boundary), basis_(&basis), grid_n_(grid_n) {
  if (grid_n < 1) throw std::invalid_argument("ProbeCache: bad grid size");
  k_ = assemble_stiffness(space, 1.0);
  solver_ = std::make_unique<MeanZeroSolver>(k_, boundary_weights(space),
                                             SolverBackend::DenseFactor);
  locator_ = std::make_unique<PointLocator>(space.mesh());

  // Grid of cell centers over the mesh bounding box.
  const SimplicialMesh& mesh = space.mesh();
  double lo[2] = {mesh.node_coord(0, 0), mesh.node_coord(0, 1)};
  double hi[2] = {lo[0], lo[1]};
  for (Index v = 1; v < mesh.num_nodes(); ++v)
    for (Index d = 0; d < 2; ++d) {
      lo[d] = std::min(lo[d], mesh.node_coord(v, d));
      hi[d] = std::max(hi[d], mesh.node_coord(v, d));
    }
  const Index p_count = grid_n * grid_n;
  grid_points_ = DenseTensor({p_count, 2});
  for (Index iy = 0; iy < grid_n; ++iy)
    for (Index ix = 0; ix < grid_n; ++ix) {
      const Index p = iy * grid_n + ix;
      grid_points_[p * 2 + 0] =
          lo[0] + (hi[0] - lo[0]) * (static_cast<double>(ix) + 0.5) / static_cast<double>(grid_n);
      grid_points_[p * 2 + 1] =
          lo[1] + (hi[1] - lo[1]) * (static_cast<double>(iy) + 0.5) / static_cast<double>(grid_n);
    }

  // Two unit-direction probes per grid point, solved in chunks against the
  // cached factor; only the spectral coefficients of their traces are kept.
  const Index k0 = basis.k0();
  coeff_x_ = DenseTensor({p_count, k0});
  coeff_y_ = DenseTensor({p_count, k0});
  const Index ndof = space.ndof();
  const Index chunk = 256;
  const double ex[2] = {1.0, 0.0};
  const double ey[2] = {0.0, 1.0};
  for (Index begin = 0; begin < p_count; begin += chunk) {
    const Index count = std::min(chunk, p_count - begin);
    DenseTensor loads({2 * count, ndof});
    for (Index i = 0; i < count; ++i) {
      const std::span<const double> x(grid_points_.data().data() + (begin + i) * 2, 2);
      const auto row_x = basis_gradients_at_point(space, x, {ex, 2}, *locator_);
      const auto row_y = basis_gradients_at_point(space, x, {ey, 2}, *locator_);
      for (std::size_t j = 0; j < row_x.dofs.size(); ++j)
        loads[(2 * i + 0) * ndof + row_x.dofs[j]] += row_x.coefficients[j];
      for (std::size_t j = 0; j < row_y.dofs.size(); ++j)
        loads[(2 * i + 1) * ndof + row_y.dofs[j]] += row_y.coefficients[j];
    }
    const DenseTensor etas = solver_->solve_rows(loads);
    for (Index i = 0; i < count; ++i) {
      for (Index dir = 0; dir < 2; ++dir) {
        const auto tr = trace_values(
            space, {etas.data().data() + (2 * i + dir) * ndof, static_cast<std::size_t>(ndof)},
            boundary);
        const auto alpha = basis.expand(tr);
        DenseTensor& dst = dir == 0 ? coeff_x_ : coeff_y_;
        for (Index k = 0; k < k0; ++k) dst[(begin + i) * k0 + k] = alpha[static_cast<std::size_t>(k)];
      }
    }
  }
}

std::vector<double> ProbeCache::dipole_load(std::span<const double> x,
                                            std::span<const double> d) const {
  const auto row = basis_gradients_at_point(*space_, x, d, *locator_);
  std::vector<double> load(static_cast<std::size_t>(space_->ndof()), 0.0);
  for (std::size_t j = 0; j < row.dofs.size(); ++j)
    load[static_cast<std::size_t>(row.dofs[j])] += row.coefficients[j];
  return load;
}

std::vector<double> ProbeCache::probe_eta(std::span<const double> x,
                                          std::span<const double> d) const {
  return solver_->solve(dipole_load(x, d));
}

double ProbeCache::probe_seminorm(Index grid_index, std::span<const double> d,
                                  double gamma) const {
  const Index k0 = basis_->k0();
  std::vector<double> alpha(static_cast<std::size_t>(k0));
  for (Index k = 0; k < k0; ++k)
    alpha[static_cast<std::size_t>(k)] =
        d[0] * coeff_x_[grid_index * k0 + k] + d[1] * coeff_y_[grid_index * k0 + k];
  return h_gamma_seminorm_of_coefficients(*basis_, alpha, gamma);
}

std::vector<double> data_feature(const ProbeCache& cache, std::span<const double> xi,
                                 double gamma) {
  auto zeta = apply_flb(cache.basis(), xi, gamma);
  cache.boundary().project_mean_zero(zeta);
  std::vector<double> load(static_cast<std::size_t>(cache.space().ndof()), 0.0);
  cache.boundary().scatter_channel_load(zeta, load);
  return cache.solver().solve(load);
}

IndexImage index_image(const ProbeCache& cache, std::span<const double> xi, double gamma) {
  const double xi_norm = cache.boundary().norm(xi);
  if (!(xi_norm > 0.0)) throw std::invalid_argument("index_image: xi must be nonzero");

  const auto phi = data_feature(cache, xi, gamma);
  const DenseTensor grads = grad_at_points(cache.space(), phi, cache.grid_points(),
                                           cache.locator());

  const Index p_count = cache.grid_n() * cache.grid_n();
  IndexImage img;
  img.grid_n = cache.grid_n();
  img.values.resize(static_cast<std::size_t>(p_count), 0.0);
  for (Index p = 0; p < p_count; ++p) {
    const double dx = grads[p * 2 + 0];
    const double dy = grads[p * 2 + 1];
    const double mag2 = dx * dx + dy * dy;
    if (std::sqrt(mag2) <= 1e-14) continue;
    const double d[2] = {dx, dy};
    const double seminorm = cache.probe_seminorm(p, d, gamma);
    if (!(seminorm > 0.0)) continue;
    img.values[static_cast<std::size_t>(p)] = mag2 / (xi_norm * seminorm);
  }
  img.vmin = img.values[0];
  img.vmax = img.values[0];
  for (double v : img.values) {
    img.vmin = std::min(img.vmin, v);
    img.vmax = std::max(img.vmax, v);
  }
  return img;
}

IndexImage fuse_images(std::span<const IndexImage> images) {
  if (images.empty()) throw std::invalid_argument("fuse_images: no images");
  const Index n = images[0].grid_n;
  IndexImage out;
  out.grid_n = n;
  out.values.assign(static_cast<std::size_t>(n * n), 0.0);
  for (const auto& img : images) {
    if (img.grid_n != n) throw std::invalid_argument("fuse_images: grid mismatch");
    const double scale = img.vmax > 0.0 ? 1.0 / img.vmax : 0.0;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += scale * img.values[i];
  }
  for (double& v : out.values) v /= static_cast<double>(images.size());
  out.vmin = out.values[0];
  out.vmax = out.values[0];
  for (double v : out.values) {
    out.vmin = std::min(out.vmin, v);
    out.vmax = std::max(out.vmax, v);
  }
  return out;
}

void export_image_csv(const IndexImage& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("export_image_csv: cannot open " + path);
  char buf[32];
  for (Index iy = 0; iy < image.grid_n; ++iy) {
    for (Index ix = 0; ix < image.grid_n; ++ix) {
      std::snprintf(buf, sizeof buf, "%.17g", image.at(iy, ix));
      out << buf << (ix + 1 == image.grid_n ? "" : ",");
    }
    out << "\n";
  }
}

void export_image_pgm(const IndexImage& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("export_image_pgm: cannot open " + path);
  out << "P5\n" << image.grid_n << " " << image.grid_n << "\n65535\n";
  const double range = image.vmax - image.vmin;
  for (Index iy = 0; iy < image.grid_n; ++iy)
    for (Index ix = 0; ix < image.grid_n; ++ix) {
      const double v = image.at(image.grid_n - 1 - iy, ix);  // top row first
      const double t = range > 0.0 ? (v - image.vmin) / range : 0.0;
      const auto s = static_cast<unsigned>(std::lround(t * 65535.0));
      out.put(static_cast<char>((s >> 8) & 0xff));
      out.put(static_cast<char>(s & 0xff));
    }
}

}  // namespace gfem
