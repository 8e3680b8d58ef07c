#pragma once

#include <string>
#include <vector>

#include "gammafem/feature.hpp"
#include "gammafem/flb.hpp"
#include "gammafem/system.hpp"

namespace gfem {

/// Shared state for index-function evaluation on a sampling grid: the dense
/// factor of the constrained background stiffness (factored exactly once)
/// and, per grid point, the spectral coefficients of the two unit-direction
/// probe traces. Probes for an arbitrary direction d follow by linearity,
/// eta_{x, d} = d_x * eta_{x, e1} + d_y * eta_{x, e2}, so no further solves
/// are needed per channel.
class ProbeCache {
 public:
  ProbeCache(const LagrangeSpace& space, const BoundarySpace& boundary, const SpectralBasis& basis,
             Index grid_n);

  const LagrangeSpace& space() const { return *space_; }
  const BoundarySpace& boundary() const { return *boundary_; }
  const SpectralBasis& basis() const { return *basis_; }
  const MeanZeroSolver& solver() const { return *solver_; }
  const PointLocator& locator() const { return *locator_; }
  Index grid_n() const { return grid_n_; }
  const DenseTensor& grid_points() const { return grid_points_; }  // [P, 2]
  Index factorization_count() const { return solver_->factorization_count(); }

  /// Weak dipole load d . grad v_r(x), dense over the space.
  std::vector<double> dipole_load(std::span<const double> x, std::span<const double> d) const;

  /// Probe solve with the cached factor; boundary mean is zero.
  std::vector<double> probe_eta(std::span<const double> x, std::span<const double> d) const;

  /// |trace(eta_{x_p, d})|_{H^gamma} from the cached coefficient rows.
  double probe_seminorm(Index grid_index, std::span<const double> d, double gamma) const;

 private:
  const LagrangeSpace* space_;
  const BoundarySpace* boundary_;
  const SpectralBasis* basis_;
  std::unique_ptr<MeanZeroSolver> solver_;
  std::unique_ptr<PointLocator> locator_;
  Index grid_n_;
  DenseTensor grid_points_;
  DenseTensor coeff_x_;  // [P, K0] spectral coefficients of trace eta_{x, e1}
  DenseTensor coeff_y_;  // [P, K0]
  CsrMatrix k_;
};

/// Data feature phi of one boundary channel: the single-channel forward map
/// (fractional load, mean-zero solve) against the cache's background
/// stiffness.
std::vector<double> data_feature(const ProbeCache& cache, std::span<const double> xi,
                                 double gamma);

struct IndexImage {
  Index grid_n = 0;
  std::vector<double> values;  // row-major, row iy from the bottom
  double vmin = 0.0;
  double vmax = 0.0;

  double at(Index iy, Index ix) const {
    return values[static_cast<std::size_t>(iy * grid_n + ix)];
  }
};

/// Classical index image of one channel: I(x) = |grad phi(x)|^2 /
/// (||xi|| * |eta_{x, grad phi(x)}|_{H^gamma}); points with
/// |grad phi| <= 1e-14 get 0.
IndexImage index_image(const ProbeCache& cache, std::span<const double> xi, double gamma);

/// Max-normalizes each image to [0, 1] and averages.
IndexImage fuse_images(std::span<const IndexImage> images);

/// Raw row-major CSV.
void export_image_csv(const IndexImage& image, const std::string& path);
/// 16-bit min-max normalized PGM (P5, big-endian samples).
void export_image_pgm(const IndexImage& image, const std::string& path);

}  // namespace gfem
