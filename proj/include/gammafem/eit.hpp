#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "gammafem/feature.hpp"
#include "gammafem/flb.hpp"
#include "gammafem/system.hpp"

namespace gfem {

struct Circle {
  double cx = 0.0;
  double cy = 0.0;
  double r = 0.0;
};

/// Union-of-circles inclusion, always contained in [-0.9, 0.9]^2 by the
/// sampler's construction.
struct InclusionSet {
  std::vector<Circle> circles;

  bool contains(double x, double y) const {
    for (const auto& c : circles) {
      const double dx = x - c.cx, dy = y - c.cy;
      if (dx * dx + dy * dy <= c.r * c.r) return true;
    }
    return false;
  }
};

/// Centers uniform on (-0.8, 0.8)^2, radii uniform on (0.1, b_i) with
/// b_i = min(0.9 - |cx|, 0.9 - |cy|). Bit-reproducible per seed.
InclusionSet sample_inclusions(Index n_circles, std::uint64_t seed);

struct ConductivityField {
  std::vector<double> cell_sigma;  // one value per cell
  double sigma_inclusion = 10.0;
  double sigma_background = 1.0;
};

/// Cell takes the inclusion value iff its centroid lies in the union.
ConductivityField conductivity_from_inclusions(const SimplicialMesh& mesh,
                                               const InclusionSet& inclusions,
                                               double sigma_inclusion = 10.0,
                                               double sigma_background = 1.0);

/// Currents cos(l * theta) at the trace nodes, boundary-mean projected:
/// [L, n_bdof].
DenseTensor standard_currents(const BoundarySpace& boundary, std::span<const Index> labels);

enum class NoiseKind { None, Gaussian, LowFreq };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::None;
  double delta = 0.0;
  std::uint64_t seed = 0;
};

struct CauchyData {
  std::vector<Index> labels;
  DenseTensor g_neumann;    // [L, n_bdof]
  DenseTensor g_dirichlet;  // [L, n_bdof]
  NoiseSpec noise;
};

/// Forward Neumann solves with the sigma-weighted stiffness; the Dirichlet
/// data is the boundary trace of each mean-zero solution.
CauchyData forward_eit(const LagrangeSpace& space, const BoundarySpace& boundary,
                       const ConductivityField& field, const DenseTensor& currents,
                       std::vector<Index> labels, SolverBackend backend = SolverBackend::Auto,
                       CgOptions cg = {1e-12, 0, false});

/// Batched variant over several conductivity fields sharing the mesh: one
/// batched stiffness assembly, then per-plane solves.
std::vector<CauchyData> forward_eit_batched(const LagrangeSpace& space,
                                            const BoundarySpace& boundary,
                                            std::span<const ConductivityField> fields,
                                            const DenseTensor& currents, std::vector<Index> labels,
                                            CgOptions cg = {1e-12, 0, false});

/// Measurement noise on the Dirichlet data only. Gaussian: u + delta*(G u);
/// low-frequency: u + delta * L^{-0.75}(G u) through the spectral basis.
CauchyData add_noise(const CauchyData& data, double delta, NoiseKind kind, std::uint64_t seed,
                     const SpectralBasis* basis);

/// xi_l = g_{N,l} - DtN(g_{D,l}), boundary-mean projected.
BoundaryChannelSet compute_xi(const CauchyData& data, const BackgroundDtn& dtn,
                              const BoundarySpace& boundary);

/// Ground-truth indicator sampled at pixel centers of an n x n grid over
/// [-1, 1]^2; row i is the i-th y level from the bottom.
DenseTensor characteristic_image(const InclusionSet& inclusions, Index grid_n);

/// Data generation against a once-refined forward mesh (inverse-crime
/// control): currents live on the fine boundary, the Cauchy pair is
/// restricted to the reconstruction boundary by node injection, then the
/// restricted Neumann data is re-projected to zero coarse mean.
class EitGenerator {
 public:
  EitGenerator(const SimplicialMesh& recon_mesh, const BoundarySpace& recon_boundary,
               Index data_refine, std::vector<Index> labels, CgOptions cg = {1e-12, 0, false});

  const SimplicialMesh& data_mesh() const { return data_mesh_; }
  const BoundarySpace& data_boundary() const { return *data_boundary_; }
  const std::vector<Index>& labels() const { return labels_; }

  struct Sample {
    InclusionSet inclusions;
    CauchyData data;  // on the reconstruction boundary
  };

  Sample generate(std::uint64_t seed, Index n_circles, double sigma_inclusion,
                  double sigma_background) const;

  /// Forward-solve an explicit inclusion set (used by tests and sweeps).
  CauchyData solve_inclusions(const InclusionSet& inclusions, double sigma_inclusion,
                              double sigma_background) const;

 private:
  const BoundarySpace* recon_boundary_;
  SimplicialMesh data_mesh_;
  std::unique_ptr<LagrangeSpace> data_space_;
  std::unique_ptr<BoundarySpace> data_boundary_;
  std::vector<Index> labels_;
  DenseTensor data_currents_;          // [L, n_bdof_fine], projected
  std::vector<Index> coarse_to_fine_;  // recon trace index -> data trace index
  CgOptions cg_;
};

}  // namespace gfem
