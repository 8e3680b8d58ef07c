#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "gammafem/space.hpp"

namespace gfem {

using ScalarField = std::function<double(std::span<const double> x)>;
using BatchedScalarField = std::function<double(Index l, std::span<const double> x)>;
using BoundaryField =
    std::function<double(std::span<const double> x, std::span<const double> normal)>;
using BatchedBoundaryField =
    std::function<double(Index l, std::span<const double> x, std::span<const double> normal)>;
using CellPredicate = std::function<bool(std::span<const double> centroid)>;

struct AssemblyOptions {
  Index quad_degree = -1;  // -1 picks 2p (stiffness/mass) or 2p+2 (loads)
};

/// Physical coordinates of quadrature points: [N, Q, E].
DenseTensor physical_points(const SimplicialMesh& mesh, const DenseTensor& bary);

/// Diffusion stiffness with constant coefficient.
CsrMatrix assemble_stiffness(const LagrangeSpace& space, double coef = 1.0,
                             const AssemblyOptions& opts = {});

/// Diffusion stiffness with a tensor coefficient: [N] or [N, Q] when
/// batched == false, [B, N] or [B, N, Q] when batched == true (the batched
/// result carries [B, nnz] value planes over one sparsity pattern).
CsrMatrix assemble_stiffness(const LagrangeSpace& space, const DenseTensor& coef, bool batched,
                             const AssemblyOptions& opts = {});

enum class MassDomain { Full, Boundary };

CsrMatrix assemble_mass(const LagrangeSpace& space, MassDomain domain,
                        const AssemblyOptions& opts = {});

struct SubdomainMass {
  CsrMatrix matrix;
  Index cells = 0;   // contributing cells (centroid rule)
  bool empty = false;
};

SubdomainMass assemble_mass_subdomain(const LagrangeSpace& space, const CellPredicate& inside,
                                      const AssemblyOptions& opts = {});

std::vector<double> assemble_volume_load(const LagrangeSpace& space, const ScalarField& f,
                                         const AssemblyOptions& opts = {});

DenseTensor assemble_volume_load_batched(const LagrangeSpace& space, Index channels,
                                         const BatchedScalarField& f,
                                         const AssemblyOptions& opts = {});

std::vector<double> assemble_neumann_load(const LagrangeSpace& space, const BoundaryField& g,
                                          const AssemblyOptions& opts = {});

DenseTensor assemble_neumann_load_batched(const LagrangeSpace& space, Index channels,
                                          const BatchedBoundaryField& g,
                                          const AssemblyOptions& opts = {});

/// Neumann load columns of nodal channel data: row l is the parent-space
/// load of channel l. 2D P1 spaces only (trace-space route).
DenseTensor assemble_channel_loads(const LagrangeSpace& space, const BoundaryChannelSet& channels);

/// w with w . u = integral of u over the boundary (the Neumann load of 1).
std::vector<double> boundary_weights(const LagrangeSpace& space);

/// L2 and H1-seminorm errors of a coefficient vector against a smooth field.
struct ErrorNorms {
  double l2 = 0.0;
  double h1_semi = 0.0;
};
ErrorNorms error_norms(const LagrangeSpace& space, std::span<const double> u,
                       const ScalarField& exact,
                       const std::function<void(std::span<const double>, std::span<double>)>&
                           exact_gradient = nullptr,
                       Index quad_degree = -1);

// ---------------------------------------------------------------------------
// Form/integrator layer: forms collect integrators and assemble in one pass,
// concatenating the element contributions before the CSR conversion.

struct ScalarDiffusionIntegrator {
  double constant = 1.0;
  std::optional<DenseTensor> coef;
  bool batched = false;
  Index quad_degree = -1;
};

struct ScalarMassIntegrator {
  MassDomain domain = MassDomain::Full;
  CellPredicate subdomain;  // used when set; overrides domain
  Index quad_degree = -1;
};

class BilinearForm {
 public:
  explicit BilinearForm(const LagrangeSpace& space, Index batch_size = 0)
      : space_(&space), batch_size_(batch_size) {}
  void add_integrator(ScalarDiffusionIntegrator integ);
  void add_integrator(ScalarMassIntegrator integ);
  CsrMatrix assemble() const;

 private:
  const LagrangeSpace* space_;
  Index batch_size_;
  std::vector<ScalarDiffusionIntegrator> diffusion_;
  std::vector<ScalarMassIntegrator> mass_;
};

struct ScalarSourceIntegrator {
  ScalarField f;
  BatchedScalarField batched_f;
  bool batched = false;
  Index quad_degree = -1;
};

struct ScalarNeumannIntegrator {
  BoundaryField g;
  BatchedBoundaryField batched_g;
  bool batched = false;
  Index quad_degree = -1;
};

struct ChannelNeumannIntegrator {
  const BoundaryChannelSet* channels = nullptr;
};

class LinearForm {
 public:
  explicit LinearForm(const LagrangeSpace& space, Index batch_size = 0)
      : space_(&space), batch_size_(batch_size) {}
  void add_integrator(ScalarSourceIntegrator integ);
  void add_integrator(ScalarNeumannIntegrator integ);
  void add_integrator(ChannelNeumannIntegrator integ);
  /// [L, ndof]; L = 1 when unbatched.
  DenseTensor assemble() const;

 private:
  const LagrangeSpace* space_;
  Index batch_size_;
  std::vector<ScalarSourceIntegrator> sources_;
  std::vector<ScalarNeumannIntegrator> neumann_;
  std::vector<ChannelNeumannIntegrator> channels_;
};

}  // namespace gfem
