#include "gammafem/basis.hpp"

#include <algorithm>
#include <stdexcept>

namespace gfem {

namespace {

// Local edge pairs for the 2D P2 element.
constexpr Index kEdgePairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};

}  // namespace

ReferenceBasis::ReferenceBasis(Index dim, Index order) : dim_(dim), order_(order) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("ReferenceBasis: dim must be 1..3");
  if (order == 1) {
    count_ = dim + 1;
  } else if (order == 2 && dim == 1) {
    count_ = 3;
  } else if (order == 2 && dim == 2) {
    count_ = 6;
  } else {
    throw std::invalid_argument("ReferenceBasis: unsupported dim/order combination");
  }
}

DenseTensor ReferenceBasis::values(const DenseTensor& bary) const {
  if (bary.rank() != 2 || bary.extent(1) != dim_ + 1)
    throw std::invalid_argument("ReferenceBasis::values: points must be [Q, D+1]");
  const Index q = bary.extent(0);
  DenseTensor out({q, count_});
  for (Index p = 0; p < q; ++p) {
    const double* l = bary.data().data() + p * (dim_ + 1);
    if (order_ == 1) {
      for (Index b = 0; b <= dim_; ++b) out[p * count_ + b] = l[b];
    } else {
      for (Index b = 0; b <= dim_; ++b) out[p * count_ + b] = l[b] * (2.0 * l[b] - 1.0);
      if (dim_ == 1) {
        out[p * count_ + 2] = 4.0 * l[0] * l[1];
      } else {
        for (Index e = 0; e < 3; ++e)
          out[p * count_ + 3 + e] = 4.0 * l[kEdgePairs[e][0]] * l[kEdgePairs[e][1]];
      }
    }
  }
  return out;
}

DenseTensor ReferenceBasis::lambda_gradients(const DenseTensor& bary) const {
  if (bary.rank() != 2 || bary.extent(1) != dim_ + 1)
    throw std::invalid_argument("ReferenceBasis::lambda_gradients: points must be [Q, D+1]");
  const Index q = bary.extent(0);
  const Index nb = dim_ + 1;
  DenseTensor out({q, count_, nb});
  for (Index p = 0; p < q; ++p) {
    const double* l = bary.data().data() + p * nb;
    double* g = out.data().data() + p * count_ * nb;
    if (order_ == 1) {
      for (Index k = 0; k < count_; ++k)
        for (Index b = 0; b < nb; ++b) g[k * nb + b] = (k == b) ? 1.0 : 0.0;
    } else {
      for (Index k = 0; k <= dim_; ++k)
        for (Index b = 0; b < nb; ++b) g[k * nb + b] = (k == b) ? 4.0 * l[k] - 1.0 : 0.0;
      if (dim_ == 1) {
        g[2 * nb + 0] = 4.0 * l[1];
        g[2 * nb + 1] = 4.0 * l[0];
      } else {
        for (Index e = 0; e < 3; ++e) {
          const Index a = kEdgePairs[e][0];
          const Index b = kEdgePairs[e][1];
          for (Index c = 0; c < nb; ++c) g[(3 + e) * nb + c] = 0.0;
          g[(3 + e) * nb + a] = 4.0 * l[b];
          g[(3 + e) * nb + b] = 4.0 * l[a];
        }
      }
    }
  }
  return out;
}

DenseTensor ReferenceBasis::nodes() const {
  const Index nb = dim_ + 1;
  DenseTensor out({count_, nb});
  for (Index k = 0; k < std::min(count_, nb); ++k) out[k * nb + k] = 1.0;
  if (order_ == 2) {
    if (dim_ == 1) {
      out[2 * nb + 0] = 0.5;
      out[2 * nb + 1] = 0.5;
    } else {
      for (Index e = 0; e < 3; ++e) {
        out[(3 + e) * nb + kEdgePairs[e][0]] = 0.5;
        out[(3 + e) * nb + kEdgePairs[e][1]] = 0.5;
      }
    }
  }
  return out;
}

DenseTensor shape_gradients(const SimplicialMesh& mesh, const ReferenceBasis& basis,
                            const QuadratureRule& quad) {
  if (basis.dim() != mesh.dim || quad.dim != mesh.dim)
    throw std::invalid_argument("shape_gradients: dimension mismatch");
  const DenseTensor f = basis.lambda_gradients(quad.points);  // [Q, K, D+1]
  const DenseTensor j = barycentric_jacobians(mesh);          // [N, D+1, D]
  return contract("qkb,nbd->nqkd", f, j);
}

}  // namespace gfem
