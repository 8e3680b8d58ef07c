#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gammafem/basis.hpp"
#include "gammafem/mesh.hpp"
#include "gammafem/quadrature.hpp"
#include "gammafem/rng.hpp"
#include "gammafem/space.hpp"

using namespace gfem;

namespace {

constexpr double kPi = std::numbers::pi;

SimplicialMesh unit_square_mesh(Index n) {
  const double lo[2] = {0.0, 0.0}, hi[2] = {1.0, 1.0};
  return uniform_mesh(2, n, lo, hi);
}

double factorial(Index n) {
  double f = 1.0;
  for (Index i = 2; i <= n; ++i) f *= static_cast<double>(i);
  return f;
}

// Exact integral of x^a y^b over the unit triangle, and x^a y^b z^c over the
// unit tetrahedron.
double tri_monomial(Index a, Index b) {
  return factorial(a) * factorial(b) / factorial(a + b + 2);
}
double tet_monomial(Index a, Index b, Index c) {
  return factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3);
}

}  // namespace

TEST_CASE("uniform_mesh: D=2 n=1 gives 4 nodes and 2 cells") {
  const auto mesh = unit_square_mesh(1);
  CHECK(mesh.num_nodes() == 4);
  CHECK(mesh.num_cells() == 2);
  mesh.validate();
}

TEST_CASE("uniform_mesh: P1/P2 DoF counts match the reference table") {
  const auto mesh = unit_square_mesh(128);
  const LagrangeSpace p1(mesh, 1);
  CHECK(p1.ndof() == 16641);

  const auto mesh512 = unit_square_mesh(512);
  const LagrangeSpace p2(mesh512, 2);
  CHECK(p2.ndof() == 1050625);
}

TEST_CASE("uniform_mesh: degenerate box rejected") {
  const double lo[2] = {0.0, 0.0}, hi[2] = {0.0, 1.0};
  CHECK_THROWS(uniform_mesh(2, 4, lo, hi));
}

TEST_CASE("barycentric_jacobians: reference triangle gradients") {
  SimplicialMesh mesh;
  mesh.dim = 2;
  mesh.embed_dim = 2;
  mesh.nodes = DenseTensor({3, 2}, {0, 0, 1, 0, 0, 1});
  mesh.cells = {0, 1, 2};
  const auto j = barycentric_jacobians(mesh);
  CHECK(j.at({0, 0, 0}) == doctest::Approx(-1.0));
  CHECK(j.at({0, 0, 1}) == doctest::Approx(-1.0));
  CHECK(j.at({0, 1, 0}) == doctest::Approx(1.0));
  CHECK(j.at({0, 1, 1}) == doctest::Approx(0.0));
  CHECK(j.at({0, 2, 0}) == doctest::Approx(0.0));
  CHECK(j.at({0, 2, 1}) == doctest::Approx(1.0));
}

TEST_CASE("barycentric_jacobians: scaling a cell by s scales J by 1/s") {
  Rng rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    SimplicialMesh mesh;
    mesh.dim = 2;
    mesh.embed_dim = 2;
    // Random counterclockwise triangle.
    double pts[6];
    do {
      for (auto& p : pts) p = rng.uniform(-1, 1);
    } while ((pts[2] - pts[0]) * (pts[5] - pts[1]) - (pts[3] - pts[1]) * (pts[4] - pts[0]) < 0.1);
    mesh.nodes = DenseTensor({3, 2}, std::vector<double>(pts, pts + 6));
    mesh.cells = {0, 1, 2};
    const auto j1 = barycentric_jacobians(mesh);

    const double s = 3.7;
    for (auto& p : pts) p *= s;
    mesh.nodes = DenseTensor({3, 2}, std::vector<double>(pts, pts + 6));
    const auto j2 = barycentric_jacobians(mesh);
    for (Index i = 0; i < j1.size(); ++i)
      CHECK(j2[i] == doctest::Approx(j1[i] / s).epsilon(1e-12));
  }
}

TEST_CASE("barycentric_jacobians: affine reconstruction lambda_b(v_c) = delta") {
  Rng rng(9);
  SimplicialMesh mesh;
  mesh.dim = 2;
  mesh.embed_dim = 2;
  double pts[6];
  do {
    for (auto& p : pts) p = rng.uniform(-2, 2);
  } while ((pts[2] - pts[0]) * (pts[5] - pts[1]) - (pts[3] - pts[1]) * (pts[4] - pts[0]) < 0.2);
  mesh.nodes = DenseTensor({3, 2}, std::vector<double>(pts, pts + 6));
  mesh.cells = {0, 1, 2};
  const auto j = barycentric_jacobians(mesh);

  for (Index c = 0; c < 3; ++c) {
    for (Index b = 0; b < 3; ++b) {
      // lambda_b(x) = delta_{b0} + J_b . (x - v0)
      double lam = (b == 0) ? 1.0 : 0.0;
      for (Index d = 0; d < 2; ++d)
        lam += j.at({0, b, d}) * (mesh.node_coord(c, d) - mesh.node_coord(0, d));
      CHECK(std::abs(lam - (b == c ? 1.0 : 0.0)) <= 1e-12);
    }
  }
}

TEST_CASE("barycentric_jacobians: rows sum to zero") {
  const double lo[3] = {0, 0, 0}, hi[3] = {1, 1, 1};
  for (Index dim = 2; dim <= 3; ++dim) {
    const auto mesh = uniform_mesh(dim, 3, lo, hi);
    const auto j = barycentric_jacobians(mesh);
    for (Index c = 0; c < mesh.num_cells(); ++c)
      for (Index d = 0; d < dim; ++d) {
        double s = 0.0;
        for (Index b = 0; b <= dim; ++b) s += j.at({c, b, d});
        CHECK(std::abs(s) <= 1e-12);
      }
  }
}

TEST_CASE("cell_measures: unit square halves, unit cube total, affine scaling") {
  const auto mesh = unit_square_mesh(1);
  const auto m2 = cell_measures(mesh);
  CHECK(m2[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(m2[1] == doctest::Approx(0.5).epsilon(1e-14));

  const double lo[3] = {0, 0, 0}, hi[3] = {1, 1, 1};
  const auto cube = uniform_mesh(3, 2, lo, hi);
  const auto m3 = cell_measures(cube);
  double total = 0.0;
  for (double v : m3) {
    CHECK(v > 0.0);
    total += v;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  // Affine map x -> A x scales measures by |det A|.
  SimplicialMesh tri;
  tri.dim = 2;
  tri.embed_dim = 2;
  tri.nodes = DenseTensor({3, 2}, {0, 0, 1, 0, 0, 1});
  tri.cells = {0, 1, 2};
  const double a[2][2] = {{2.0, 0.3}, {-0.4, 1.5}};
  const double det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
  SimplicialMesh mapped = tri;
  for (Index v = 0; v < 3; ++v) {
    const double x = tri.node_coord(v, 0), y = tri.node_coord(v, 1);
    mapped.nodes[v * 2 + 0] = a[0][0] * x + a[0][1] * y;
    mapped.nodes[v * 2 + 1] = a[1][0] * x + a[1][1] * y;
  }
  CHECK(cell_measures(mapped)[0] == doctest::Approx(0.5 * det).epsilon(1e-13));
}

TEST_CASE("uniform_refine: counts, prefix stability, measure preservation") {
  const double lo[1] = {0.0}, hi[1] = {1.0};
  const auto seg = uniform_mesh(1, 1, lo, hi);
  const auto seg4 = uniform_refine(seg, 2);
  CHECK(seg4.num_cells() == 4);

  const auto sq = unit_square_mesh(1);
  const auto sq1 = uniform_refine(sq, 1);
  CHECK(sq1.num_cells() == 8);

  // Parent nodes are a prefix of child nodes.
  for (Index v = 0; v < sq.num_nodes(); ++v)
    for (Index d = 0; d < 2; ++d) CHECK(sq1.node_coord(v, d) == sq.node_coord(v, d));

  const auto m0 = cell_measures(sq);
  const auto m1 = cell_measures(sq1);
  double t0 = 0.0, t1 = 0.0;
  for (double v : m0) t0 += v;
  for (double v : m1) t1 += v;
  CHECK(t1 == doctest::Approx(t0).epsilon(1e-12));
}

TEST_CASE("boundary_trace_mesh: square boundary walk") {
  const double lo[2] = {-1.0, -1.0}, hi[2] = {1.0, 1.0};
  const auto mesh = uniform_mesh(2, 2, lo, hi);
  const auto trace = boundary_trace_mesh(mesh);
  CHECK(trace.curve.num_nodes() == 8);
  CHECK(trace.perimeter == doctest::Approx(8.0).epsilon(1e-12));

  // Starts at the most negative corner, walks counterclockwise.
  CHECK(trace.curve.node_coord(0, 0) == doctest::Approx(-1.0));
  CHECK(trace.curve.node_coord(0, 1) == doctest::Approx(-1.0));
  CHECK(trace.curve.node_coord(1, 1) == doctest::Approx(-1.0));  // moves along y = -1
  CHECK(trace.curve.node_coord(1, 0) > -1.0);

  // theta at (1, 0) is 0, at (0, 1) is pi/2.
  for (Index i = 0; i < trace.curve.num_nodes(); ++i) {
    const double x = trace.curve.node_coord(i, 0);
    const double y = trace.curve.node_coord(i, 1);
    if (x == 1.0 && y == 0.0) CHECK(trace.theta[i] == doctest::Approx(0.0));
    if (x == 0.0 && y == 1.0) CHECK(trace.theta[i] == doctest::Approx(kPi / 2));
  }

  // Arclength of the full loop equals the perimeter.
  const Index last = trace.curve.num_nodes() - 1;
  const double closing = std::hypot(trace.curve.node_coord(last, 0) - trace.curve.node_coord(0, 0),
                                    trace.curve.node_coord(last, 1) - trace.curve.node_coord(0, 1));
  CHECK(trace.arclength[last] + closing == doctest::Approx(trace.perimeter).epsilon(1e-12));

  // Each trace node has exactly two incident curve cells.
  std::vector<int> incident(trace.curve.num_nodes(), 0);
  for (Index c = 0; c < trace.curve.num_cells(); ++c) {
    incident[trace.curve.cell_vertex(c, 0)]++;
    incident[trace.curve.cell_vertex(c, 1)]++;
  }
  for (int cnt : incident) CHECK(cnt == 2);
}

TEST_CASE("quadrature: monomial exactness against closed-form integrals") {
  for (Index degree = 1; degree <= 7; ++degree) {
    const auto rule = simplex_quadrature(2, degree);
    for (Index a = 0; a + 0 <= degree; ++a)
      for (Index b = 0; a + b <= degree; ++b) {
        double acc = 0.0;
        for (Index q = 0; q < rule.count(); ++q) {
          const double x = rule.points.at({q, 1});
          const double y = rule.points.at({q, 2});
          acc += rule.weights[q] * std::pow(x, a) * std::pow(y, b);
        }
        // Weights sum to 1; the reference triangle has area 1/2.
        const double exact = tri_monomial(a, b) / 0.5;
        CHECK(std::abs(acc - exact) <= 1e-13);
      }
  }
  for (Index degree = 1; degree <= 5; ++degree) {
    const auto rule = simplex_quadrature(3, degree);
    for (Index a = 0; a <= degree; ++a)
      for (Index b = 0; a + b <= degree; ++b)
        for (Index c = 0; a + b + c <= degree; ++c) {
          double acc = 0.0;
          for (Index q = 0; q < rule.count(); ++q) {
            const double x = rule.points.at({q, 1});
            const double y = rule.points.at({q, 2});
            const double z = rule.points.at({q, 3});
            acc += rule.weights[q] * std::pow(x, a) * std::pow(y, b) * std::pow(z, c);
          }
          const double exact = tet_monomial(a, b, c) / (1.0 / 6.0);
          CHECK(std::abs(acc - exact) <= 1e-13);
        }
  }
  for (Index degree = 1; degree <= 9; ++degree) {
    const auto rule = simplex_quadrature(1, degree);
    for (Index a = 0; a <= degree; ++a) {
      double acc = 0.0;
      for (Index q = 0; q < rule.count(); ++q)
        acc += rule.weights[q] * std::pow(rule.points.at({q, 1}), a);
      CHECK(std::abs(acc - 1.0 / static_cast<double>(a + 1)) <= 1e-13);
    }
  }
}

TEST_CASE("quadrature: barycentric points sum to 1 and are nonnegative") {
  for (Index dim = 1; dim <= 3; ++dim) {
    const auto rule = simplex_quadrature(dim, 5);
    double wsum = 0.0;
    for (Index q = 0; q < rule.count(); ++q) {
      double s = 0.0;
      for (Index b = 0; b <= dim; ++b) {
        const double l = rule.points.at({q, b});
        CHECK(l >= 0.0);
        CHECK(l <= 1.0);
        s += l;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
      wsum += rule.weights[q];
    }
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("ReferenceBasis: partition of unity and Kronecker property") {
  Rng rng(41);
  for (Index dim = 1; dim <= 2; ++dim) {
    for (Index order = 1; order <= 2; ++order) {
      const ReferenceBasis basis(dim, order);
      // Random barycentric points.
      const Index q = 100;
      DenseTensor pts({q, dim + 1});
      for (Index p = 0; p < q; ++p) {
        double s = 0.0;
        for (Index b = 0; b <= dim; ++b) {
          const double v = rng.uniform(0.01, 1.0);
          pts.at({p, b}) = v;
          s += v;
        }
        for (Index b = 0; b <= dim; ++b) pts.at({p, b}) /= s;
      }
      const auto vals = basis.values(pts);
      for (Index p = 0; p < q; ++p) {
        double s = 0.0;
        for (Index k = 0; k < basis.count(); ++k) s += vals.at({p, k});
        CHECK(std::abs(s - 1.0) <= 1e-13);
      }
      // The k-sum of df_k/dlambda_b is constant across b (so the physical
      // gradients of the partition of unity cancel after the chain rule).
      // For P1 the constant is 1; for P2, d/dlambda_b of 2(sum lambda)^2 -
      // sum lambda is 4 - 1 = 3 on the simplex.
      const auto grads = basis.lambda_gradients(pts);
      for (Index p = 0; p < q; ++p)
        for (Index b = 0; b <= dim; ++b) {
          double s = 0.0;
          for (Index k = 0; k < basis.count(); ++k) s += grads.at({p, k, b});
          const double expect = (order == 1) ? 1.0 : 3.0;
          CHECK(std::abs(s - expect) <= 1e-12);
        }
      // Kronecker property at the Lagrange nodes.
      const auto nodal = basis.values(basis.nodes());
      for (Index i = 0; i < basis.count(); ++i)
        for (Index k = 0; k < basis.count(); ++k)
          CHECK(std::abs(nodal.at({i, k}) - (i == k ? 1.0 : 0.0)) <= 1e-14);
    }
  }
}

TEST_CASE("shape_gradients: P1 reference triangle constants at every point") {
  SimplicialMesh mesh;
  mesh.dim = 2;
  mesh.embed_dim = 2;
  mesh.nodes = DenseTensor({3, 2}, {0, 0, 1, 0, 0, 1});
  mesh.cells = {0, 1, 2};
  const ReferenceBasis basis(2, 1);
  const auto quad = simplex_quadrature(2, 2);
  const auto phi = shape_gradients(mesh, basis, quad);
  const double expect[3][2] = {{-1, -1}, {1, 0}, {0, 1}};
  for (Index q = 0; q < quad.count(); ++q)
    for (Index k = 0; k < 3; ++k)
      for (Index d = 0; d < 2; ++d)
        CHECK(phi.at({0, q, k, d}) == doctest::Approx(expect[k][d]).epsilon(1e-13));
}

TEST_CASE("shape_gradients: partition-of-unity gradients sum to zero over k") {
  const auto mesh = unit_square_mesh(3);
  for (Index order = 1; order <= 2; ++order) {
    const ReferenceBasis basis(2, order);
    const auto quad = simplex_quadrature(2, 2 * order);
    const auto phi = shape_gradients(mesh, basis, quad);
    for (Index n = 0; n < mesh.num_cells(); ++n)
      for (Index q = 0; q < quad.count(); ++q)
        for (Index d = 0; d < 2; ++d) {
          double s = 0.0;
          for (Index k = 0; k < basis.count(); ++k) s += phi.at({n, q, k, d});
          CHECK(std::abs(s) <= 1e-12);
        }
  }
}

TEST_CASE("shape_gradients: P2 matches central finite differences") {
  // One skewed triangle; compare the gradient of x -> f_k(lambda(x)) at the
  // centroid with central differences.
  SimplicialMesh mesh;
  mesh.dim = 2;
  mesh.embed_dim = 2;
  mesh.nodes = DenseTensor({3, 2}, {0.1, -0.2, 1.3, 0.4, 0.2, 1.1});
  mesh.cells = {0, 1, 2};
  const ReferenceBasis basis(2, 2);

  DenseTensor centroid({1, 3}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  QuadratureRule fake;
  fake.dim = 2;
  fake.degree = 1;
  fake.points = centroid;
  fake.weights = {1.0};
  const auto phi = shape_gradients(mesh, basis, fake);

  const auto j = barycentric_jacobians(mesh);
  const double cx = (0.1 + 1.3 + 0.2) / 3.0;
  const double cy = (-0.2 + 0.4 + 1.1) / 3.0;
  const double h = 1e-6;

  auto lambda_at = [&](double x, double y, Index b) {
    double lam = (b == 0) ? 1.0 : 0.0;
    lam += j.at({0, b, 0}) * (x - 0.1);
    lam += j.at({0, b, 1}) * (y - (-0.2));
    return lam;
  };
  auto basis_at = [&](double x, double y, Index k) {
    DenseTensor pt({1, 3});
    for (Index b = 0; b < 3; ++b) pt.at({0, b}) = lambda_at(x, y, b);
    return basis.values(pt).at({0, k});
  };

  for (Index k = 0; k < 6; ++k) {
    const double fdx = (basis_at(cx + h, cy, k) - basis_at(cx - h, cy, k)) / (2 * h);
    const double fdy = (basis_at(cx, cy + h, k) - basis_at(cx, cy - h, k)) / (2 * h);
    CHECK(std::abs(phi.at({0, 0, k, 0}) - fdx) <= 1e-7);
    CHECK(std::abs(phi.at({0, 0, k, 1}) - fdy) <= 1e-7);
  }
}

TEST_CASE("LagrangeSpace: boundary DoFs lie on the geometric boundary") {
  const double lo[2] = {-1, -1}, hi[2] = {1, 1};
  const auto mesh = uniform_mesh(2, 4, lo, hi);
  for (Index order = 1; order <= 2; ++order) {
    const LagrangeSpace space(mesh, order);
    CHECK(!space.boundary_dofs().empty());
    for (Index d : space.boundary_dofs()) {
      // P1 boundary DoFs are nodes; for P2 edge DoFs sit at edge midpoints,
      // which we recover by locating the owning edge.
      if (d < mesh.num_nodes()) {
        const double x = mesh.node_coord(d, 0), y = mesh.node_coord(d, 1);
        const bool on = std::abs(std::abs(x) - 1) <= 1e-12 || std::abs(std::abs(y) - 1) <= 1e-12;
        CHECK(on);
      }
    }
  }
}

TEST_CASE("boundary trace of a refined square stays on the square") {
  const double lo[2] = {-1, -1}, hi[2] = {1, 1};
  const auto mesh = uniform_mesh(2, 4, lo, hi);
  const auto trace = boundary_trace_mesh(mesh);
  const auto fine = uniform_refine(trace.curve, 2);
  CHECK(fine.num_nodes() == 4 * trace.curve.num_nodes());
  for (Index v = 0; v < fine.num_nodes(); ++v) {
    const double x = fine.node_coord(v, 0), y = fine.node_coord(v, 1);
    const bool on = std::abs(std::abs(x) - 1) <= 1e-12 || std::abs(std::abs(y) - 1) <= 1e-12;
    CHECK(on);
  }
  // Coarse nodes are a prefix.
  for (Index v = 0; v < trace.curve.num_nodes(); ++v)
    for (Index d = 0; d < 2; ++d) CHECK(fine.node_coord(v, d) == trace.curve.node_coord(v, d));
}
