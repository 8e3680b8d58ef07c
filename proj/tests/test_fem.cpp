#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gammafem/forms.hpp"
#include "gammafem/rng.hpp"
#include "gammafem/system.hpp"

using namespace gfem;

namespace {

constexpr double kPi = std::numbers::pi;

SimplicialMesh square_mesh(Index n, double lo_v = -1.0, double hi_v = 1.0) {
  const double lo[2] = {lo_v, lo_v}, hi[2] = {hi_v, hi_v};
  return uniform_mesh(2, n, lo, hi);
}

// Deterministically jiggled interior nodes, for tests wanting irregular cells.
SimplicialMesh jiggled_mesh(Index n, double amp = 0.2) {
  auto mesh = square_mesh(n, 0.0, 1.0);
  Rng rng(12345);
  const double h = 1.0 / static_cast<double>(n);
  for (Index v = 0; v < mesh.num_nodes(); ++v) {
    const double x = mesh.node_coord(v, 0), y = mesh.node_coord(v, 1);
    const bool interior = x > 1e-12 && x < 1 - 1e-12 && y > 1e-12 && y < 1 - 1e-12;
    const double dx = rng.uniform(-amp * h, amp * h);
    const double dy = rng.uniform(-amp * h, amp * h);
    if (interior) {
      mesh.nodes[v * 2 + 0] = x + dx;
      mesh.nodes[v * 2 + 1] = y + dy;
    }
  }
  return mesh;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("assemble_stiffness: textbook stencil on the two-triangle unit square") {
  const auto mesh = square_mesh(1, 0.0, 1.0);
  const LagrangeSpace space(mesh, 1);
  const auto k = assemble_stiffness(space, 1.0);

  // Hand assembly: unit diagonal, -1/2 on edges, 0 across both diagonals of
  // the square (node order: (0,0), (1,0), (0,1), (1,1)).
  const double expect[4][4] = {{1.0, -0.5, -0.5, 0.0},
                               {-0.5, 1.0, 0.0, -0.5},
                               {-0.5, 0.0, 1.0, -0.5},
                               {0.0, -0.5, -0.5, 1.0}};
  for (Index r = 0; r < 4; ++r)
    for (Index c = 0; c < 4; ++c)
      CHECK(k.value_at(r, c) == doctest::Approx(expect[r][c]).epsilon(1e-13));
}

TEST_CASE("assemble_stiffness: zero row sums and symmetry on an irregular mesh") {
  const auto mesh = jiggled_mesh(6);
  for (Index order = 1; order <= 2; ++order) {
    const LagrangeSpace space(mesh, order);
    const auto k = assemble_stiffness(space, 1.0);
    CHECK(k.symmetry_error() <= 1e-13);
    for (double s : k.row_sums()) CHECK(std::abs(s) <= 1e-13);
  }
}

TEST_CASE("assemble_stiffness: batched coefficient equals separate assemblies") {
  const auto mesh = square_mesh(4, 0.0, 1.0);
  const LagrangeSpace space(mesh, 1);
  const Index b = 3, n = mesh.num_cells();
  Rng rng(77);
  DenseTensor coef({b, n});
  for (Index i = 0; i < coef.size(); ++i) coef[i] = rng.uniform(0.5, 3.0);

  const auto batched = assemble_stiffness(space, coef, true);
  CHECK(batched.batch() == b);
  for (Index p = 0; p < b; ++p) {
    DenseTensor single({n});
    for (Index i = 0; i < n; ++i) single[i] = coef[p * n + i];
    const auto want = assemble_stiffness(space, single, false);
    REQUIRE(want.nnz() == batched.nnz());
    const auto got = batched.values(p);
    const auto ref = want.values(0);
    for (Index i = 0; i < want.nnz(); ++i) CHECK(std::abs(got[i] - ref[i]) <= 1e-14);
  }
}

TEST_CASE("assemble_stiffness: nonpositive coefficient rejected") {
  const auto mesh = square_mesh(2, 0.0, 1.0);
  const LagrangeSpace space(mesh, 1);
  DenseTensor coef({mesh.num_cells()});
  for (Index i = 0; i < coef.size(); ++i) coef[i] = 1.0;
  coef[3] = 0.0;
  CHECK_THROWS(assemble_stiffness(space, coef, false));
  CHECK_THROWS(assemble_stiffness(space, -1.0));
}

TEST_CASE("assemble_mass: exact P1 segment mass") {
  const double lo[1] = {0.0}, hi[1] = {1.0};
  const auto seg = uniform_mesh(1, 1, lo, hi);
  const LagrangeSpace space(seg, 1);
  const auto m = assemble_mass(space, MassDomain::Full);
  CHECK(m.value_at(0, 0) == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(m.value_at(0, 1) == doctest::Approx(1.0 / 6).epsilon(1e-14));
  CHECK(m.value_at(1, 0) == doctest::Approx(1.0 / 6).epsilon(1e-14));
  CHECK(m.value_at(1, 1) == doctest::Approx(1.0 / 3).epsilon(1e-14));
}

TEST_CASE("assemble_mass: total mass equals the domain measure") {
  const auto mesh = square_mesh(5, 0.0, 1.0);
  for (Index order = 1; order <= 2; ++order) {
    const LagrangeSpace space(mesh, order);
    const auto m = assemble_mass(space, MassDomain::Full);
    double total = 0.0;
    for (double s : m.row_sums()) total += s;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    const auto mb = assemble_mass(space, MassDomain::Boundary);
    double btotal = 0.0;
    for (double s : mb.row_sums()) btotal += s;
    CHECK(btotal == doctest::Approx(4.0).epsilon(1e-12));
  }
}

TEST_CASE("assemble_mass_subdomain: centroid rule captures the inner box") {
  const auto mesh = square_mesh(16);
  const LagrangeSpace space(mesh, 1);
  const auto sub = assemble_mass_subdomain(space, [](std::span<const double> c) {
    return std::abs(c[0]) < 0.5 && std::abs(c[1]) < 0.5;
  });
  CHECK(!sub.empty);
  double total = 0.0;
  for (double s : sub.matrix.row_sums()) total += s;
  // Within one element layer of the exact area 1.
  const double h = 2.0 / 16;
  CHECK(std::abs(total - 1.0) <= 4.0 * 2.0 * h);

  const auto none = assemble_mass_subdomain(space, [](std::span<const double>) { return false; });
  CHECK(none.empty);
  double zero = 0.0;
  for (double s : none.matrix.row_sums()) zero += std::abs(s);
  CHECK(zero == 0.0);
}

TEST_CASE("loads: constant source integrates to the area, g=1 to the perimeter") {
  const auto mesh = square_mesh(6, 0.0, 1.0);
  for (Index order = 1; order <= 2; ++order) {
    const LagrangeSpace space(mesh, order);
    const auto f = assemble_volume_load(space, [](std::span<const double>) { return 1.0; });
    double s = 0.0;
    for (double v : f) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

    const auto g = assemble_neumann_load(
        space, [](std::span<const double>, std::span<const double>) { return 1.0; });
    double p = 0.0;
    for (double v : g) p += v;
    CHECK(p == doctest::Approx(4.0).epsilon(1e-12));
  }
}

TEST_CASE("loads: batched equals per-channel loop") {
  const auto mesh = square_mesh(4, 0.0, 1.0);
  const LagrangeSpace space(mesh, 1);
  const Index l_count = 10;
  auto field = [](Index l, std::span<const double> x) {
    return std::cos((1.0 + static_cast<double>(l)) * x[0]) + x[1];
  };
  const auto batched = assemble_volume_load_batched(space, l_count, field);
  for (Index l = 0; l < l_count; ++l) {
    const auto single =
        assemble_volume_load(space, [&](std::span<const double> x) { return field(l, x); });
    for (Index i = 0; i < space.ndof(); ++i)
      CHECK(std::abs(batched[l * space.ndof() + i] - single[i]) <= 1e-14);
  }

  auto bfield = [](Index l, std::span<const double> x, std::span<const double>) {
    return std::sin(static_cast<double>(l + 1) * x[0] + x[1]);
  };
  const auto bn = assemble_neumann_load_batched(space, l_count, bfield);
  for (Index l = 0; l < l_count; ++l) {
    const auto single = assemble_neumann_load(
        space, [&](std::span<const double> x, std::span<const double> n) { return bfield(l, x, n); });
    for (Index i = 0; i < space.ndof(); ++i)
      CHECK(std::abs(bn[l * space.ndof() + i] - single[i]) <= 1e-14);
  }
}

TEST_CASE("MeanZeroSolver: zero load gives the zero solution") {
  const auto mesh = square_mesh(4);
  const LagrangeSpace space(mesh, 1);
  const auto k = assemble_stiffness(space, 1.0);
  const MeanZeroSolver solver(k, boundary_weights(space));
  DenseTensor loads({1, space.ndof()});
  const auto result = solve_neumann_meanzero(solver, loads);
  for (double v : result.solutions.data()) CHECK(v == 0.0);
}

TEST_CASE("MeanZeroSolver: manufactured Neumann problem converges at order 2 (P1)") {
  // u = cos(pi x) cos(pi y) on [-1,1]^2 has zero Neumann data and zero
  // boundary mean; f = 2 pi^2 u.
  auto exact = [](std::span<const double> x) { return std::cos(kPi * x[0]) * std::cos(kPi * x[1]); };
  auto source = [&](std::span<const double> x) { return 2.0 * kPi * kPi * exact(x); };

  std::vector<double> errors;
  for (Index n : {8, 16, 32}) {
    const auto mesh = square_mesh(n);
    const LagrangeSpace space(mesh, 1);
    const auto k = assemble_stiffness(space, 1.0);
    const MeanZeroSolver solver(k, boundary_weights(space));
    const auto load = assemble_volume_load(space, source);
    DenseTensor loads({1, space.ndof()}, std::vector<double>(load.begin(), load.end()));
    const auto result = solve_neumann_meanzero(solver, loads);
    CHECK(!result.compat_warning[0]);
    CHECK(std::abs(dot(solver.w(), {result.solutions.data().data(),
                                    static_cast<std::size_t>(space.ndof())})) <= 1e-10);
    errors.push_back(error_norms(space, result.solutions.data(), exact).l2);
  }
  const double order1 = std::log2(errors[0] / errors[1]);
  const double order2 = std::log2(errors[1] / errors[2]);
  CHECK(order1 == doctest::Approx(2.0).epsilon(0.08));
  CHECK(order2 == doctest::Approx(2.0).epsilon(0.08));
}

TEST_CASE("MeanZeroSolver: harmonic solution with genuine Neumann data (P1/P2)") {
  // u = exp(x) sin(y) is harmonic with zero boundary mean on [-1,1]^2.
  auto exact = [](std::span<const double> x) { return std::exp(x[0]) * std::sin(x[1]); };
  auto grad = [](std::span<const double> x, std::span<double> g) {
    g[0] = std::exp(x[0]) * std::sin(x[1]);
    g[1] = std::exp(x[0]) * std::cos(x[1]);
  };
  auto neumann = [&](std::span<const double> x, std::span<const double> nrm) {
    std::array<double, 2> g;
    grad(x, g);
    return g[0] * nrm[0] + g[1] * nrm[1];
  };

  for (Index order = 1; order <= 2; ++order) {
    std::vector<double> errors;
    for (Index n : {8, 16, 32}) {
      const auto mesh = square_mesh(n);
      const LagrangeSpace space(mesh, order);
      const auto k = assemble_stiffness(space, 1.0);
      const MeanZeroSolver solver(k, boundary_weights(space));
      const auto load = assemble_neumann_load(space, neumann);
      DenseTensor loads({1, space.ndof()}, std::vector<double>(load.begin(), load.end()));
      const auto result = solve_neumann_meanzero(solver, loads);
      errors.push_back(error_norms(space, result.solutions.data(), exact).l2);
    }
    const double rate = std::log2(errors[1] / errors[2]);
    if (order == 1) CHECK(rate == doctest::Approx(2.0).epsilon(0.08));
    if (order == 2) CHECK(rate == doctest::Approx(3.0).epsilon(0.1));
  }
}

TEST_CASE("MeanZeroSolver: batched solve equals the per-load loop") {
  const auto mesh = square_mesh(8);
  const LagrangeSpace space(mesh, 1);
  const auto k = assemble_stiffness(space, 1.0);
  const MeanZeroSolver cg_solver(k, boundary_weights(space), SolverBackend::Cg);
  const MeanZeroSolver dense_solver(k, boundary_weights(space), SolverBackend::DenseFactor);

  const Index l_count = 8;
  Rng rng(3);
  DenseTensor loads({l_count, space.ndof()});
  for (Index l = 0; l < l_count; ++l) {
    // Random compatible loads: project the constant out.
    double mean = 0.0;
    for (Index i = 0; i < space.ndof(); ++i) {
      loads[l * space.ndof() + i] = rng.uniform(-1, 1);
      mean += loads[l * space.ndof() + i];
    }
    mean /= static_cast<double>(space.ndof());
    for (Index i = 0; i < space.ndof(); ++i) loads[l * space.ndof() + i] -= mean;
  }

  for (const MeanZeroSolver* solver : {&cg_solver, &dense_solver}) {
    const auto batched = solver->solve_rows(loads);
    for (Index l = 0; l < l_count; ++l) {
      const auto single = solver->solve(
          {loads.data().data() + l * space.ndof(), static_cast<std::size_t>(space.ndof())});
      for (Index i = 0; i < space.ndof(); ++i)
        CHECK(std::abs(batched[l * space.ndof() + i] - single[i]) <= 1e-12);
    }
  }
}

TEST_CASE("MeanZeroSolver: incompatible loads are flagged") {
  const auto mesh = square_mesh(4);
  const LagrangeSpace space(mesh, 1);
  const auto k = assemble_stiffness(space, 1.0);
  const MeanZeroSolver solver(k, boundary_weights(space));
  DenseTensor loads({1, space.ndof()});
  for (Index i = 0; i < space.ndof(); ++i) loads[i] = 1.0;  // pure constant: incompatible
  const auto result = solve_neumann_meanzero(solver, loads);
  CHECK(result.compat_warning[0]);
  CHECK(result.compat_residual[0] > 0.9);
}

TEST_CASE("MeanZeroSolver: solve map is self-adjoint") {
  const auto mesh = square_mesh(6);
  const LagrangeSpace space(mesh, 1);
  const auto k = assemble_stiffness(space, 1.0);
  for (auto backend : {SolverBackend::Cg, SolverBackend::DenseFactor}) {
    const MeanZeroSolver solver(k, boundary_weights(space), backend, {1e-13, 0, false});
    Rng rng(9);
    std::vector<double> a(space.ndof()), b(space.ndof());
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    const auto sa = solver.solve(a);
    const auto sb = solver.solve(b);
    CHECK(std::abs(dot(a, sb) - dot(b, sa)) <= 1e-10 * std::max(1.0, std::abs(dot(a, sb))));
  }
}

TEST_CASE("BackgroundDtn: constants map to zero flux") {
  const auto mesh = square_mesh(8);
  const LagrangeSpace space(mesh, 1);
  const auto boundary = make_boundary_space(mesh);
  const BackgroundDtn dtn(space, *boundary, {1e-12, 0, false});
  std::vector<double> g(boundary->n_bdof(), 3.5);
  const auto t = dtn.apply(g);
  for (double v : t) CHECK(std::abs(v) <= 1e-10);
}

TEST_CASE("BackgroundDtn: flux of the harmonic g = x") {
  const auto mesh = square_mesh(64);
  const LagrangeSpace space(mesh, 1);
  const auto boundary = make_boundary_space(mesh);
  const BackgroundDtn dtn(space, *boundary, {1e-12, 0, false});
  std::vector<double> g(boundary->n_bdof());
  for (Index i = 0; i < boundary->n_bdof(); ++i) g[i] = boundary->trace.curve.node_coord(i, 0);
  const auto t = dtn.apply(g);
  // Harmonic extension is u = x: flux +1 on x=1, -1 on x=-1, 0 on y=+-1.
  // The exact flux jumps at the corners, so the variational flux rings there
  // with mesh-independent amplitude decaying exponentially per node; compare
  // only on edge interiors a few nodes away from the corners.
  const double h = 2.0 / 64;
  for (Index i = 0; i < boundary->n_bdof(); ++i) {
    const double x = boundary->trace.curve.node_coord(i, 0);
    const double y = boundary->trace.curve.node_coord(i, 1);
    const double corner_dist =
        std::min(std::min(std::hypot(x - 1, y - 1), std::hypot(x - 1, y + 1)),
                 std::min(std::hypot(x + 1, y - 1), std::hypot(x + 1, y + 1)));
    if (corner_dist <= 2.5 * h) continue;
    double expect = 0.0;
    if (std::abs(x - 1) <= 1e-12) expect = 1.0;
    if (std::abs(x + 1) <= 1e-12) expect = -1.0;
    CHECK(std::abs(t[i] - expect) <= 5e-2);
  }
}

TEST_CASE("BackgroundDtn: self-adjoint in the boundary inner product") {
  const auto mesh = square_mesh(12);
  const LagrangeSpace space(mesh, 1);
  const auto boundary = make_boundary_space(mesh);
  const BackgroundDtn dtn(space, *boundary, {1e-13, 0, false});
  Rng rng(21);
  std::vector<double> g(boundary->n_bdof()), h(boundary->n_bdof());
  for (auto& v : g) v = rng.uniform(-1, 1);
  for (auto& v : h) v = rng.uniform(-1, 1);
  const auto tg = dtn.apply(g);
  const auto th = dtn.apply(h);
  const double lhs = boundary->inner(tg, h);
  const double rhs = boundary->inner(g, th);
  CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
}

TEST_CASE("grad_at_points: affine functions are exact everywhere") {
  const auto mesh = jiggled_mesh(5);
  const LagrangeSpace space(mesh, 1);
  const PointLocator locator(mesh);
  std::vector<double> u(space.ndof());
  for (Index v = 0; v < mesh.num_nodes(); ++v)
    u[v] = 2.0 * mesh.node_coord(v, 0) - 3.0 * mesh.node_coord(v, 1) + 0.25;

  Rng rng(31);
  DenseTensor pts({20, 2});
  for (Index p = 0; p < 20; ++p) {
    pts.at({p, 0}) = rng.uniform(0.05, 0.95);
    pts.at({p, 1}) = rng.uniform(0.05, 0.95);
  }
  const auto g = grad_at_points(space, u, pts, locator);
  for (Index p = 0; p < 20; ++p) {
    CHECK(g.at({p, 0}) == doctest::Approx(2.0).epsilon(1e-11));
    CHECK(g.at({p, 1}) == doctest::Approx(-3.0).epsilon(1e-11));
  }
}

TEST_CASE("grad_at_points: P2 reproduces quadratic gradients exactly") {
  const auto mesh = square_mesh(3, 0.0, 1.0);
  const LagrangeSpace space(mesh, 2);
  const PointLocator locator(mesh);
  // u = x^2: set nodal values at vertices and edge midpoints.
  std::vector<double> u(space.ndof());
  for (Index v = 0; v < mesh.num_nodes(); ++v) {
    const double x = mesh.node_coord(v, 0);
    u[v] = x * x;
  }
  for (Index c = 0; c < mesh.num_cells(); ++c) {
    const auto dofs = space.cell_dofs(c);
    const Index pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (Index e = 0; e < 3; ++e) {
      const Index a = mesh.cell_vertex(c, pairs[e][0]);
      const Index b = mesh.cell_vertex(c, pairs[e][1]);
      const double mx = 0.5 * (mesh.node_coord(a, 0) + mesh.node_coord(b, 0));
      u[dofs[3 + e]] = mx * mx;
    }
  }
  DenseTensor pts({3, 2}, {0.21, 0.34, 0.55, 0.72, 0.83, 0.11});
  const auto g = grad_at_points(space, u, pts, locator);
  for (Index p = 0; p < 3; ++p) {
    CHECK(g.at({p, 0}) == doctest::Approx(2.0 * pts.at({p, 0})).epsilon(1e-10));
    CHECK(std::abs(g.at({p, 1})) <= 1e-10);
  }
}

TEST_CASE("grad_at_points: matches finite differences for a generic P1 function") {
  const auto mesh = square_mesh(10, 0.0, 1.0);
  const LagrangeSpace space(mesh, 1);
  const PointLocator locator(mesh);
  Rng rng(55);
  std::vector<double> u(space.ndof());
  for (auto& v : u) v = rng.uniform(-1, 1);

  // Project lambda interpolation: compare with FD of the interpolant at
  // strictly interior points of cells (FD step much smaller than cells).
  DenseTensor pts({5, 2});
  const double samples[5][2] = {
      {0.131, 0.271}, {0.372, 0.619}, {0.553, 0.342}, {0.731, 0.811}, {0.912, 0.143}};
  for (Index p = 0; p < 5; ++p) {
    pts.at({p, 0}) = samples[p][0];
    pts.at({p, 1}) = samples[p][1];
  }
  auto eval = [&](double x, double y) {
    DenseTensor q({1, 2}, {x, y});
    const auto hit = locator.locate(std::span<const double>(q.data().data(), 2));
    const auto dofs = space.cell_dofs(hit.cell);
    double acc = 0.0;
    for (Index i = 0; i < 3; ++i) acc += u[dofs[i]] * hit.lambda[i];
    return acc;
  };
  const auto g = grad_at_points(space, u, pts, locator);
  const double h = 1e-7;
  for (Index p = 0; p < 5; ++p) {
    const double x = pts.at({p, 0}), y = pts.at({p, 1});
    const double fdx = (eval(x + h, y) - eval(x - h, y)) / (2 * h);
    const double fdy = (eval(x, y + h) - eval(x, y - h)) / (2 * h);
    CHECK(std::abs(g.at({p, 0}) - fdx) <= 1e-6 * std::max(1.0, std::abs(fdx)));
    CHECK(std::abs(g.at({p, 1}) - fdy) <= 1e-6 * std::max(1.0, std::abs(fdy)));
  }
}

TEST_CASE("PointLocator: points on shared edges resolve to the lowest cell") {
  const auto mesh = square_mesh(4, 0.0, 1.0);
  const PointLocator locator(mesh);
  // The center of each grid square sits exactly on the split diagonal.
  const double x[2] = {0.375, 0.375};
  const auto hit = locator.locate(std::span<const double>(x, 2));
  // Both triangles of square (1,1) contain the point (it sits on their
  // shared diagonal); the candidates are cells 10 and 11 and the lower wins.
  CHECK(hit.cell == 10);

  const double outside[2] = {1.5, 0.2};
  CHECK_THROWS(locator.locate(std::span<const double>(outside, 2)));
}

TEST_CASE("basis_gradients_at_point: partition of unity and antisymmetry in d") {
  const auto mesh = square_mesh(6, 0.0, 1.0);
  const LagrangeSpace space(mesh, 1);
  const PointLocator locator(mesh);
  const double x[2] = {0.43, 0.61};
  const double d1[2] = {0.3, -0.7};
  const double d2[2] = {-0.3, 0.7};
  const auto row1 = basis_gradients_at_point(space, {x, 2}, {d1, 2}, locator);
  const auto row2 = basis_gradients_at_point(space, {x, 2}, {d2, 2}, locator);
  double sum = 0.0;
  for (std::size_t i = 0; i < row1.coefficients.size(); ++i) {
    sum += row1.coefficients[i];
    CHECK(row1.coefficients[i] == doctest::Approx(-row2.coefficients[i]).epsilon(1e-13));
  }
  CHECK(std::abs(sum) <= 1e-12);

  // P1 hand check on the reference-like first cell: gradients are constant.
  const auto rowref = basis_gradients_at_point(space, {x, 2}, {d1, 2}, locator);
  CHECK(rowref.dofs.size() == 3);
}

TEST_CASE("assemble_channel_loads: matches the facet-quadrature Neumann load") {
  const auto mesh = square_mesh(8);
  const LagrangeSpace space(mesh, 1);
  const auto boundary = make_boundary_space(mesh);

  // Channel data: nodal values of a smooth boundary function.
  BoundaryChannelSet channels;
  channels.boundary = boundary.get();
  channels.values = DenseTensor({1, boundary->n_bdof()});
  channels.labels = {1};
  for (Index i = 0; i < boundary->n_bdof(); ++i)
    channels.values[i] = std::cos(boundary->trace.theta[static_cast<std::size_t>(i)]);

  const auto via_channels = assemble_channel_loads(space, channels);

  // The same data as a piecewise-linear interpolant integrated over facets:
  // evaluate by interpolating the nodal values along each boundary segment.
  // cos(theta) at the nodes interpolated linearly equals the channel load.
  const auto via_mass = [&] {
    DenseTensor out({1, space.ndof()});
    const auto mv = boundary->mass.matvec(channels.channel(0));
    for (Index i = 0; i < boundary->n_bdof(); ++i)
      out[boundary->trace.node_map[i]] += mv[i];
    return out;
  }();
  for (Index i = 0; i < space.ndof(); ++i) CHECK(via_channels[i] == via_mass[i]);

  // Loads of mean-zero data are compatible: 1 . load = w . data = 0.
  std::vector<double> data(channels.values.data().begin(), channels.values.data().end());
  boundary->project_mean_zero(data);
  DenseTensor projected({1, boundary->n_bdof()}, data);
  BoundaryChannelSet pchan{boundary.get(), projected, {1}};
  const auto pload = assemble_channel_loads(space, pchan);
  double total = 0.0;
  for (double v : pload.data()) total += v;
  CHECK(std::abs(total) <= 1e-13);
}
