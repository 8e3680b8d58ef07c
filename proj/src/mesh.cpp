#include "gammafem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace gfem {

namespace {

double cross2(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

double det3(const std::array<double, 9>& m) {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

}  // namespace

void SimplicialMesh::validate() const {
  if (dim < 1 || dim > 3 || embed_dim < dim)
    throw std::invalid_argument("SimplicialMesh: bad dimensions");
  const Index nv = num_nodes();
  for (Index v : cells)
    if (v < 0 || v >= nv) throw std::invalid_argument("SimplicialMesh: cell vertex out of range");
  const auto measures = cell_measures(*this);
  for (double m : measures)
    if (!(m > 0.0)) throw std::invalid_argument("SimplicialMesh: nonpositive cell measure");
}

SimplicialMesh uniform_mesh(Index dim, Index divisions, std::span<const double> lo,
                            std::span<const double> hi) {
  if (divisions < 1) throw std::invalid_argument("uniform_mesh: divisions must be >= 1");
  if (static_cast<Index>(lo.size()) < dim || static_cast<Index>(hi.size()) < dim)
    throw std::invalid_argument("uniform_mesh: bounding box rank too small");
  for (Index d = 0; d < dim; ++d)
    if (!(hi[static_cast<std::size_t>(d)] > lo[static_cast<std::size_t>(d)]))
      throw std::invalid_argument("uniform_mesh: degenerate bounding box");

  const Index n = divisions;
  SimplicialMesh mesh;
  mesh.dim = dim;
  mesh.embed_dim = dim;

  if (dim == 1) {
    mesh.nodes = DenseTensor({n + 1, 1});
    for (Index i = 0; i <= n; ++i)
      mesh.nodes[i] = lo[0] + (hi[0] - lo[0]) * static_cast<double>(i) / static_cast<double>(n);
    mesh.cells.reserve(static_cast<std::size_t>(2 * n));
    for (Index i = 0; i < n; ++i) {
      mesh.cells.push_back(i);
      mesh.cells.push_back(i + 1);
    }
    return mesh;
  }

  if (dim == 2) {
    const Index stride = n + 1;
    mesh.nodes = DenseTensor({stride * stride, 2});
    for (Index iy = 0; iy <= n; ++iy)
      for (Index ix = 0; ix <= n; ++ix) {
        const Index v = iy * stride + ix;
        mesh.nodes[v * 2 + 0] =
            lo[0] + (hi[0] - lo[0]) * static_cast<double>(ix) / static_cast<double>(n);
        mesh.nodes[v * 2 + 1] =
            lo[1] + (hi[1] - lo[1]) * static_cast<double>(iy) / static_cast<double>(n);
      }
    mesh.cells.reserve(static_cast<std::size_t>(6 * n * n));
    for (Index iy = 0; iy < n; ++iy)
      for (Index ix = 0; ix < n; ++ix) {
        const Index v00 = iy * stride + ix;
        const Index v10 = v00 + 1;
        const Index v01 = v00 + stride;
        const Index v11 = v01 + 1;
        // Split along the (+1,+1) diagonal, both triangles counterclockwise.
        mesh.cells.insert(mesh.cells.end(), {v00, v10, v11});
        mesh.cells.insert(mesh.cells.end(), {v00, v11, v01});
      }
    return mesh;
  }

  const Index stride = n + 1;
  mesh.nodes = DenseTensor({stride * stride * stride, 3});
  for (Index iz = 0; iz <= n; ++iz)
    for (Index iy = 0; iy <= n; ++iy)
      for (Index ix = 0; ix <= n; ++ix) {
        const Index v = (iz * stride + iy) * stride + ix;
        mesh.nodes[v * 3 + 0] =
            lo[0] + (hi[0] - lo[0]) * static_cast<double>(ix) / static_cast<double>(n);
        mesh.nodes[v * 3 + 1] =
            lo[1] + (hi[1] - lo[1]) * static_cast<double>(iy) / static_cast<double>(n);
        mesh.nodes[v * 3 + 2] =
            lo[2] + (hi[2] - lo[2]) * static_cast<double>(iz) / static_cast<double>(n);
      }
  // Kuhn split: six tetrahedra per cube, one per axis permutation, all
  // sharing the main diagonal. Odd permutations get two vertices swapped to
  // keep the orientation positive.
  static const std::array<std::array<Index, 3>, 6> perms = {
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  static const std::array<bool, 6> odd = {false, true, true, false, false, true};
  auto node_id = [stride](Index ix, Index iy, Index iz) {
    return (iz * stride + iy) * stride + ix;
  };
  mesh.cells.reserve(static_cast<std::size_t>(24 * n * n * n));
  for (Index iz = 0; iz < n; ++iz)
    for (Index iy = 0; iy < n; ++iy)
      for (Index ix = 0; ix < n; ++ix)
        for (std::size_t p = 0; p < 6; ++p) {
          std::array<Index, 3> at = {ix, iy, iz};
          std::array<Index, 4> tet;
          tet[0] = node_id(at[0], at[1], at[2]);
          for (std::size_t s = 0; s < 3; ++s) {
            at[static_cast<std::size_t>(perms[p][s])] += 1;
            tet[s + 1] = node_id(at[0], at[1], at[2]);
          }
          if (odd[p]) std::swap(tet[2], tet[3]);
          mesh.cells.insert(mesh.cells.end(), tet.begin(), tet.end());
        }
  return mesh;
}

DenseTensor barycentric_jacobians(const SimplicialMesh& mesh) {
  const Index n = mesh.num_cells();
  const Index d = mesh.dim;
  DenseTensor jac({n, d + 1, d});

  for (Index c = 0; c < n; ++c) {
    const Index v0 = mesh.cell_vertex(c, 0);
    if (d == 1) {
      const Index v1 = mesh.cell_vertex(c, 1);
      double len2 = 0.0;
      for (Index e = 0; e < mesh.embed_dim; ++e) {
        const double t = mesh.node_coord(v1, e) - mesh.node_coord(v0, e);
        len2 += t * t;
      }
      const double len = std::sqrt(len2);
      if (!(len > 0.0)) throw std::runtime_error("barycentric_jacobians: zero-measure cell");
      jac[(c * 2 + 0) * 1 + 0] = -1.0 / len;
      jac[(c * 2 + 1) * 1 + 0] = 1.0 / len;
    } else if (d == 2) {
      const Index v1 = mesh.cell_vertex(c, 1);
      const Index v2 = mesh.cell_vertex(c, 2);
      const double ax = mesh.node_coord(v1, 0) - mesh.node_coord(v0, 0);
      const double ay = mesh.node_coord(v1, 1) - mesh.node_coord(v0, 1);
      const double bx = mesh.node_coord(v2, 0) - mesh.node_coord(v0, 0);
      const double by = mesh.node_coord(v2, 1) - mesh.node_coord(v0, 1);
      const double det = cross2(ax, ay, bx, by);
      if (!(std::abs(det) > 0.0))
        throw std::runtime_error("barycentric_jacobians: zero-measure cell");
      // Rows of the inverse edge matrix are the gradients of lambda_1/2.
      const double g1x = by / det, g1y = -bx / det;
      const double g2x = -ay / det, g2y = ax / det;
      jac[(c * 3 + 1) * 2 + 0] = g1x;
      jac[(c * 3 + 1) * 2 + 1] = g1y;
      jac[(c * 3 + 2) * 2 + 0] = g2x;
      jac[(c * 3 + 2) * 2 + 1] = g2y;
      jac[(c * 3 + 0) * 2 + 0] = -(g1x + g2x);
      jac[(c * 3 + 0) * 2 + 1] = -(g1y + g2y);
    } else {
      std::array<double, 9> t{};
      for (Index b = 1; b <= 3; ++b) {
        const Index vb = mesh.cell_vertex(c, b);
        for (Index e = 0; e < 3; ++e)
          t[static_cast<std::size_t>((b - 1) * 3 + e)] =
              mesh.node_coord(vb, e) - mesh.node_coord(v0, e);
      }
      // lambda_b(x) = row b of T^{-1} applied to (x - v0); T has edge rows.
      const double det = det3(t);
      if (!(std::abs(det) > 0.0))
        throw std::runtime_error("barycentric_jacobians: zero-measure cell");
      std::array<double, 9> inv;
      inv[0] = (t[4] * t[8] - t[5] * t[7]) / det;
      inv[1] = (t[2] * t[7] - t[1] * t[8]) / det;
      inv[2] = (t[1] * t[5] - t[2] * t[4]) / det;
      inv[3] = (t[5] * t[6] - t[3] * t[8]) / det;
      inv[4] = (t[0] * t[8] - t[2] * t[6]) / det;
      inv[5] = (t[2] * t[3] - t[0] * t[5]) / det;
      inv[6] = (t[3] * t[7] - t[4] * t[6]) / det;
      inv[7] = (t[1] * t[6] - t[0] * t[7]) / det;
      inv[8] = (t[0] * t[4] - t[1] * t[3]) / det;
      // inv is T^{-1} with (row, col) = (coordinate, barycentric-1); gradient
      // of lambda_b is column b-1 of inv transposed into row form.
      for (Index b = 1; b <= 3; ++b)
        for (Index e = 0; e < 3; ++e)
          jac[(c * 4 + b) * 3 + e] = inv[static_cast<std::size_t>(e * 3 + (b - 1))];
      for (Index e = 0; e < 3; ++e)
        jac[(c * 4 + 0) * 3 + e] =
            -(jac[(c * 4 + 1) * 3 + e] + jac[(c * 4 + 2) * 3 + e] + jac[(c * 4 + 3) * 3 + e]);
    }
  }
  return jac;
}

std::vector<double> cell_measures(const SimplicialMesh& mesh) {
  const Index n = mesh.num_cells();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Index c = 0; c < n; ++c) {
    const Index v0 = mesh.cell_vertex(c, 0);
    if (mesh.dim == 1) {
      const Index v1 = mesh.cell_vertex(c, 1);
      double len2 = 0.0;
      for (Index e = 0; e < mesh.embed_dim; ++e) {
        const double t = mesh.node_coord(v1, e) - mesh.node_coord(v0, e);
        len2 += t * t;
      }
      out[static_cast<std::size_t>(c)] = std::sqrt(len2);
    } else if (mesh.dim == 2) {
      const Index v1 = mesh.cell_vertex(c, 1);
      const Index v2 = mesh.cell_vertex(c, 2);
      out[static_cast<std::size_t>(c)] =
          0.5 * cross2(mesh.node_coord(v1, 0) - mesh.node_coord(v0, 0),
                       mesh.node_coord(v1, 1) - mesh.node_coord(v0, 1),
                       mesh.node_coord(v2, 0) - mesh.node_coord(v0, 0),
                       mesh.node_coord(v2, 1) - mesh.node_coord(v0, 1));
    } else {
      std::array<double, 9> t{};
      for (Index b = 1; b <= 3; ++b)
        for (Index e = 0; e < 3; ++e)
          t[static_cast<std::size_t>((b - 1) * 3 + e)] =
              mesh.node_coord(mesh.cell_vertex(c, b), e) - mesh.node_coord(v0, e);
      out[static_cast<std::size_t>(c)] = det3(t) / 6.0;
    }
  }
  return out;
}

namespace {

SimplicialMesh refine_once(const SimplicialMesh& mesh) {
  SimplicialMesh out;
  out.dim = mesh.dim;
  out.embed_dim = mesh.embed_dim;
  out.closed_curve = mesh.closed_curve;
  const Index nv = mesh.num_nodes();
  const Index nc = mesh.num_cells();
  const Index e = mesh.embed_dim;

  if (mesh.dim == 1) {
    out.nodes = DenseTensor({nv + nc, e});
    std::copy(mesh.nodes.data().begin(), mesh.nodes.data().end(), out.nodes.data().begin());
    for (Index c = 0; c < nc; ++c) {
      const Index a = mesh.cell_vertex(c, 0);
      const Index b = mesh.cell_vertex(c, 1);
      for (Index d = 0; d < e; ++d)
        out.nodes[(nv + c) * e + d] = 0.5 * (mesh.node_coord(a, d) + mesh.node_coord(b, d));
    }
    out.cells.reserve(static_cast<std::size_t>(4 * nc));
    for (Index c = 0; c < nc; ++c) {
      const Index a = mesh.cell_vertex(c, 0);
      const Index b = mesh.cell_vertex(c, 1);
      const Index m = nv + c;
      out.cells.insert(out.cells.end(), {a, m});
      out.cells.insert(out.cells.end(), {m, b});
    }
    return out;
  }

  if (mesh.dim != 2) throw std::invalid_argument("uniform_refine: only D in {1, 2} supported");

  // Deterministic edge enumeration: sorted unique list of vertex pairs.
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
  std::map<std::pair<Index, Index>, Index> edge_id;
  for (std::size_t i = 0; i < edges.size(); ++i) edge_id[edges[i]] = static_cast<Index>(i);

  const Index ne = static_cast<Index>(edges.size());
  out.nodes = DenseTensor({nv + ne, e});
  std::copy(mesh.nodes.data().begin(), mesh.nodes.data().end(), out.nodes.data().begin());
  for (Index i = 0; i < ne; ++i) {
    const auto [a, b] = edges[static_cast<std::size_t>(i)];
    for (Index d = 0; d < e; ++d)
      out.nodes[(nv + i) * e + d] = 0.5 * (mesh.node_coord(a, d) + mesh.node_coord(b, d));
  }

  out.cells.reserve(static_cast<std::size_t>(12 * nc));
  for (Index c = 0; c < nc; ++c) {
    const Index v0 = mesh.cell_vertex(c, 0);
    const Index v1 = mesh.cell_vertex(c, 1);
    const Index v2 = mesh.cell_vertex(c, 2);
    const Index m01 = nv + edge_id[{std::min(v0, v1), std::max(v0, v1)}];
    const Index m02 = nv + edge_id[{std::min(v0, v2), std::max(v0, v2)}];
    const Index m12 = nv + edge_id[{std::min(v1, v2), std::max(v1, v2)}];
    out.cells.insert(out.cells.end(), {v0, m01, m02});
    out.cells.insert(out.cells.end(), {m01, v1, m12});
    out.cells.insert(out.cells.end(), {m02, m12, v2});
    out.cells.insert(out.cells.end(), {m01, m12, m02});
  }
  return out;
}

}  // namespace

SimplicialMesh uniform_refine(const SimplicialMesh& mesh, Index times) {
  if (times < 0) throw std::invalid_argument("uniform_refine: times must be >= 0");
  SimplicialMesh out = mesh;
  for (Index t = 0; t < times; ++t) out = refine_once(out);
  return out;
}

std::vector<BoundaryFacet> boundary_facets(const SimplicialMesh& mesh) {
  if (mesh.dim < 2) throw std::invalid_argument("boundary_facets: mesh must be 2D or 3D");
  const Index nc = mesh.num_cells();
  const Index d = mesh.dim;
  std::map<std::vector<Index>, std::pair<Index, Index>> first;  // sorted facet -> (cell, local)
  std::map<std::vector<Index>, Index> count;
  for (Index c = 0; c < nc; ++c) {
    for (Index l = 0; l <= d; ++l) {
      std::vector<Index> key;
      for (Index b = 0; b <= d; ++b)
        if (b != l) key.push_back(mesh.cell_vertex(c, b));
      std::sort(key.begin(), key.end());
      auto it = count.find(key);
      if (it == count.end()) {
        count[key] = 1;
        first[key] = {c, l};
      } else {
        it->second += 1;
      }
    }
  }
  std::vector<BoundaryFacet> out;
  for (const auto& [key, cnt] : count) {
    if (cnt != 1) continue;
    const auto [c, l] = first[key];
    BoundaryFacet f;
    f.cell = c;
    f.local = l;
    Index k = 0;
    for (Index b = 0; b <= d; ++b)
      if (b != l) f.vertices[static_cast<std::size_t>(k++)] = mesh.cell_vertex(c, b);
    out.push_back(f);
  }
  // std::map iteration gives a deterministic (sorted-key) facet ordering.
  return out;
}

BoundaryTrace boundary_trace_mesh(const SimplicialMesh& mesh2d) {
  if (mesh2d.dim != 2) throw std::invalid_argument("boundary_trace_mesh: expected a 2D mesh");
  const auto facets = boundary_facets(mesh2d);

  std::map<Index, std::vector<Index>> neighbors;
  for (const auto& f : facets) {
    neighbors[f.vertices[0]].push_back(f.vertices[1]);
    neighbors[f.vertices[1]].push_back(f.vertices[0]);
  }
  for (const auto& [v, nb] : neighbors)
    if (nb.size() != 2)
      throw std::runtime_error("boundary_trace_mesh: boundary is not a single closed curve");

  // Start from the lexicographically smallest boundary point.
  Index start = -1;
  for (const auto& [v, nb] : neighbors) {
    if (start < 0) {
      start = v;
      continue;
    }
    const double x = mesh2d.node_coord(v, 0), y = mesh2d.node_coord(v, 1);
    const double sx = mesh2d.node_coord(start, 0), sy = mesh2d.node_coord(start, 1);
    if (x < sx || (x == sx && y < sy)) start = v;
  }

  std::vector<Index> loop;
  loop.push_back(start);
  Index prev = -1, cur = start;
  while (true) {
    const auto& nb = neighbors[cur];
    const Index next = (nb[0] == prev) ? nb[1] : nb[0];
    if (next == start) break;
    loop.push_back(next);
    prev = cur;
    cur = next;
    if (loop.size() > neighbors.size())
      throw std::runtime_error("boundary_trace_mesh: boundary walk did not close");
  }
  if (loop.size() != neighbors.size())
    throw std::runtime_error("boundary_trace_mesh: boundary is not a single closed curve");

  double area2 = 0.0;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const Index a = loop[i];
    const Index b = loop[(i + 1) % loop.size()];
    area2 += mesh2d.node_coord(a, 0) * mesh2d.node_coord(b, 1) -
             mesh2d.node_coord(b, 0) * mesh2d.node_coord(a, 1);
  }
  if (area2 < 0.0) std::reverse(loop.begin() + 1, loop.end());

  BoundaryTrace trace;
  const Index nb = static_cast<Index>(loop.size());
  trace.node_map = loop;
  trace.curve.dim = 1;
  trace.curve.embed_dim = 2;
  trace.curve.closed_curve = true;
  trace.curve.nodes = DenseTensor({nb, 2});
  trace.theta.resize(static_cast<std::size_t>(nb));
  trace.arclength.resize(static_cast<std::size_t>(nb));
  double s = 0.0;
  for (Index i = 0; i < nb; ++i) {
    const Index v = loop[static_cast<std::size_t>(i)];
    const double x = mesh2d.node_coord(v, 0);
    const double y = mesh2d.node_coord(v, 1);
    trace.curve.nodes[i * 2 + 0] = x;
    trace.curve.nodes[i * 2 + 1] = y;
    trace.theta[static_cast<std::size_t>(i)] = std::atan2(y, x);
    if (i > 0) {
      const Index u = loop[static_cast<std::size_t>(i - 1)];
      const double dx = x - mesh2d.node_coord(u, 0);
      const double dy = y - mesh2d.node_coord(u, 1);
      s += std::sqrt(dx * dx + dy * dy);
    }
    trace.arclength[static_cast<std::size_t>(i)] = s;
  }
  {
    const Index u = loop.back();
    const Index v = loop.front();
    const double dx = mesh2d.node_coord(v, 0) - mesh2d.node_coord(u, 0);
    const double dy = mesh2d.node_coord(v, 1) - mesh2d.node_coord(u, 1);
    trace.perimeter = s + std::sqrt(dx * dx + dy * dy);
  }
  for (Index i = 0; i < nb; ++i) {
    trace.curve.cells.push_back(i);
    trace.curve.cells.push_back((i + 1) % nb);
  }
  return trace;
}

}  // namespace gfem
