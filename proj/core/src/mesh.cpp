#include "dmn/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dmn {

double tet_signed_volume(const Vec3& a, const Vec3& b, const Vec3& c,
                         const Vec3& d) {
  return (b - a).cross(c - a).dot(d - a) / 6.0;
}

double total_tet_volume(const TetMesh& mesh) {
  double v = 0.0;
  for (const auto& t : mesh.tets)
    v += tet_signed_volume(mesh.vertices[t[0]], mesh.vertices[t[1]],
                           mesh.vertices[t[2]], mesh.vertices[t[3]]);
  return v;
}

TetMesh build_mesh(std::vector<Vec3> vertices,
                   std::vector<std::array<int, 4>> tets) {
  if (vertices.size() < 4) throw InvalidArgument("build_mesh: need >= 4 vertices");
  if (tets.empty()) throw InvalidArgument("build_mesh: need >= 1 tet");
  const int n = static_cast<int>(vertices.size());
  for (std::size_t t = 0; t < tets.size(); ++t) {
    auto& tet = tets[t];
    for (int v : tet)
      if (v < 0 || v >= n)
        throw IndexOutOfRange("build_mesh: tet " + std::to_string(t) +
                              " references vertex " + std::to_string(v));
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b)
        if (tet[a] == tet[b])
          throw DegenerateTet("build_mesh: tet " + std::to_string(t) +
                              " has a repeated vertex index");
    double vol = tet_signed_volume(vertices[tet[0]], vertices[tet[1]],
                                   vertices[tet[2]], vertices[tet[3]]);
    if (vol < 0.0) {
      std::swap(tet[2], tet[3]);
      vol = -vol;
    }
    if (vol <= 0.0)
      throw DegenerateTet("build_mesh: tet " + std::to_string(t) +
                          " has zero volume");
  }

  TetMesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.tets = std::move(tets);

  std::set<std::pair<int, int>> edge_set;
  for (const auto& tet : mesh.tets)
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b)
        edge_set.emplace(std::min(tet[a], tet[b]), std::max(tet[a], tet[b]));
  mesh.edges.assign(edge_set.begin(), edge_set.end());

  mesh.adjacency.assign(n, {});
  for (const auto& [i, j] : mesh.edges) {
    mesh.adjacency[i].push_back(j);
    mesh.adjacency[j].push_back(i);
  }
  for (auto& nbrs : mesh.adjacency) std::sort(nbrs.begin(), nbrs.end());
  return mesh;
}

NodalField discrete_laplacian(const NodalField& positions,
                              const TetMesh& mesh) {
  const std::size_t n = mesh.vertices.size();
  if (positions.size() != n)
    throw ShapeMismatch("discrete_laplacian: positions length != vertex count");
  NodalField out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nbrs = mesh.adjacency[i];
    if (nbrs.empty())
      throw IsolatedVertex("discrete_laplacian: vertex " + std::to_string(i) +
                           " has no neighbors");
    Vec3 acc{};
    for (int j : nbrs) acc += positions[i] - positions[j];
    out.values[i] = acc / static_cast<double>(nbrs.size());
  }
  return out;
}

namespace {

// Oriented boundary faces of a positively oriented tet (outward normals).
std::array<std::array<int, 3>, 4> oriented_faces(const std::array<int, 4>& t) {
  return {{{t[0], t[2], t[1]},
           {t[0], t[1], t[3]},
           {t[1], t[2], t[3]},
           {t[0], t[3], t[2]}}};
}

std::array<int, 3> face_key(std::array<int, 3> f) {
  std::sort(f.begin(), f.end());
  return f;
}

}  // namespace

std::vector<std::array<int, 3>> extract_surface(const TetMesh& mesh) {
  std::map<std::array<int, 3>, std::pair<int, std::array<int, 3>>> faces;
  for (const auto& tet : mesh.tets) {
    for (const auto& f : oriented_faces(tet)) {
      auto [it, inserted] = faces.try_emplace(face_key(f), 0, f);
      it->second.first += 1;
    }
  }
  std::vector<std::array<int, 3>> surface;
  for (const auto& [key, val] : faces)
    if (val.first == 1) surface.push_back(val.second);
  return surface;
}

std::vector<int> surface_vertex_indices(const TetMesh& mesh) {
  std::set<int> verts;
  for (const auto& f : extract_surface(mesh))
    for (int v : f) verts.insert(v);
  return {verts.begin(), verts.end()};
}

namespace {

bool point_in_tet(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                  const Vec3& d) {
  const double v = tet_signed_volume(a, b, c, d);
  if (v <= 0.0) return false;
  constexpr double tol = -1e-9;
  const double b0 = tet_signed_volume(p, b, c, d) / v;
  if (b0 < tol) return false;
  const double b1 = tet_signed_volume(a, p, c, d) / v;
  if (b1 < tol) return false;
  const double b2 = tet_signed_volume(a, b, p, d) / v;
  if (b2 < tol) return false;
  const double b3 = tet_signed_volume(a, b, c, p) / v;
  return b3 >= tol;
}

}  // namespace

Volume3D rasterize_mask(const TetMesh& mesh, const NodalField& positions,
                        const GridSpec& grid, bool* grid_too_coarse) {
  if (positions.size() != mesh.vertices.size())
    throw ShapeMismatch("rasterize_mask: positions length != vertex count");
  Volume3D mask(grid.dims, grid.spacing, grid.origin, 0.0);

  Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  for (const auto& p : positions.values) {
    for (int c = 0; c < 3; ++c) {
      lo[c] = std::min(lo[c], p[c]);
      hi[c] = std::max(hi[c], p[c]);
    }
  }
  if (grid_too_coarse) {
    *grid_too_coarse = false;
    for (int c = 0; c < 3; ++c)
      if ((hi[c] - lo[c]) / grid.spacing[c] < 8.0) *grid_too_coarse = true;
  }

  for (const auto& tet : mesh.tets) {
    const Vec3& a = positions[tet[0]];
    const Vec3& b = positions[tet[1]];
    const Vec3& c = positions[tet[2]];
    const Vec3& d = positions[tet[3]];
    Vec3 tlo = a, thi = a;
    for (const Vec3* q : {&b, &c, &d}) {
      for (int k = 0; k < 3; ++k) {
        tlo[k] = std::min(tlo[k], (*q)[k]);
        thi[k] = std::max(thi[k], (*q)[k]);
      }
    }
    int i0[3], i1[3];
    for (int k = 0; k < 3; ++k) {
      i0[k] = std::max(
          0, static_cast<int>(std::ceil((tlo[k] - grid.origin[k]) / grid.spacing[k] - 1e-12)));
      i1[k] = std::min(
          grid.dims[k] - 1,
          static_cast<int>(std::floor((thi[k] - grid.origin[k]) / grid.spacing[k] + 1e-12)));
    }
    for (int k = i0[2]; k <= i1[2]; ++k)
      for (int j = i0[1]; j <= i1[1]; ++j)
        for (int i = i0[0]; i <= i1[0]; ++i) {
          if (mask.at(i, j, k) != 0.0) continue;
          if (point_in_tet(mask.voxel_center(i, j, k), a, b, c, d))
            mask.at(i, j, k) = 1.0;
        }
  }
  return mask;
}

Volume3D rasterize_mask(const TetMesh& mesh, const GridSpec& grid,
                        bool* grid_too_coarse) {
  NodalField pos;
  pos.values = mesh.vertices;
  return rasterize_mask(mesh, pos, grid, grid_too_coarse);
}

NodalField sample_field_at_nodes(const VectorGrid& field, const TetMesh& mesh) {
  NodalField out;
  out.values.reserve(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    if (!field.contains(mesh.vertices[i]))
      throw OutOfDomain("sample_field_at_nodes: vertex " + std::to_string(i) +
                        " outside field grid");
    out.values.push_back(field.sample(mesh.vertices[i]));
  }
  return out;
}

void write_mesh(const std::string& path, const TetMesh& mesh) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for write: " + path);
  os << mesh.vertices.size() << " " << mesh.tets.size() << "\n";
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", v.x, v.y, v.z);
    os << buf;
  }
  for (const auto& t : mesh.tets)
    os << t[0] << " " << t[1] << " " << t[2] << " " << t[3] << "\n";
  if (!os) throw IoError("write failed: " + path);
}

TetMesh read_mesh(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::size_t n = 0, m = 0;
  is >> n >> m;
  if (!is) throw IoError("bad mesh header: " + path);
  std::vector<Vec3> verts(n);
  for (auto& v : verts) is >> v.x >> v.y >> v.z;
  std::vector<std::array<int, 4>> tets(m);
  for (auto& t : tets) is >> t[0] >> t[1] >> t[2] >> t[3];
  if (!is) throw IoError("truncated mesh file: " + path);
  return build_mesh(std::move(verts), std::move(tets));
}

namespace {

// Conforming 5-tet cube decomposition; parity-mirrored so diagonals match
// across shared faces. Corner ids are binary (x | y<<1 | z<<2).
const std::array<std::array<int, 4>, 5> kEvenTets = {{{0, 1, 3, 5},
                                                      {0, 2, 3, 6},
                                                      {0, 4, 5, 6},
                                                      {3, 5, 6, 7},
                                                      {0, 3, 5, 6}}};
const std::array<std::array<int, 4>, 5> kOddTets = {{{1, 0, 2, 4},
                                                     {1, 3, 2, 7},
                                                     {1, 5, 4, 7},
                                                     {2, 4, 7, 6},
                                                     {1, 2, 4, 7}}};

TetMesh lattice_ellipsoid(const Vec3& center, const Vec3& semi, int res) {
  // res lattice cells across the largest semi-axis pair.
  const double max_axis = std::max({semi.x, semi.y, semi.z});
  const double h = 2.0 * max_axis / res;
  int cells[3];
  for (int c = 0; c < 3; ++c)
    cells[c] = std::max(2, static_cast<int>(std::ceil(2.0 * semi[c] / h)));

  auto inside = [&](const Vec3& p) {
    const double dx = (p.x - center.x) / semi.x;
    const double dy = (p.y - center.y) / semi.y;
    const double dz = (p.z - center.z) / semi.z;
    return dx * dx + dy * dy + dz * dz <= 1.0;
  };

  const Vec3 lo = center - Vec3{cells[0] * h / 2, cells[1] * h / 2, cells[2] * h / 2};
  std::map<std::array<int, 3>, int> vert_ids;
  std::vector<Vec3> verts;
  std::vector<std::array<int, 4>> tets;

  auto vertex_at = [&](int i, int j, int k) {
    auto [it, inserted] = vert_ids.try_emplace({i, j, k}, -1);
    if (inserted) {
      it->second = static_cast<int>(verts.size());
      verts.push_back({lo.x + i * h, lo.y + j * h, lo.z + k * h});
    }
    return it->second;
  };

  for (int k = 0; k < cells[2]; ++k)
    for (int j = 0; j < cells[1]; ++j)
      for (int i = 0; i < cells[0]; ++i) {
        const Vec3 cell_center{lo.x + (i + 0.5) * h, lo.y + (j + 0.5) * h,
                               lo.z + (k + 0.5) * h};
        if (!inside(cell_center)) continue;
        int corner[8];
        for (int cid = 0; cid < 8; ++cid)
          corner[cid] = vertex_at(i + (cid & 1), j + ((cid >> 1) & 1),
                                  k + ((cid >> 2) & 1));
        const bool odd = ((i + j + k) & 1) != 0;
        for (const auto& t : (odd ? kOddTets : kEvenTets))
          tets.push_back({corner[t[0]], corner[t[1]], corner[t[2]], corner[t[3]]});
      }
  if (verts.size() < 4 || tets.empty())
    throw InvalidArgument("make_ellipsoid_mesh: resolution too coarse");

  // Project boundary lattice vertices onto the ellipsoid surface so the mesh
  // hugs the target shape instead of staircasing.
  TetMesh rough = build_mesh(verts, tets);
  for (int v : surface_vertex_indices(rough)) {
    Vec3 d = rough.vertices[v] - center;
    Vec3 nd{d.x / semi.x, d.y / semi.y, d.z / semi.z};
    const double r = nd.norm();
    if (r > 1e-9) {
      const double scale = 1.0 / r;
      rough.vertices[v] = center + Vec3{d.x * scale, d.y * scale, d.z * scale};
    }
  }
  // Re-run construction: surface projection can flip slivers near the
  // boundary, so drop tets that collapsed.
  std::vector<std::array<int, 4>> keep;
  for (const auto& t : rough.tets) {
    const double vol = tet_signed_volume(rough.vertices[t[0]], rough.vertices[t[1]],
                                         rough.vertices[t[2]], rough.vertices[t[3]]);
    if (std::fabs(vol) > 1e-9) keep.push_back(t);
  }
  return build_mesh(rough.vertices, keep);
}

}  // namespace

TetMesh make_ellipsoid_mesh(const Vec3& center, const Vec3& semi_axes,
                            int target_vertices, int min_vertices,
                            int max_vertices) {
  TetMesh best;
  int best_diff = -1;
  for (int res = 2; res <= 16; ++res) {
    TetMesh m;
    try {
      m = lattice_ellipsoid(center, semi_axes, res);
    } catch (const Error&) {
      continue;
    }
    const int n = m.num_vertices();
    if (n > max_vertices && best_diff >= 0) break;
    const int diff = std::abs(n - target_vertices);
    if (n >= min_vertices && n <= max_vertices &&
        (best_diff < 0 || diff < best_diff)) {
      best = std::move(m);
      best_diff = diff;
    }
    if (n > max_vertices) break;
  }
  if (best_diff < 0)
    throw InvalidArgument(
        "make_ellipsoid_mesh: no lattice resolution hits the vertex budget");
  return best;
}

}  // namespace dmn
