#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "dmn/mesh.hpp"
#include "doctest.h"

using namespace dmn;

namespace {

TetMesh single_tet() {
  return build_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}},
                    {{0, 1, 2, 3}});
}

TetMesh two_tets_shared_face() {
  // Shared face (1,2,3); apexes 0 and 4 on opposite sides.
  return build_mesh(
      {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}},
      {{0, 1, 2, 3}, {4, 1, 2, 3}});
}

}  // namespace

TEST_CASE("build_mesh: single tet is the complete graph K4") {
  TetMesh m = single_tet();
  CHECK(m.edges.size() == 6);
  for (const auto& nbrs : m.adjacency) CHECK(nbrs.size() == 3);
}

TEST_CASE("build_mesh: two tets sharing a face") {
  TetMesh m = two_tets_shared_face();
  CHECK(m.edges.size() == 9);
  for (int v : {1, 2, 3}) CHECK(m.adjacency[v].size() == 4);
  CHECK(m.adjacency[0].size() == 3);
  CHECK(m.adjacency[4].size() == 3);
}

TEST_CASE("build_mesh: adjacency is symmetric without self-loops") {
  TetMesh m = two_tets_shared_face();
  for (int i = 0; i < m.num_vertices(); ++i)
    for (int j : m.adjacency[i]) {
      CHECK(i != j);
      const auto& back = m.adjacency[j];
      CHECK(std::find(back.begin(), back.end(), i) != back.end());
    }
}

TEST_CASE("build_mesh: repeated index rejected") {
  CHECK_THROWS_AS(build_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}},
                             {{0, 1, 1, 2}}),
                  DegenerateTet);
}

TEST_CASE("build_mesh: orientation normalized to positive volume") {
  // Swapped vertices would give negative signed volume without the fix-up.
  TetMesh m = build_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}},
                         {{1, 0, 2, 3}});
  const auto& t = m.tets[0];
  CHECK(tet_signed_volume(m.vertices[t[0]], m.vertices[t[1]],
                          m.vertices[t[2]], m.vertices[t[3]]) > 0.0);
}

TEST_CASE("discrete_laplacian: centroid vertex gives zero") {
  TetMesh m = single_tet();
  NodalField pos;
  pos.values = m.vertices;
  // Move vertex 0 to the centroid of its neighbors (1,2,3).
  pos[0] = (pos[1] + pos[2] + pos[3]) * (1.0 / 3.0);
  NodalField d = discrete_laplacian(pos, m);
  CHECK(std::fabs(d[0].x) < 1e-12);
  CHECK(std::fabs(d[0].y) < 1e-12);
  CHECK(std::fabs(d[0].z) < 1e-12);
}

TEST_CASE("discrete_laplacian: exact translation invariance") {
  TetMesh m = two_tets_shared_face();
  NodalField pos;
  pos.values = m.vertices;
  NodalField base = discrete_laplacian(pos, m);
  const Vec3 t{13.25, -7.5, 3.0};
  NodalField shifted = pos;
  for (auto& p : shifted.values) p = p + t;
  NodalField moved = discrete_laplacian(shifted, m);
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(std::fabs(base[i].x - moved[i].x) <= 1e-12);
    CHECK(std::fabs(base[i].y - moved[i].y) <= 1e-12);
    CHECK(std::fabs(base[i].z - moved[i].z) <= 1e-12);
  }
}

TEST_CASE("discrete_laplacian: single-neighbor case") {
  // Two tets give every vertex >= 3 neighbors, so build the K4 and read off
  // a hand case instead: vertex 0 at (1,0,0) with neighbors all at origin is
  // not constructible in a valid tet; check the formula on K4 directly.
  TetMesh m = single_tet();
  NodalField pos;
  pos.values = {{1, 0, 0}, {0, 0, 0}, {0, 0, 0.5}, {0, 0.5, 0}};
  NodalField d = discrete_laplacian(pos, m);
  // delta_0 = p0 - mean(p1,p2,p3) = (1,0,0) - (0, 1/6, 1/6).
  CHECK(d[0].x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d[0].y == doctest::Approx(-1.0 / 6.0).epsilon(1e-12));
  CHECK(d[0].z == doctest::Approx(-1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("discrete_laplacian: linear in positions") {
  TetMesh m = two_tets_shared_face();
  NodalField a, b;
  a.values = m.vertices;
  b.values = m.vertices;
  for (auto& p : b.values) p = Vec3{p.z, p.x * 2.0, -p.y};
  NodalField da = discrete_laplacian(a, m);
  NodalField db = discrete_laplacian(b, m);
  NodalField sum;
  sum.values.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    sum.values[i] = a[i] * 2.0 + b[i] * (-3.0);
  NodalField ds = discrete_laplacian(sum, m);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec3 expect = da[i] * 2.0 + db[i] * (-3.0);
    CHECK(std::fabs(ds[i].x - expect.x) <= 1e-12);
    CHECK(std::fabs(ds[i].y - expect.y) <= 1e-12);
    CHECK(std::fabs(ds[i].z - expect.z) <= 1e-12);
  }
}

TEST_CASE("extract_surface: single tet has 4 boundary triangles") {
  CHECK(extract_surface(single_tet()).size() == 4);
}

TEST_CASE("extract_surface: shared face excluded") {
  CHECK(extract_surface(two_tets_shared_face()).size() == 6);
}

TEST_CASE("extract_surface: independent of tet ordering") {
  TetMesh a = two_tets_shared_face();
  TetMesh b = build_mesh(
      {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}},
      {{4, 1, 2, 3}, {0, 1, 2, 3}});
  auto sa = extract_surface(a);
  auto sb = extract_surface(b);
  auto key = [](std::array<int, 3> t) {
    std::sort(t.begin(), t.end());
    return t;
  };
  std::vector<std::array<int, 3>> ka, kb;
  for (auto& t : sa) ka.push_back(key(t));
  for (auto& t : sb) kb.push_back(key(t));
  std::sort(ka.begin(), ka.end());
  std::sort(kb.begin(), kb.end());
  CHECK(ka == kb);
}

TEST_CASE("extract_surface: closed ellipsoid mesh has even triangle count") {
  TetMesh m = make_ellipsoid_mesh({0, 0, 0}, {30, 28, 32}, 300);
  auto tris = extract_surface(m);
  CHECK(tris.size() % 2 == 0);
  CHECK(!tris.empty());
}

TEST_CASE("surface_vertex_indices: single tet is all-boundary") {
  auto idx = surface_vertex_indices(single_tet());
  CHECK(idx.size() == 4);
}

TEST_CASE("rasterize_mask: interior and exterior voxels") {
  TetMesh m = single_tet();
  GridSpec g;
  g.dims = {16, 16, 16};
  g.spacing = {0.1, 0.1, 0.1};
  g.origin = {-0.25, -0.25, -0.25};
  Volume3D mask = rasterize_mask(m, g);
  // Voxel whose center is nearest the tet centroid (0.25,0.25,0.25).
  CHECK(mask.at(5, 5, 5) == 1.0);
  // Corner voxel, far outside.
  CHECK(mask.at(0, 0, 0) == 0.0);
  for (double v : mask.data) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("rasterize_mask: volume estimate near analytic tet volume") {
  TetMesh m = make_ellipsoid_mesh({0, 0, 0}, {30, 28, 32}, 300);
  GridSpec g;
  g.dims = {64, 64, 64};
  g.spacing = {1.2, 1.2, 1.2};
  g.origin = {-37.8, -37.8, -37.8};
  Volume3D mask = rasterize_mask(m, g);
  double count = 0.0;
  for (double v : mask.data) count += v;
  const double voxel_vol = g.spacing.x * g.spacing.y * g.spacing.z;
  const double analytic = total_tet_volume(m);
  CHECK(std::fabs(count * voxel_vol - analytic) / analytic < 0.05);
}

TEST_CASE("rasterize_mask: coarse grid reported") {
  TetMesh m = single_tet();
  GridSpec g;
  g.dims = {4, 4, 4};
  g.spacing = {0.5, 0.5, 0.5};
  g.origin = {-0.75, -0.75, -0.75};
  bool coarse = false;
  rasterize_mask(m, g, &coarse);
  CHECK(coarse);
}

TEST_CASE("sample_field_at_nodes: zero and constant fields") {
  TetMesh m = single_tet();
  VectorGrid f({8, 8, 8}, {0.25, 0.25, 0.25}, {-0.5, -0.5, -0.5});
  NodalField zero = sample_field_at_nodes(f, m);
  for (const auto& v : zero.values) {
    CHECK(v.x == 0.0);
    CHECK(v.y == 0.0);
    CHECK(v.z == 0.0);
  }
  for (int k = 0; k < 8; ++k)
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 8; ++i) f.set(i, j, k, {3.0, 0.0, 0.0});
  NodalField c = sample_field_at_nodes(f, m);
  for (const auto& v : c.values) {
    CHECK(v.x == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(v.y == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("sample_field_at_nodes: affine fields reproduced exactly") {
  TetMesh m = two_tets_shared_face();
  VectorGrid f({10, 10, 10}, {0.3, 0.3, 0.3}, {-0.9, -0.9, -0.9});
  auto affine = [](const Vec3& p) {
    return Vec3{0.5 + 0.2 * p.x - 0.1 * p.y, 1.0 - 0.3 * p.z,
                0.05 * p.x + 0.4 * p.y + 0.1 * p.z};
  };
  for (int k = 0; k < 10; ++k)
    for (int j = 0; j < 10; ++j)
      for (int i = 0; i < 10; ++i) {
        const Vec3 p{f.origin.x + i * f.spacing.x, f.origin.y + j * f.spacing.y,
                     f.origin.z + k * f.spacing.z};
        f.set(i, j, k, affine(p));
      }
  NodalField s = sample_field_at_nodes(f, m);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Vec3 expect = affine(m.vertices[i]);
    CHECK(std::fabs(s[i].x - expect.x) <= 1e-9 * (1.0 + std::fabs(expect.x)));
    CHECK(std::fabs(s[i].y - expect.y) <= 1e-9 * (1.0 + std::fabs(expect.y)));
    CHECK(std::fabs(s[i].z - expect.z) <= 1e-9 * (1.0 + std::fabs(expect.z)));
  }
}

TEST_CASE("sample_field_at_nodes: vertex outside grid rejected") {
  TetMesh m = single_tet();
  VectorGrid f({4, 4, 4}, {0.1, 0.1, 0.1}, {0.0, 0.0, 0.0});
  CHECK_THROWS_AS(sample_field_at_nodes(f, m), OutOfDomain);
}

TEST_CASE("mesh text format round-trips") {
  TetMesh m = two_tets_shared_face();
  const std::string path =
      (std::filesystem::temp_directory_path() / "dmn_mesh_rt.msh").string();
  write_mesh(path, m);
  TetMesh r = read_mesh(path);
  REQUIRE(r.num_vertices() == m.num_vertices());
  REQUIRE(r.tets.size() == m.tets.size());
  for (int i = 0; i < m.num_vertices(); ++i) {
    CHECK(r.vertices[i].x == m.vertices[i].x);
    CHECK(r.vertices[i].y == m.vertices[i].y);
    CHECK(r.vertices[i].z == m.vertices[i].z);
  }
  CHECK(r.edges == m.edges);
  std::filesystem::remove(path);
}

TEST_CASE("make_ellipsoid_mesh: vertex count in range and valid graph") {
  TetMesh m = make_ellipsoid_mesh({10, -5, 3}, {55, 45, 65}, 300);
  CHECK(m.num_vertices() >= 200);
  CHECK(m.num_vertices() <= 900);
  for (const auto& nbrs : m.adjacency) CHECK(!nbrs.empty());
  // All vertices inside the (slightly padded) ellipsoid.
  for (const auto& v : m.vertices) {
    const double q = std::pow((v.x - 10) / 55.0, 2) +
                     std::pow((v.y + 5) / 45.0, 2) +
                     std::pow((v.z - 3) / 65.0, 2);
    CHECK(q <= 1.0 + 1e-9);
  }
}
