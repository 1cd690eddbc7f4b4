#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "dmn/common.hpp"
#include "dmn/vec3.hpp"
#include "dmn/volume.hpp"

namespace dmn {

struct DegenerateTet : Error {
  using Error::Error;
};

// Per-vertex 3-vector field aligned with TetMesh vertex order.
struct NodalField {
  std::vector<Vec3> values;

  std::size_t size() const { return values.size(); }
  Vec3& operator[](std::size_t i) { return values[i]; }
  const Vec3& operator[](std::size_t i) const { return values[i]; }
};

// Undirected tetrahedral graph: vertex positions, tet cells, and the derived
// edge set / adjacency. Tets are orientation-normalized (positive signed
// volume) at construction.
struct TetMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 4>> tets;
  std::vector<std::pair<int, int>> edges;       // i < j, sorted
  std::vector<std::vector<int>> adjacency;      // sorted neighbor lists

  int num_vertices() const { return static_cast<int>(vertices.size()); }
};

TetMesh build_mesh(std::vector<Vec3> vertices,
                   std::vector<std::array<int, 4>> tets);

double tet_signed_volume(const Vec3& a, const Vec3& b, const Vec3& c,
                         const Vec3& d);
double total_tet_volume(const TetMesh& mesh);

// delta_i = (1/|S(i)|) sum_{j in S(i)} (p_i - p_j) over the 1-ring.
NodalField discrete_laplacian(const NodalField& positions, const TetMesh& mesh);

// Boundary triangles (faces belonging to exactly one tet), outward-oriented.
std::vector<std::array<int, 3>> extract_surface(const TetMesh& mesh);

// Indices of vertices that lie on at least one boundary triangle.
std::vector<int> surface_vertex_indices(const TetMesh& mesh);

// Binary mask: voxel = 1 iff its center lies inside any tet (barycentric
// test, tolerance -1e-9). Sets *grid_too_coarse when fewer than 8 voxels
// span the mesh bounding box along some axis.
Volume3D rasterize_mask(const TetMesh& mesh, const GridSpec& grid,
                        bool* grid_too_coarse = nullptr);

// Same rasterization for externally supplied positions (e.g. a predicted
// deformed configuration on the template connectivity).
Volume3D rasterize_mask(const TetMesh& mesh, const NodalField& positions,
                        const GridSpec& grid, bool* grid_too_coarse = nullptr);

// Trilinear displacement samples at the mesh vertices.
NodalField sample_field_at_nodes(const VectorGrid& field, const TetMesh& mesh);

// Plain-text mesh format: "N M" header, N lines "x y z", M lines "i j k l".
void write_mesh(const std::string& path, const TetMesh& mesh);
TetMesh read_mesh(const std::string& path);

// Lattice-subdivided ellipsoid; vertex count steered toward target_vertices
// within [min_vertices, max_vertices].
TetMesh make_ellipsoid_mesh(const Vec3& center, const Vec3& semi_axes,
                            int target_vertices, int min_vertices = 200,
                            int max_vertices = 900);

}  // namespace dmn
