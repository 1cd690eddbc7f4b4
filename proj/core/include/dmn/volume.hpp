#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "dmn/common.hpp"
#include "dmn/vec3.hpp"

namespace dmn {

struct GridMismatch : Error {
  using Error::Error;
};
struct OutOfDomain : Error {
  using Error::Error;
};

// Grid description shared by volumes, vector fields, and rasterization.
// `origin` is the world position (mm) of the center of voxel (0,0,0).
struct GridSpec {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
};

// Scalar voxel grid. `origin` is the world position (mm) of the center of
// voxel (0,0,0); data is stored x-fastest.
struct Volume3D {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  std::vector<double> data;

  Volume3D() = default;
  Volume3D(std::array<int, 3> d, Vec3 sp, Vec3 org, double fill = 0.0);

  std::size_t size() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(k) * dims[1] * dims[0] +
           static_cast<std::size_t>(j) * dims[0] + i;
  }
  double& at(int i, int j, int k) { return data[index(i, j, k)]; }
  double at(int i, int j, int k) const { return data[index(i, j, k)]; }

  Vec3 voxel_center(int i, int j, int k) const {
    return {origin.x + i * spacing.x, origin.y + j * spacing.y,
            origin.z + k * spacing.z};
  }
  // World-space bounds of voxel centers.
  Vec3 min_corner() const { return origin; }
  Vec3 max_corner() const {
    return voxel_center(dims[0] - 1, dims[1] - 1, dims[2] - 1);
  }

  bool same_grid(const Volume3D& o) const;

  // Trilinear interpolation at world position p. Outside the voxel-center
  // bounding box the value fades to `outside` (clamped-edge blending is not
  // used; samples beyond the last center are treated as `outside`).
  double sample(const Vec3& p, double outside = 0.0) const;

  void validate() const;
};

// Dense 3-vector field on a Volume3D-shaped grid (used for displacement
// fields). Stored as three scalar channels sharing one grid description.
struct VectorGrid {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  std::vector<double> data;  // channel-major: [3][nz][ny][nx]

  VectorGrid() = default;
  VectorGrid(std::array<int, 3> d, Vec3 sp, Vec3 org);

  std::size_t voxels() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int c, int i, int j, int k) const {
    return static_cast<std::size_t>(c) * voxels() +
           static_cast<std::size_t>(k) * dims[1] * dims[0] +
           static_cast<std::size_t>(j) * dims[0] + i;
  }
  double& at(int c, int i, int j, int k) { return data[index(c, i, j, k)]; }
  double at(int c, int i, int j, int k) const { return data[index(c, i, j, k)]; }
  void set(int i, int j, int k, const Vec3& v) {
    at(0, i, j, k) = v.x;
    at(1, i, j, k) = v.y;
    at(2, i, j, k) = v.z;
  }
  Vec3 get(int i, int j, int k) const {
    return {at(0, i, j, k), at(1, i, j, k), at(2, i, j, k)};
  }

  Vec3 min_corner() const { return origin; }
  Vec3 max_corner() const {
    return {origin.x + (dims[0] - 1) * spacing.x,
            origin.y + (dims[1] - 1) * spacing.y,
            origin.z + (dims[2] - 1) * spacing.z};
  }
  bool contains(const Vec3& p) const;

  // Trilinear interpolation; throws OutOfDomain outside the grid.
  Vec3 sample(const Vec3& p) const;
  // Clamped variant for warping, where rays may leave the field support.
  Vec3 sample_clamped(const Vec3& p) const;
};

// Text header + raw little-endian float64 payload; bit-exact round-trip.
void write_volume(const std::string& path, const Volume3D& v);
Volume3D read_volume(const std::string& path);
void write_vector_grid(const std::string& path, const VectorGrid& g);
VectorGrid read_vector_grid(const std::string& path);

}  // namespace dmn
