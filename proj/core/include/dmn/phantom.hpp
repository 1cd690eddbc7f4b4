#pragma once

#include <array>
#include <cstdint>

#include "dmn/mesh.hpp"
#include "dmn/volume.hpp"

namespace dmn {

// Synthetic thorax stand-in: a soft-tissue body ellipsoid containing an
// off-center liver ellipsoid with smooth internal texture, plus high-density
// rib arcs so projections carry angle-dependent structure.
struct PhantomConfig {
  std::array<int, 3> volume_dims{64, 64, 64};
  Vec3 voxel_spacing{4.0, 4.0, 4.0};  // mm

  Vec3 body_radii{110.0, 90.0, 120.0};
  double body_density = 0.2;

  Vec3 liver_center{40.0, 20.0, 0.0};
  Vec3 liver_radii{55.0, 45.0, 65.0};
  double liver_density = 1.0;
  double texture_amplitude = 0.35;  // relative, smooth value noise
  double texture_scale = 28.0;      // mm lattice pitch

  int n_ribs = 6;
  double rib_density = 3.0;
  double rib_radius = 7.0;  // mm tube radius

  int target_vertices = 300;

  void validate() const;
  // Grid centered on the isocenter (origin = world position of voxel 0,0,0).
  GridSpec grid() const;
};

// Deterministic per seed; texture drawn from a named stream.
Volume3D build_phantom_volume(const PhantomConfig& config, std::uint64_t seed);

// Template tetrahedral mesh of the liver ellipsoid.
TetMesh build_template_mesh(const PhantomConfig& config);

}  // namespace dmn
