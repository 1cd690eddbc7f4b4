#pragma once

#include "dmn/geometry.hpp"
#include "dmn/volume.hpp"

namespace dmn {

// Exact line integral of voxel densities from `src` to `dst` (parametric
// Siddon-Jacobs traversal). Units: density * mm.
double siddon_line_integral(const Volume3D& volume, const Vec3& src,
                            const Vec3& dst);

// Raw line-integral image, no normalization.
ProjImage siddon_raw(const Volume3D& volume, const ProjectionGeometry& geom);

// DRR with per-image min-max normalization to [0, 1].
ProjImage siddon_drr(const Volume3D& volume, const ProjectionGeometry& geom);

// Binary silhouette of a binary volume: pixel = 1 where the integral > 0.
ProjImage mask_drr(const Volume3D& mask_volume, const ProjectionGeometry& geom);

}  // namespace dmn
