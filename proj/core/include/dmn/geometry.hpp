#pragma once

#include <array>
#include <string>
#include <vector>

#include "dmn/common.hpp"
#include "dmn/vec3.hpp"

namespace dmn {

struct InvalidGeometry : Error {
  using Error::Error;
};
struct AngleOutOfRange : Error {
  using Error::Error;
};

// Cone-beam source/detector description. The source rotates about the
// isocenter in the axial (x-y) plane; x = LR, y = AP, z = SI.
struct ProjectionGeometry {
  double gantry_angle_deg = 0.0;         // [0, 360)
  double source_axis_distance = 1000.0;  // mm
  double source_detector_distance = 1500.0;
  std::array<int, 2> detector_pixels{64, 64};  // (u, v)
  double detector_pixel_size = 4.0;            // mm
  std::array<double, 2> detector_origin_offset{0.0, 0.0};  // mm, limited FOV
  Vec3 isocenter{0.0, 0.0, 0.0};

  void validate() const;

  Vec3 source_position() const;
  // Unit detector axes: u in the axial plane, v along SI.
  Vec3 u_axis() const;
  Vec3 v_axis() const;
  // World position of the center of detector pixel (a, b).
  Vec3 pixel_position(int a, int b) const;

  ProjectionGeometry with_angle(double angle_deg) const {
    ProjectionGeometry g = *this;
    g.gantry_angle_deg = angle_deg;
    return g;
  }
};

struct ProjImage {
  int width = 0, height = 0;
  std::vector<double> pixels;  // row-major, [v][u]
  double angle_deg = 0.0;
  ProjectionGeometry geometry;

  double& at(int u, int v) { return pixels[static_cast<std::size_t>(v) * width + u]; }
  double at(int u, int v) const { return pixels[static_cast<std::size_t>(v) * width + u]; }
};

// 16-bit PGM plus a text sidecar "<path>.meta" holding "angle=<degrees>".
void write_proj_image(const std::string& path, const ProjImage& img);
ProjImage read_proj_image(const std::string& path);

}  // namespace dmn
