#include "dmn/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace dmn {

void ProjectionGeometry::validate() const {
  if (gantry_angle_deg < 0.0 || gantry_angle_deg >= 360.0)
    throw AngleOutOfRange("gantry angle must be in [0, 360)");
  if (!(source_axis_distance > 0.0 &&
        source_axis_distance < source_detector_distance))
    throw InvalidGeometry("require 0 < SAD < SDD");
  if (detector_pixels[0] < 16 || detector_pixels[1] < 16)
    throw InvalidGeometry("detector must be at least 16x16 pixels");
  if (detector_pixel_size <= 0.0)
    throw InvalidGeometry("detector pixel size must be positive");
}

Vec3 ProjectionGeometry::source_position() const {
  const double rad = gantry_angle_deg * M_PI / 180.0;
  const Vec3 w{std::sin(rad), -std::cos(rad), 0.0};
  return isocenter + w * source_axis_distance;
}

Vec3 ProjectionGeometry::u_axis() const {
  const double rad = gantry_angle_deg * M_PI / 180.0;
  return {std::cos(rad), std::sin(rad), 0.0};
}

Vec3 ProjectionGeometry::v_axis() const { return {0.0, 0.0, 1.0}; }

Vec3 ProjectionGeometry::pixel_position(int a, int b) const {
  const double rad = gantry_angle_deg * M_PI / 180.0;
  const Vec3 w{std::sin(rad), -std::cos(rad), 0.0};
  const Vec3 center =
      isocenter - w * (source_detector_distance - source_axis_distance);
  const double du =
      (a + 0.5 - detector_pixels[0] / 2.0) * detector_pixel_size +
      detector_origin_offset[0];
  const double dv =
      (b + 0.5 - detector_pixels[1] / 2.0) * detector_pixel_size +
      detector_origin_offset[1];
  return center + u_axis() * du + v_axis() * dv;
}

void write_proj_image(const std::string& path, const ProjImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os << "P5\n" << img.width << " " << img.height << "\n65535\n";
  for (double p : img.pixels) {
    const double c = p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p);
    const auto q = static_cast<unsigned>(std::lround(c * 65535.0));
    const unsigned char hi = static_cast<unsigned char>(q >> 8);
    const unsigned char lo = static_cast<unsigned char>(q & 0xff);
    os.put(static_cast<char>(hi));
    os.put(static_cast<char>(lo));
  }
  if (!os) throw IoError("write failed: " + path);

  std::ofstream meta(path + ".meta");
  if (!meta) throw IoError("cannot open for write: " + path + ".meta");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "angle=%.17g\n", img.angle_deg);
  meta << buf;
}

ProjImage read_proj_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 65535 || w <= 0 || h <= 0)
    throw IoError("expected 16-bit P5 PGM: " + path);
  is.get();
  ProjImage img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<std::size_t>(w) * h);
  for (auto& p : img.pixels) {
    const int hi = is.get();
    const int lo = is.get();
    if (hi < 0 || lo < 0) throw IoError("truncated PGM: " + path);
    p = static_cast<double>((hi << 8) | lo) / 65535.0;
  }

  std::ifstream meta(path + ".meta");
  if (meta) {
    std::string line;
    while (std::getline(meta, line)) {
      if (line.rfind("angle=", 0) == 0)
        img.angle_deg = std::stod(line.substr(6));
    }
  }
  return img;
}

}  // namespace dmn
