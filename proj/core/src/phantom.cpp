#include "dmn/phantom.hpp"

#include <cmath>

#include "dmn/rng.hpp"

namespace dmn {

namespace {

double ellipsoid_level(const Vec3& p, const Vec3& center, const Vec3& radii) {
  const double dx = (p.x - center.x) / radii.x;
  const double dy = (p.y - center.y) / radii.y;
  const double dz = (p.z - center.z) / radii.z;
  return dx * dx + dy * dy + dz * dz;
}

// Smooth value noise in [-1, 1]: trilinear blend of hashed lattice values.
class ValueNoise {
public:
  ValueNoise(std::uint64_t seed, double pitch) : seed_(seed), pitch_(pitch) {}

  double operator()(const Vec3& p) const {
    const double fx = p.x / pitch_, fy = p.y / pitch_, fz = p.z / pitch_;
    const int ix = static_cast<int>(std::floor(fx));
    const int iy = static_cast<int>(std::floor(fy));
    const int iz = static_cast<int>(std::floor(fz));
    const double tx = smooth(fx - ix), ty = smooth(fy - iy), tz = smooth(fz - iz);
    double c[2][2][2];
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int c2 = 0; c2 < 2; ++c2)
          c[a][b][c2] = lattice(ix + a, iy + b, iz + c2);
    auto lerp = [](double u, double v, double t) { return u + (v - u) * t; };
    const double x00 = lerp(c[0][0][0], c[1][0][0], tx);
    const double x10 = lerp(c[0][1][0], c[1][1][0], tx);
    const double x01 = lerp(c[0][0][1], c[1][0][1], tx);
    const double x11 = lerp(c[0][1][1], c[1][1][1], tx);
    const double y0 = lerp(x00, x10, ty);
    const double y1 = lerp(x01, x11, ty);
    return lerp(y0, y1, tz);
  }

private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

  double lattice(int x, int y, int z) const {
    std::uint64_t h = seed_;
    h = RngStream::mix(h ^ (static_cast<std::uint64_t>(x) * 0x9e3779b97f4a7c15ull));
    h = RngStream::mix(h ^ (static_cast<std::uint64_t>(y) * 0xc2b2ae3d27d4eb4full));
    h = RngStream::mix(h ^ (static_cast<std::uint64_t>(z) * 0x165667b19e3779f9ull));
    return 2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0;
  }

  std::uint64_t seed_;
  double pitch_;
};

}  // namespace

void PhantomConfig::validate() const {
  for (int d : volume_dims)
    if (d < 8) throw InvalidArgument("phantom: volume dims must be >= 8");
  if (voxel_spacing.x <= 0 || voxel_spacing.y <= 0 || voxel_spacing.z <= 0)
    throw InvalidArgument("phantom: voxel spacing must be positive");
  if (body_density < 0 || liver_density <= 0 || rib_density <= 0)
    throw InvalidArgument("phantom: densities must be positive");
  if (target_vertices < 4)
    throw InvalidArgument("phantom: target_vertices must be >= 4");
  if (ellipsoid_level(liver_center, {0, 0, 0}, body_radii) > 0.5)
    throw InvalidArgument("phantom: liver center too close to the body edge");
}

GridSpec PhantomConfig::grid() const {
  GridSpec g;
  g.dims = volume_dims;
  g.spacing = voxel_spacing;
  g.origin = {-0.5 * (volume_dims[0] - 1) * voxel_spacing.x,
              -0.5 * (volume_dims[1] - 1) * voxel_spacing.y,
              -0.5 * (volume_dims[2] - 1) * voxel_spacing.z};
  return g;
}

Volume3D build_phantom_volume(const PhantomConfig& config, std::uint64_t seed) {
  config.validate();
  const GridSpec g = config.grid();
  Volume3D vol(g.dims, g.spacing, g.origin, 0.0);

  RngStream texture_seed(seed, "phantom-texture");
  const ValueNoise noise(texture_seed.next_u64(), config.texture_scale);

  // Rib arcs: partial ellipses just inside the body surface, alternating
  // front/back openings so each gantry angle sees a distinct bone pattern.
  struct Rib {
    double z, phi0, phi1, rx, ry;
  };
  std::vector<Rib> ribs;
  for (int r = 0; r < config.n_ribs; ++r) {
    const double frac = config.n_ribs == 1
                            ? 0.0
                            : (static_cast<double>(r) / (config.n_ribs - 1) - 0.5);
    Rib rib;
    rib.z = 1.4 * frac * config.body_radii.z * 0.8;
    const double open = 0.5 + 0.12 * r;  // radians, widening gap
    if (r % 2 == 0) {
      rib.phi0 = open;
      rib.phi1 = 2.0 * M_PI - open;
    } else {
      rib.phi0 = M_PI + open - 2.0 * M_PI;  // wrap through angle 0
      rib.phi1 = M_PI - open;
    }
    rib.rx = 0.85 * config.body_radii.x;
    rib.ry = 0.85 * config.body_radii.y;
    ribs.push_back(rib);
  }
  auto in_rib = [&](const Vec3& p) {
    for (const auto& rib : ribs) {
      if (std::fabs(p.z - rib.z) > config.rib_radius) continue;
      double phi = std::atan2(p.y / rib.ry, p.x / rib.rx);
      double lo = rib.phi0, hi = rib.phi1;
      bool inside_arc = phi >= lo && phi <= hi;
      if (!inside_arc && lo < -M_PI)  // wrapped interval
        inside_arc = phi >= lo + 2.0 * M_PI || phi <= hi;
      if (!inside_arc) continue;
      const Vec3 axis_pt{rib.rx * std::cos(phi), rib.ry * std::sin(phi), rib.z};
      if ((p - axis_pt).norm() <= config.rib_radius) return true;
    }
    return false;
  };

  for (int k = 0; k < vol.dims[2]; ++k)
    for (int j = 0; j < vol.dims[1]; ++j)
      for (int i = 0; i < vol.dims[0]; ++i) {
        const Vec3 p = vol.voxel_center(i, j, k);
        if (ellipsoid_level(p, {0, 0, 0}, config.body_radii) > 1.0) continue;
        double d = config.body_density;
        if (ellipsoid_level(p, config.liver_center, config.liver_radii) <= 1.0)
          d = config.liver_density *
              (1.0 + config.texture_amplitude * noise(p));
        if (in_rib(p)) d = config.rib_density;
        vol.at(i, j, k) = d;
      }
  return vol;
}

TetMesh build_template_mesh(const PhantomConfig& config) {
  config.validate();
  return make_ellipsoid_mesh(config.liver_center, config.liver_radii,
                             config.target_vertices);
}

}  // namespace dmn
