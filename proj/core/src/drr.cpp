#include "dmn/drr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dmn {

double siddon_line_integral(const Volume3D& volume, const Vec3& src,
                            const Vec3& dst) {
  const Vec3 d = dst - src;
  const double ray_len = d.norm();
  if (ray_len <= 0.0) return 0.0;

  // Voxel boundary planes: bmin[c] + i * spacing[c], i = 0..dims[c].
  Vec3 bmin = volume.origin - volume.spacing * 0.5;

  double a_min = 0.0, a_max = 1.0;
  for (int c = 0; c < 3; ++c) {
    const double extent = volume.dims[c] * volume.spacing[c];
    if (std::fabs(d[c]) < 1e-12) {
      if (src[c] < bmin[c] || src[c] > bmin[c] + extent) return 0.0;
    } else {
      const double a0 = (bmin[c] - src[c]) / d[c];
      const double a1 = (bmin[c] + extent - src[c]) / d[c];
      a_min = std::max(a_min, std::min(a0, a1));
      a_max = std::min(a_max, std::max(a0, a1));
    }
  }
  if (a_min >= a_max) return 0.0;

  int idx[3], step[3];
  double a_next[3], da[3];
  for (int c = 0; c < 3; ++c) {
    const double entry = src[c] + a_min * d[c];
    int i = static_cast<int>(std::floor((entry - bmin[c]) / volume.spacing[c]));
    i = std::clamp(i, 0, volume.dims[c] - 1);
    idx[c] = i;
    if (d[c] > 1e-12) {
      step[c] = 1;
      da[c] = volume.spacing[c] / d[c];
      a_next[c] = (bmin[c] + (i + 1) * volume.spacing[c] - src[c]) / d[c];
    } else if (d[c] < -1e-12) {
      step[c] = -1;
      da[c] = -volume.spacing[c] / d[c];
      a_next[c] = (bmin[c] + i * volume.spacing[c] - src[c]) / d[c];
    } else {
      step[c] = 0;
      da[c] = 0.0;
      a_next[c] = std::numeric_limits<double>::infinity();
    }
  }

  double sum = 0.0;
  double a = a_min;
  const double tie_eps = 1e-13;
  while (a < a_max - 1e-13) {
    double a_stop = std::min({a_next[0], a_next[1], a_next[2], a_max});
    const double seg = (a_stop - a) * ray_len;
    if (seg > 0.0) sum += volume.at(idx[0], idx[1], idx[2]) * seg;
    for (int c = 0; c < 3; ++c) {
      if (step[c] != 0 && a_next[c] <= a_stop + tie_eps) {
        idx[c] += step[c];
        a_next[c] += da[c];
        if (idx[c] < 0 || idx[c] >= volume.dims[c]) return sum;
      }
    }
    a = a_stop;
  }
  return sum;
}

ProjImage siddon_raw(const Volume3D& volume, const ProjectionGeometry& geom) {
  geom.validate();
  volume.validate();
  ProjImage img;
  img.width = geom.detector_pixels[0];
  img.height = geom.detector_pixels[1];
  img.angle_deg = geom.gantry_angle_deg;
  img.geometry = geom;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  const Vec3 src = geom.source_position();
  for (int b = 0; b < img.height; ++b)
    for (int a = 0; a < img.width; ++a)
      img.at(a, b) = siddon_line_integral(volume, src, geom.pixel_position(a, b));
  return img;
}

ProjImage siddon_drr(const Volume3D& volume, const ProjectionGeometry& geom) {
  ProjImage img = siddon_raw(volume, geom);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double p : img.pixels) {
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  if (hi > lo) {
    const double inv = 1.0 / (hi - lo);
    for (auto& p : img.pixels) p = (p - lo) * inv;
  } else {
    for (auto& p : img.pixels) p = 0.0;
  }
  return img;
}

ProjImage mask_drr(const Volume3D& mask_volume, const ProjectionGeometry& geom) {
  ProjImage img = siddon_raw(mask_volume, geom);
  for (auto& p : img.pixels) p = p > 0.0 ? 1.0 : 0.0;
  return img;
}

}  // namespace dmn
