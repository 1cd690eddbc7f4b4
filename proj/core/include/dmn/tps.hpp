#pragma once

#include <vector>

#include "dmn/common.hpp"
#include "dmn/vec3.hpp"
#include "dmn/volume.hpp"

namespace dmn {

struct SingularSystem : Error {
  using Error::Error;
};

// 3D thin-plate spline with the biharmonic kernel U(r) = r.
struct TpsTransform {
  std::vector<Vec3> control_points;   // source side of the fit
  std::vector<Vec3> weights;          // one 3-vector per control point
  // affine[c] = (b, ax, ay, az): T(x)[c] = b + a . x + sum_k w_k[c] U(|x-p_k|)
  std::array<std::array<double, 4>, 3> affine{};
  double regularization = 0.0;

  Vec3 apply(const Vec3& x) const;
};

// Solves the standard TPS system; lambda = 0 interpolates the targets.
TpsTransform tps_fit(const std::vector<Vec3>& source,
                     const std::vector<Vec3>& target, double lambda = 0.0);

// output(x) = input(T(x)); pass a backward transform (fit deformed->template)
// so no numerical inversion is needed.
Volume3D tps_warp_volume(const Volume3D& volume, const TpsTransform& tps_inverse);

}  // namespace dmn
