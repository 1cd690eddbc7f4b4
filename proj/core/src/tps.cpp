#include "dmn/tps.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace dmn {

Vec3 TpsTransform::apply(const Vec3& x) const {
  Vec3 out;
  for (int c = 0; c < 3; ++c)
    out[c] = affine[c][0] + affine[c][1] * x.x + affine[c][2] * x.y +
             affine[c][3] * x.z;
  for (std::size_t k = 0; k < control_points.size(); ++k) {
    const double r = (x - control_points[k]).norm();
    out += weights[k] * r;
  }
  return out;
}

TpsTransform tps_fit(const std::vector<Vec3>& source,
                     const std::vector<Vec3>& target, double lambda) {
  const int k = static_cast<int>(source.size());
  if (k < 5 || source.size() != target.size())
    throw InvalidArgument("tps_fit: need K >= 5 matching point pairs");
  if (lambda < 0.0) throw InvalidArgument("tps_fit: lambda must be >= 0");

  const int n = k + 4;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 3);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j)
      A(i, j) = (source[i] - source[j]).norm();
    A(i, i) += lambda;
    A(i, k + 0) = 1.0;
    A(i, k + 1) = source[i].x;
    A(i, k + 2) = source[i].y;
    A(i, k + 3) = source[i].z;
    A(k + 0, i) = 1.0;
    A(k + 1, i) = source[i].x;
    A(k + 2, i) = source[i].y;
    A(k + 3, i) = source[i].z;
    rhs(i, 0) = target[i].x;
    rhs(i, 1) = target[i].y;
    rhs(i, 2) = target[i].z;
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible())
    throw SingularSystem("tps_fit: singular system (coplanar or duplicate points)");
  Eigen::MatrixXd sol = lu.solve(rhs);

  TpsTransform t;
  t.control_points = source;
  t.regularization = lambda;
  t.weights.resize(k);
  for (int i = 0; i < k; ++i)
    t.weights[i] = {sol(i, 0), sol(i, 1), sol(i, 2)};
  for (int c = 0; c < 3; ++c)
    for (int a = 0; a < 4; ++a) t.affine[c][a] = sol(k + a, c);
  return t;
}

Volume3D tps_warp_volume(const Volume3D& volume,
                         const TpsTransform& tps_inverse) {
  Volume3D out(volume.dims, volume.spacing, volume.origin, 0.0);
  for (int kk = 0; kk < volume.dims[2]; ++kk)
    for (int j = 0; j < volume.dims[1]; ++j)
      for (int i = 0; i < volume.dims[0]; ++i) {
        const Vec3 x = volume.voxel_center(i, j, kk);
        out.at(i, j, kk) = volume.sample(tps_inverse.apply(x), 0.0);
      }
  return out;
}

}  // namespace dmn
