#include "dmn/motion.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace dmn {

void SurrogateSignal::recompute_derived() {
  for (int i = 0; i < kPhases; ++i) {
    const int prev = (i + kPhases - 1) % kPhases;
    const int next = (i + 1) % kPhases;
    derived[i] = 0.5 * (samples[next] - samples[prev]);
  }
}

SurrogateSignal default_surrogate() {
  SurrogateSignal s;
  for (int i = 0; i < SurrogateSignal::kPhases; ++i)
    s.samples[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / SurrogateSignal::kPhases);
  s.recompute_derived();
  return s;
}

SurrogateSignal perturb_surrogate(const SurrogateSignal& signal,
                                  RngStream& rng, bool force_zero_jitter) {
  constexpr int n = SurrogateSignal::kPhases;
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double u = force_zero_jitter
                         ? 0.0
                         : rng.uniform(-0.4 * std::fabs(signal.samples[i]),
                                       0.4 * std::fabs(signal.samples[i]));
    y(i) = signal.samples[i] + u;
  }

  // Cubic least squares over phase index, resampled at the phases.
  Eigen::MatrixXd A(n, 4);
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(i);
    A(i, 0) = 1.0;
    A(i, 1) = x;
    A(i, 2) = x * x;
    A(i, 3) = x * x * x;
  }
  Eigen::VectorXd coeff = A.colPivHouseholderQr().solve(y);

  SurrogateSignal out;
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(i);
    out.samples[i] = coeff(0) + coeff(1) * x + coeff(2) * x * x +
                     coeff(3) * x * x * x;
  }
  out.recompute_derived();
  return out;
}

DeformationField synth_field(double amplitude, const MotionShape& shape,
                             const GridSpec& grid_spec,
                             const Vec3& rigid_shift) {
  if (!std::isfinite(amplitude))
    throw InvalidArgument("synth_field: amplitude must be finite");
  DeformationField f;
  f.grid = VectorGrid(grid_spec.dims, grid_spec.spacing, grid_spec.origin);
  f.amplitude = amplitude;
  f.rigid_shift = rigid_shift;

  auto envelope = [&](const Vec3& p) {
    const double dx = (p.x - shape.envelope_center.x) / shape.envelope_sigma.x;
    const double dy = (p.y - shape.envelope_center.y) / shape.envelope_sigma.y;
    const double dz = (p.z - shape.envelope_center.z) / shape.envelope_sigma.z;
    return std::exp(-0.5 * (dx * dx + dy * dy + dz * dz));
  };

  double max_u = 0.0;
  for (int k = 0; k < grid_spec.dims[2]; ++k)
    for (int j = 0; j < grid_spec.dims[1]; ++j)
      for (int i = 0; i < grid_spec.dims[0]; ++i) {
        const Vec3 p{grid_spec.origin.x + i * grid_spec.spacing.x,
                     grid_spec.origin.y + j * grid_spec.spacing.y,
                     grid_spec.origin.z + k * grid_spec.spacing.z};
        const double g = amplitude * envelope(p);
        const Vec3 u{rigid_shift.x, rigid_shift.y + shape.ap_magnitude * g,
                     rigid_shift.z + shape.si_magnitude * g};
        f.grid.set(i, j, k, u);
        max_u = std::max(max_u, u.norm());
      }
  if (max_u > shape.max_displacement)
    throw InvalidArgument("synth_field: displacement exceeds configured bound");

  // Numerical Jacobian determinant of x + u(x) at interior grid nodes.
  const auto& d = grid_spec.dims;
  for (int k = 1; k + 1 < d[2]; ++k)
    for (int j = 1; j + 1 < d[1]; ++j)
      for (int i = 1; i + 1 < d[0]; ++i) {
        double J[3][3];
        for (int c = 0; c < 3; ++c) {
          J[c][0] = (f.grid.at(c, i + 1, j, k) - f.grid.at(c, i - 1, j, k)) /
                    (2.0 * grid_spec.spacing.x);
          J[c][1] = (f.grid.at(c, i, j + 1, k) - f.grid.at(c, i, j - 1, k)) /
                    (2.0 * grid_spec.spacing.y);
          J[c][2] = (f.grid.at(c, i, j, k + 1) - f.grid.at(c, i, j, k - 1)) /
                    (2.0 * grid_spec.spacing.z);
          J[c][c] += 1.0;
        }
        const double det =
            J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
            J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
            J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
        if (det <= 0.0)
          throw FoldingDetected(
              "synth_field: non-positive Jacobian determinant; amplitude out "
              "of safe range");
      }
  return f;
}

std::vector<DeformationField> build_motion_set(const SurrogateSignal& base,
                                               const MotionSetConfig& config,
                                               std::uint64_t seed) {
  std::vector<DeformationField> fields;
  fields.reserve(static_cast<std::size_t>(config.n_signals) *
                 SurrogateSignal::kPhases * config.n_shift_variants);
  int state_id = 0;
  for (int sig = 0; sig < config.n_signals; ++sig) {
    RngStream sig_rng(seed, "surrogate", static_cast<std::uint64_t>(sig));
    const SurrogateSignal perturbed = perturb_surrogate(base, sig_rng);
    for (int phase = 0; phase < SurrogateSignal::kPhases; ++phase) {
      for (int variant = 0; variant < config.n_shift_variants; ++variant) {
        Vec3 shift{};
        if (variant > 0) {
          RngStream shift_rng(seed, "rigid-shift",
                              static_cast<std::uint64_t>(state_id));
          shift = {shift_rng.uniform(-config.shift_range, config.shift_range),
                   shift_rng.uniform(-config.shift_range, config.shift_range),
                   shift_rng.uniform(-config.shift_range, config.shift_range)};
        }
        DeformationField f = synth_field(perturbed.samples[phase],
                                         config.shape, config.grid, shift);
        f.signal_id = sig;
        f.phase_id = phase;
        f.state_id = state_id++;
        fields.push_back(std::move(f));
      }
    }
  }
  return fields;
}

Volume3D warp_volume(const Volume3D& volume, const VectorGrid& displacement) {
  const Vec3 vlo = volume.min_corner(), vhi = volume.max_corner();
  const Vec3 flo = displacement.min_corner(), fhi = displacement.max_corner();
  if (flo.x > vlo.x || flo.y > vlo.y || flo.z > vlo.z || fhi.x < vhi.x ||
      fhi.y < vhi.y || fhi.z < vhi.z)
    throw GridMismatch("warp_volume: field grid does not cover volume domain");

  Volume3D out(volume.dims, volume.spacing, volume.origin, 0.0);
  for (int k = 0; k < volume.dims[2]; ++k)
    for (int j = 0; j < volume.dims[1]; ++j)
      for (int i = 0; i < volume.dims[0]; ++i) {
        const Vec3 x = volume.voxel_center(i, j, k);
        const Vec3 u = displacement.sample(x);
        out.at(i, j, k) = volume.sample(x - u, 0.0);
      }
  return out;
}

Volume3D warp_volume(const Volume3D& volume, const DeformationField& field) {
  return warp_volume(volume, field.grid);
}

void write_motion_manifest(const std::string& path,
                           const std::vector<DeformationField>& fields) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for write: " + path);
  char buf[256];
  for (const auto& f : fields) {
    std::snprintf(buf, sizeof(buf), "%d %d %d %.17g %.17g %.17g %.17g\n",
                  f.state_id, f.signal_id, f.phase_id, f.rigid_shift.x,
                  f.rigid_shift.y, f.rigid_shift.z, f.amplitude);
    os << buf;
  }
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace dmn
