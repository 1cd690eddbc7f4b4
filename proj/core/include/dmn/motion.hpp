#pragma once

#include <array>
#include <string>
#include <vector>

#include "dmn/rng.hpp"
#include "dmn/volume.hpp"

namespace dmn {

struct FoldingDetected : Error {
  using Error::Error;
};

// Ten samples over one breath cycle plus the finite-difference derivative
// signal (computed with periodic ends; kept for fidelity, no consumer here).
struct SurrogateSignal {
  static constexpr int kPhases = 10;
  std::array<double, kPhases> samples{};
  std::array<double, kPhases> derived{};

  void recompute_derived();
};

// Default breathing trace: 0 at phase 0 (reference), peaking mid-cycle.
SurrogateSignal default_surrogate();

// Each sample s_i is jittered by Uniform(-0.4|s_i|, +0.4|s_i|), a cubic is
// least-squares fit to the jittered points, and the signal is resampled at
// the ten phases. Set force_zero_jitter to exercise the fit-only path.
SurrogateSignal perturb_surrogate(const SurrogateSignal& signal,
                                  RngStream& rng,
                                  bool force_zero_jitter = false);

struct MotionShape {
  Vec3 envelope_center{0.0, 0.0, 0.0};
  Vec3 envelope_sigma{60.0, 60.0, 80.0};  // mm
  double si_magnitude = 10.0;             // mm at unit amplitude
  double ap_magnitude = 3.0;              // mm at unit amplitude
  double max_displacement = 60.0;         // mm, hard bound
};

struct DeformationField {
  VectorGrid grid;
  double amplitude = 0.0;
  Vec3 rigid_shift{0.0, 0.0, 0.0};
  int signal_id = 0;
  int phase_id = 0;
  int state_id = 0;
};

// Analytic SI-dominant field u(x; s) = s * g(x) * (d_SI e_SI + d_AP e_AP)
// plus a uniform rigid shift; g is a separable Gaussian envelope. Throws
// FoldingDetected when the deformation Jacobian loses positive determinant
// at any grid node.
DeformationField synth_field(double amplitude, const MotionShape& shape,
                             const GridSpec& grid_spec,
                             const Vec3& rigid_shift = {0.0, 0.0, 0.0});

struct MotionSetConfig {
  int n_signals = 11;
  int n_shift_variants = 5;  // includes the zero shift
  double shift_range = 5.0;  // mm, per axis
  MotionShape shape;
  GridSpec grid;
};

// n_signals x 10 phases x n_shift_variants deterministic deformation states.
std::vector<DeformationField> build_motion_set(const SurrogateSignal& base,
                                               const MotionSetConfig& config,
                                               std::uint64_t seed);

// Backward warping: output(x) = input(x - u(x)), trilinear, zero padding.
Volume3D warp_volume(const Volume3D& volume, const DeformationField& field);
Volume3D warp_volume(const Volume3D& volume, const VectorGrid& displacement);

// Motion-set manifest: one line per state
//   state_id signal_id phase shift_x shift_y shift_z amplitude
void write_motion_manifest(const std::string& path,
                           const std::vector<DeformationField>& fields);

}  // namespace dmn
