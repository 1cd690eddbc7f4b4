#pragma once

#include <string>
#include <vector>

#include "dmn/config.hpp"
#include "dmn/mesh.hpp"

namespace dmn {

struct StateRecord {
  int state_id = 0;
  int signal_id = 0;
  int phase_id = 0;
  double amplitude = 0.0;
  Vec3 rigid_shift{0.0, 0.0, 0.0};
  std::string split;    // train | val | test
  std::string gt_path;  // ground-truth node positions, relative to root
};

struct ImageRecord {
  int state_id = 0;
  double angle_deg = 0.0;
  std::string split;
  std::string path;  // relative to root
};

// Index of everything a training/evaluation run needs: the template mesh and
// reference volume, per-state ground truth, and the projection plan.
struct DatasetManifest {
  std::string root;
  std::string mesh_path;    // relative
  std::string volume_path;  // relative
  std::vector<StateRecord> states;
  std::vector<ImageRecord> images;

  std::vector<const ImageRecord*> split_images(const std::string& split) const;
  const StateRecord& state(int state_id) const;
};

// Simple text container for per-vertex positions: "N" then N lines "x y z".
void write_nodal_field(const std::string& path, const NodalField& field);
NodalField read_nodal_field(const std::string& path);

// Blur + signal-dependent noise + contrast curve + histogram equalization —
// a deterministic stand-in for real kV image characteristics. Applied
// identically at dataset generation and inference time.
ProjImage augment_kv_style(const ProjImage& drr, const AugmentConfig& config,
                           RngStream& rng);

// Builds the phantom, motion set, warped volumes, projections, ground-truth
// node positions and the manifest under `out_root`. Deterministic per seed.
DatasetManifest generate_dataset(const RunConfig& config,
                                 const std::string& out_root);

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

}  // namespace dmn
