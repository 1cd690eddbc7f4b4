#pragma once

#include <cstdint>
#include <string>

#include "dmn/geometry.hpp"
#include "dmn/model.hpp"
#include "dmn/motion.hpp"
#include "dmn/phantom.hpp"

namespace dmn {

struct UnknownKey : Error {
  using Error::Error;
};

struct ScheduleConfig {
  double lr = 2e-4;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch_size = 8;
  int epoch_cap = 150;
  int patience = 30;      // stop after this many stagnant epochs
  int lr_patience = 8;    // decay lr after this many stagnant epochs
  double lr_factor = 0.8;

  void validate() const;
};

struct DatasetConfig {
  int n_train_states = 40;
  int n_val_states = 10;
  int n_test_states = 10;
  int n_train_angles = 16;  // uniform spacing, shared with validation
  int n_test_angles = 8;    // random per test state

  void validate() const;
};

struct AugmentConfig {
  bool enabled = true;
  double blur_sigma = 1.0;       // pixels
  double noise_level = 0.02;     // std at unit intensity (variance ~ intensity)
  double contrast_gamma = 0.8;

  void validate() const;
};

// Every pipeline stage reads one of these; all values are range-validated at
// load and unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  PhantomConfig phantom;
  MotionSetConfig motion;
  ProjectionGeometry geometry;
  ModelConfig model;  // n_vertices resolved from the template mesh later
  ScheduleConfig schedule;
  DatasetConfig dataset;
  AugmentConfig augment;
  std::string out_dir = "runs";

  // Cross-section consistency (detector size vs model image size, motion grid
  // vs phantom grid) plus per-section validation.
  void validate() const;
  // Ties the motion envelope/grid to the phantom definition.
  void resolve();
};

RunConfig default_run_config();

// Flat `section.key = value` text; '#' starts a comment. Vector-valued keys
// take whitespace-separated components.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& config);

// FNV-1a over the canonical serialization.
std::uint64_t config_hash(const RunConfig& config);

}  // namespace dmn
