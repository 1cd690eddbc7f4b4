#pragma once

#include <array>
#include <string>
#include <vector>

#include "dmn/dataset.hpp"
#include "dmn/image_ops.hpp"
#include "dmn/model.hpp"
#include "dmn/stats.hpp"

namespace dmn {

struct NonFiniteLoss : Error {
  using Error::Error;
};

// Pooled per-node Euclidean error statistics (mm) plus the per-angle-bin
// distribution over ten equal bins of [0, 360).
struct ErrorStats {
  double mean = 0.0;
  double std = 0.0;
  double mean_peak = 0.0;  // mean over (state, angle) cases of the case max
  double max_peak = 0.0;
  double p99 = 0.0;
  std::array<double, 10> bin_mean{};
  std::array<int, 10> bin_count{};

  std::string table() const;  // human-readable summary
  std::string csv() const;
};

// In-memory image set for one split: pixel tensors plus angles and ground
// truth, loaded once so the training loop never touches the filesystem.
struct LoadedSplit {
  std::vector<ProjImage> images;
  std::vector<NodalField> ground_truth;  // aligned with images
  std::vector<int> state_ids;
};
LoadedSplit load_split(const DatasetManifest& manifest,
                       const std::string& split);

struct TrainResult {
  int epochs_run = 0;
  double best_val_loss = 0.0;
  int best_epoch = 0;
  std::string checkpoint_path;
  std::string log_path;
};

// Adam training with per-epoch validation, plateau lr decay, and early
// stopping; keeps the best-validation checkpoint. Throws NonFiniteLoss on a
// non-finite training loss.
TrainResult train_model(Model& model, const DatasetManifest& manifest,
                        const ScheduleConfig& schedule, std::uint64_t seed,
                        const std::string& checkpoint_path,
                        const std::string& log_path, bool verbose = true);

ErrorStats evaluate_model(Model& model, const DatasetManifest& manifest,
                          const std::string& split = "test");
// Same statistics with the template as the (trivial) prediction — the
// ground-truth displacement magnitudes.
ErrorStats evaluate_template_baseline(const DatasetManifest& manifest,
                                      const std::string& split = "test");
// Pooled errors restricted to boundary-surface vertices.
ErrorStats surface_errors(Model& model, const DatasetManifest& manifest,
                          const std::string& split = "test");

struct MiResult {
  std::vector<double> mi_reference;
  std::vector<double> mi_deformed;  // paired with mi_reference
  double mean_reference = 0.0;
  double mean_deformed = 0.0;
  double std_reference = 0.0;
  double std_deformed = 0.0;
  double p_value = 0.0;  // one-sided paired t-test, H1: deformed > reference

  std::string table() const;
};

// Image-similarity check without ground-truth meshes: warp the reference
// volume with a spline fit to the predicted vertices, re-project, and compare
// masked mutual information against the unwarped reference projection.
MiResult mi_assessment(Model& model, const DatasetManifest& manifest,
                       const ProjectionGeometry& geometry,
                       int max_images = 0, int tps_control_points = 48);

// Predicted-silhouette overlay: returns the annotated image and appends the
// contour polylines to `contours`.
ProjImage overlay_prediction(Model& model, const ProjImage& image,
                             const DatasetManifest& manifest,
                             std::vector<Contour>* contours = nullptr);

struct AblationRow {
  std::string variant;
  std::vector<double> seed_means;  // test mean error per seed
  double mean = 0.0;
};

// Trains every variant under identical data for each seed and reports test
// mean errors side by side (full model first).
std::vector<AblationRow> run_ablation(const RunConfig& config,
                                      const DatasetManifest& manifest,
                                      const std::vector<std::uint64_t>& seeds,
                                      bool verbose = true);
std::string ablation_table(const std::vector<AblationRow>& rows);

// Applies one ablation switch to a copy of the model configuration.
ModelConfig apply_variant(const ModelConfig& base, const std::string& variant);

}  // namespace dmn
