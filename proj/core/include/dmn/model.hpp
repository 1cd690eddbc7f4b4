#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "dmn/geometry.hpp"
#include "dmn/layers.hpp"
#include "dmn/mesh.hpp"
#include "dmn/optim.hpp"

namespace dmn {

struct ConfigMismatch : Error {
  using Error::Error;
};

enum class GraphLayerKind { attention, convolutional };

// Architecture switches. The defaults are the full configuration; the
// ablation variants flip exactly one switch each.
struct ModelConfig {
  int image_size = 64;
  std::array<int, 4> encoder_channels{16, 32, 64, 128};
  int fpn_features_per_vertex = 5;
  int n_vertices = 0;
  int gnn_hidden = 128;
  int gnn_blocks = 4;
  bool use_residual = true;
  GraphLayerKind graph_layer = GraphLayerKind::attention;
  int n_fpns = 4;
  bool use_angle_channel = true;
  double lambda = 0.1;

  void validate() const;
  int vertex_feature_width() const {
    return 3 + fpn_features_per_vertex * n_fpns;
  }

  std::map<std::string, std::string> to_meta() const;
  static ModelConfig from_meta(const std::map<std::string, std::string>& meta);
};

// Shared-pointer neighbor lists in TetMesh vertex order.
Adjacency make_adjacency(const TetMesh& mesh);

// Image plus normalized-angle constant channel: [1,H,W] -> [2,H,W].
Tensor encode_angle(const Tensor& image, double angle_degrees);

// The full network: angle-conditioned CNN encoder, one feature pooling
// network per encoder stage, per-vertex feature fusion with the template
// coordinates, and a residual graph-attention deformation decoder that
// outputs displacements added to the template.
class Model {
public:
  Model(ModelConfig config, const TetMesh& template_mesh);

  // Fresh Glorot-initialized parameters (final output layer zero-initialized
  // so the untrained model predicts the template exactly).
  void init_params(RngStream& rng);

  // images: [B, 1, H, W]; angles in degrees, one per sample.
  // Returns predicted vertex positions [B, N, 3].
  Tensor forward(const Tensor& images, const std::vector<double>& angles);

  // Convenience single-image inference.
  NodalField predict(const ProjImage& image);

  ParamStore& params() { return params_; }
  const ModelConfig& config() const { return config_; }
  const Adjacency& adjacency() const { return adjacency_; }
  const std::vector<Vec3>& template_vertices() const { return template_; }

  // [B, N, 3] broadcast copy of the template coordinates (no gradient).
  Tensor template_batch(int batch) const;
  // Same coordinates shifted/scaled to roughly [-1, 1] — the form fused with
  // the unit-scale image features so no input dominates the lift layer.
  Tensor template_batch_normalized(int batch) const;

  void save(const std::string& path,
            const std::map<std::string, std::string>& extra_meta = {}) const;
  // Restores parameters; the config in the file must match `config()`.
  void load(const std::string& path);

private:
  Tensor graph_block(const Tensor& x, int block_index);

  ModelConfig config_;
  std::vector<Vec3> template_;
  Vec3 coord_center_{};      // template centroid
  double coord_scale_ = 1.0;  // max centroid distance
  Adjacency adjacency_;
  ParamStore params_;
};

// Sum over vertices (and batch) of the L1 norm of the per-vertex error.
Tensor loss_shape(const Tensor& pred, const Tensor& target);
// (1/N) * sum_i || delta(template)_i - delta(pred)_i ||^2, summed over batch.
Tensor loss_laplacian(const Tensor& pred, const Tensor& template_pos,
                      const Adjacency& adjacency);
Tensor loss_total(const Tensor& pred, const Tensor& target,
                  const Tensor& template_pos, const Adjacency& adjacency,
                  double lambda);

}  // namespace dmn
