#include "dmn/model.hpp"

#include <cmath>
#include <sstream>

namespace dmn {

namespace {

int norm_groups(int channels) { return std::min(8, channels); }

std::string block_name(int i, const char* part) {
  return "block" + std::to_string(i) + "." + part;
}

}  // namespace

void ModelConfig::validate() const {
  if (image_size < 16 || image_size % 16 != 0)
    throw InvalidArgument("model: image_size must be a positive multiple of 16");
  for (int c : encoder_channels)
    if (c < 1) throw InvalidArgument("model: encoder channels must be positive");
  if (fpn_features_per_vertex < 1)
    throw InvalidArgument("model: fpn_features_per_vertex must be positive");
  if (n_vertices < 4) throw InvalidArgument("model: n_vertices must be >= 4");
  if (gnn_hidden < 2 || gnn_hidden % 2 != 0)
    throw InvalidArgument("model: gnn_hidden must be a positive even number");
  if (gnn_blocks < 1) throw InvalidArgument("model: gnn_blocks must be >= 1");
  if (n_fpns < 1 || n_fpns > 4)
    throw InvalidArgument("model: n_fpns must be in [1, 4]");
  if (lambda < 0.0) throw InvalidArgument("model: lambda must be >= 0");
}

std::map<std::string, std::string> ModelConfig::to_meta() const {
  std::map<std::string, std::string> m;
  auto put = [&m](const std::string& k, auto v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    m["model." + k] = os.str();
  };
  put("image_size", image_size);
  for (int i = 0; i < 4; ++i)
    put("encoder_channels" + std::to_string(i), encoder_channels[i]);
  put("fpn_features_per_vertex", fpn_features_per_vertex);
  put("n_vertices", n_vertices);
  put("gnn_hidden", gnn_hidden);
  put("gnn_blocks", gnn_blocks);
  put("use_residual", use_residual ? 1 : 0);
  put("graph_layer",
      graph_layer == GraphLayerKind::attention ? "attention" : "convolutional");
  put("n_fpns", n_fpns);
  put("use_angle_channel", use_angle_channel ? 1 : 0);
  put("lambda", lambda);
  return m;
}

ModelConfig ModelConfig::from_meta(
    const std::map<std::string, std::string>& meta) {
  ModelConfig c;
  auto want = [&meta](const std::string& k) -> const std::string& {
    auto it = meta.find("model." + k);
    if (it == meta.end())
      throw ConfigMismatch("checkpoint missing model field: " + k);
    return it->second;
  };
  c.image_size = std::stoi(want("image_size"));
  for (int i = 0; i < 4; ++i)
    c.encoder_channels[i] =
        std::stoi(want("encoder_channels" + std::to_string(i)));
  c.fpn_features_per_vertex = std::stoi(want("fpn_features_per_vertex"));
  c.n_vertices = std::stoi(want("n_vertices"));
  c.gnn_hidden = std::stoi(want("gnn_hidden"));
  c.gnn_blocks = std::stoi(want("gnn_blocks"));
  c.use_residual = std::stoi(want("use_residual")) != 0;
  c.graph_layer = want("graph_layer") == "attention"
                      ? GraphLayerKind::attention
                      : GraphLayerKind::convolutional;
  c.n_fpns = std::stoi(want("n_fpns"));
  c.use_angle_channel = std::stoi(want("use_angle_channel")) != 0;
  c.lambda = std::stod(want("lambda"));
  c.validate();
  return c;
}

Adjacency make_adjacency(const TetMesh& mesh) {
  return std::make_shared<const std::vector<std::vector<int>>>(mesh.adjacency);
}

Tensor encode_angle(const Tensor& image, double angle_degrees) {
  if (image.shape().size() != 3 || image.shape()[0] != 1)
    throw ShapeMismatch("encode_angle: expected [1, H, W] image");
  if (angle_degrees < 0.0 || angle_degrees >= 360.0)
    throw AngleOutOfRange("encode_angle: angle must lie in [0, 360)");
  const int H = image.shape()[1], W = image.shape()[2];
  std::vector<double> out(2 * static_cast<std::size_t>(H) * W);
  std::copy(image.data().begin(), image.data().end(), out.begin());
  const double a = angle_degrees / 360.0;
  std::fill(out.begin() + static_cast<std::size_t>(H) * W, out.end(), a);
  return Tensor::from_data({2, H, W}, std::move(out));
}

Model::Model(ModelConfig config, const TetMesh& template_mesh)
    : config_(std::move(config)),
      template_(template_mesh.vertices),
      adjacency_(make_adjacency(template_mesh)) {
  if (config_.n_vertices == 0)
    config_.n_vertices = template_mesh.num_vertices();
  config_.validate();
  if (config_.n_vertices != template_mesh.num_vertices())
    throw ConfigMismatch("model: n_vertices does not match the template mesh");
  for (const Vec3& v : template_) coord_center_ += v;
  coord_center_ = coord_center_ * (1.0 / template_.size());
  for (const Vec3& v : template_)
    coord_scale_ = std::max(coord_scale_, (v - coord_center_).norm());
}

void Model::init_params(RngStream& rng) {
  const int N = config_.n_vertices;
  const int F = config_.fpn_features_per_vertex;
  const int h = config_.gnn_hidden;
  const int in_ch = config_.use_angle_channel ? 2 : 1;

  int prev = in_ch;
  for (int s = 0; s < 4; ++s) {
    const int c = config_.encoder_channels[s];
    const std::string p = "enc" + std::to_string(s + 1);
    glorot_init(params_.create(p + ".w", {c, prev, 3, 3}), rng);
    params_.create(p + ".b", {c});
    auto& gamma = params_.create(p + ".gamma", {c});
    gamma.data().assign(gamma.numel(), 1.0);
    params_.create(p + ".beta", {c});
    prev = c;
  }
  for (int f = 0; f < config_.n_fpns; ++f) {
    const int c = config_.encoder_channels[f];
    const std::string p = "fpn" + std::to_string(f + 1);
    glorot_init(params_.create(p + ".w", {F * N, 49 * c}), rng);
    params_.create(p + ".b", {F * N});
  }

  auto make_linear = [this, &rng](const std::string& p, int out, int in) {
    glorot_init(params_.create(p + ".w", {out, in}), rng);
    params_.create(p + ".b", {out});
  };
  auto make_norm = [this](const std::string& p, int f) {
    auto& gamma = params_.create(p + ".gamma", {f});
    gamma.data().assign(gamma.numel(), 1.0);
    params_.create(p + ".beta", {f});
  };

  make_linear("lift", h, config_.vertex_feature_width());
  for (int b = 0; b < config_.gnn_blocks; ++b) {
    make_linear(block_name(b, "fc1"), h / 2, h);
    make_norm(block_name(b, "gn1"), h / 2);
    glorot_init(params_.create(block_name(b, "graph.w"), {h / 2, h / 2}), rng);
    if (config_.graph_layer == GraphLayerKind::attention)
      glorot_init(params_.create(block_name(b, "graph.a"), {h}), rng);
    make_norm(block_name(b, "gn2"), h / 2);
    make_linear(block_name(b, "fc2"), h, h / 2);
    make_norm(block_name(b, "gn3"), h);
  }
  // Zero-initialized head: the untrained model outputs the template exactly.
  params_.create("head.w", {3, h});
  params_.create("head.b", {3});
}

Tensor Model::template_batch(int batch) const {
  const int N = config_.n_vertices;
  std::vector<double> data(static_cast<std::size_t>(batch) * N * 3);
  for (int b = 0; b < batch; ++b)
    for (int n = 0; n < N; ++n) {
      const std::size_t off = (static_cast<std::size_t>(b) * N + n) * 3;
      data[off + 0] = template_[n].x;
      data[off + 1] = template_[n].y;
      data[off + 2] = template_[n].z;
    }
  return Tensor::from_data({batch, N, 3}, std::move(data));
}

Tensor Model::template_batch_normalized(int batch) const {
  const int N = config_.n_vertices;
  std::vector<double> data(static_cast<std::size_t>(batch) * N * 3);
  const double inv = 1.0 / coord_scale_;
  for (int b = 0; b < batch; ++b)
    for (int n = 0; n < N; ++n) {
      const std::size_t off = (static_cast<std::size_t>(b) * N + n) * 3;
      data[off + 0] = (template_[n].x - coord_center_.x) * inv;
      data[off + 1] = (template_[n].y - coord_center_.y) * inv;
      data[off + 2] = (template_[n].z - coord_center_.z) * inv;
    }
  return Tensor::from_data({batch, N, 3}, std::move(data));
}

Tensor Model::graph_block(const Tensor& x, int i) {
  const int groups_half = norm_groups(config_.gnn_hidden / 2);
  const int groups_full = norm_groups(config_.gnn_hidden);
  Tensor t = linear(x, params_.get(block_name(i, "fc1.w")),
                    params_.get(block_name(i, "fc1.b")));
  t = group_norm_nodes(t, groups_half, params_.get(block_name(i, "gn1.gamma")),
                       params_.get(block_name(i, "gn1.beta")));
  t = elu(t);
  if (config_.graph_layer == GraphLayerKind::attention)
    t = gat_layer(t, adjacency_, params_.get(block_name(i, "graph.w")),
                  params_.get(block_name(i, "graph.a")));
  else
    t = gcn_layer(t, adjacency_, params_.get(block_name(i, "graph.w")));
  t = group_norm_nodes(t, groups_half, params_.get(block_name(i, "gn2.gamma")),
                       params_.get(block_name(i, "gn2.beta")));
  t = elu(t);
  t = linear(t, params_.get(block_name(i, "fc2.w")),
             params_.get(block_name(i, "fc2.b")));
  t = group_norm_nodes(t, groups_full, params_.get(block_name(i, "gn3.gamma")),
                       params_.get(block_name(i, "gn3.beta")));
  if (config_.use_residual) t = add(t, x);
  return elu(t);
}

Tensor Model::forward(const Tensor& images, const std::vector<double>& angles) {
  const int H = config_.image_size;
  if (images.shape().size() != 4 || images.shape()[1] != 1 ||
      images.shape()[2] != H || images.shape()[3] != H)
    throw ShapeMismatch("model: expected images shaped [B, 1, S, S]");
  const int B = images.shape()[0];
  if (static_cast<int>(angles.size()) != B)
    throw ShapeMismatch("model: one angle per image required");
  const int N = config_.n_vertices;
  const int F = config_.fpn_features_per_vertex;

  Tensor input;
  if (config_.use_angle_channel) {
    std::vector<double> data(static_cast<std::size_t>(B) * 2 * H * H);
    const std::size_t plane = static_cast<std::size_t>(H) * H;
    for (int b = 0; b < B; ++b) {
      if (angles[b] < 0.0 || angles[b] >= 360.0)
        throw AngleOutOfRange("model: angle must lie in [0, 360)");
      std::copy_n(images.data().begin() + static_cast<std::size_t>(b) * plane,
                  plane, data.begin() + static_cast<std::size_t>(b) * 2 * plane);
      std::fill_n(data.begin() + (static_cast<std::size_t>(b) * 2 + 1) * plane,
                  plane, angles[b] / 360.0);
    }
    input = Tensor::from_data({B, 2, H, H}, std::move(data));
  } else {
    input = Tensor::from_data({B, 1, H, H}, images.data());
  }

  std::vector<Tensor> stage_maps;
  Tensor t = input;
  for (int s = 0; s < 4; ++s) {
    const std::string p = "enc" + std::to_string(s + 1);
    t = conv2d(t, params_.get(p + ".w"), params_.get(p + ".b"));
    t = elu(t);
    t = group_norm(t, norm_groups(config_.encoder_channels[s]),
                   params_.get(p + ".gamma"), params_.get(p + ".beta"));
    t = maxpool2(t);
    stage_maps.push_back(t);
  }

  std::vector<Tensor> fused;
  fused.push_back(template_batch_normalized(B));
  for (int f = 0; f < config_.n_fpns; ++f) {
    const std::string p = "fpn" + std::to_string(f + 1);
    Tensor pooled = adaptive_avg_pool(stage_maps[f]);
    pooled = reshape(pooled, {B, config_.encoder_channels[f] * 49});
    Tensor feats =
        linear(pooled, params_.get(p + ".w"), params_.get(p + ".b"));
    fused.push_back(reshape(feats, {B, N, F}));
  }

  Tensor x = linear(concat_last(fused), params_.get("lift.w"),
                    params_.get("lift.b"));
  for (int b = 0; b < config_.gnn_blocks; ++b) x = graph_block(x, b);
  Tensor disp = linear(x, params_.get("head.w"), params_.get("head.b"));
  return add(disp, template_batch(B));
}

NodalField Model::predict(const ProjImage& image) {
  const int H = config_.image_size;
  if (image.width != H || image.height != H)
    throw ConfigMismatch("predict: image size does not match the checkpoint");
  Tensor images = Tensor::from_data({1, 1, H, H}, image.pixels);
  Tensor pred = forward(images, {image.angle_deg});
  NodalField out;
  out.values.resize(config_.n_vertices);
  for (int n = 0; n < config_.n_vertices; ++n)
    out.values[n] = {pred.data()[3 * n], pred.data()[3 * n + 1],
                     pred.data()[3 * n + 2]};
  return out;
}

void Model::save(const std::string& path,
                 const std::map<std::string, std::string>& extra_meta) const {
  auto meta = config_.to_meta();
  for (const auto& [k, v] : extra_meta) meta[k] = v;
  write_checkpoint(path, params_, meta);
}

void Model::load(const std::string& path) {
  std::map<std::string, std::string> meta;
  read_checkpoint(path, params_, meta);
  const ModelConfig loaded = ModelConfig::from_meta(meta);
  if (loaded.to_meta() != config_.to_meta())
    throw ConfigMismatch("checkpoint model configuration differs: " + path);
}

Tensor loss_shape(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw ShapeMismatch("loss_shape: prediction/target shapes differ");
  return sum(abs_op(sub(pred, target)));
}

Tensor loss_laplacian(const Tensor& pred, const Tensor& template_pos,
                      const Adjacency& adjacency) {
  if (pred.shape() != template_pos.shape())
    throw ShapeMismatch("loss_laplacian: prediction/template shapes differ");
  const int N = pred.shape()[1];
  Tensor diff = sub(graph_laplacian(template_pos, adjacency),
                    graph_laplacian(pred, adjacency));
  return scale(sum(square(diff)), 1.0 / static_cast<double>(N));
}

Tensor loss_total(const Tensor& pred, const Tensor& target,
                  const Tensor& template_pos, const Adjacency& adjacency,
                  double lambda) {
  return add(loss_shape(pred, target),
             scale(loss_laplacian(pred, template_pos, adjacency), lambda));
}

}  // namespace dmn
