#include "dmn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "dmn/drr.hpp"
#include "dmn/image_ops.hpp"
#include "dmn/tps.hpp"

namespace fs = std::filesystem;

namespace dmn {

namespace {

Tensor batch_tensor(const std::vector<const ProjImage*>& images) {
  const int B = static_cast<int>(images.size());
  const int H = images[0]->height, W = images[0]->width;
  std::vector<double> data(static_cast<std::size_t>(B) * H * W);
  for (int b = 0; b < B; ++b) {
    if (images[b]->height != H || images[b]->width != W)
      throw ShapeMismatch("batch_tensor: mixed image sizes");
    std::copy(images[b]->pixels.begin(), images[b]->pixels.end(),
              data.begin() + static_cast<std::size_t>(b) * H * W);
  }
  return Tensor::from_data({B, 1, H, W}, std::move(data));
}

Tensor batch_ground_truth(const std::vector<const NodalField*>& fields) {
  const int B = static_cast<int>(fields.size());
  const int N = static_cast<int>(fields[0]->size());
  std::vector<double> data(static_cast<std::size_t>(B) * N * 3);
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n) {
      const Vec3& v = (*fields[b])[n];
      const std::size_t off = (static_cast<std::size_t>(b) * N + n) * 3;
      data[off] = v.x;
      data[off + 1] = v.y;
      data[off + 2] = v.z;
    }
  return Tensor::from_data({B, N, 3}, std::move(data));
}

// One evaluation case: the projection angle plus per-node errors.
struct CaseErrors {
  double angle_deg = 0.0;
  std::vector<double> node_errors;
};

ErrorStats pool_stats(const std::vector<CaseErrors>& cases) {
  ErrorStats s;
  std::vector<double> all;
  std::vector<double> peaks;
  std::array<double, 10> bin_sum{};
  std::array<long long, 10> bin_n{};
  for (const auto& c : cases) {
    double peak = 0.0;
    const int bin =
        std::min(9, static_cast<int>(std::floor(c.angle_deg / 36.0)));
    for (double e : c.node_errors) {
      all.push_back(e);
      peak = std::max(peak, e);
      bin_sum[bin] += e;
      bin_n[bin] += 1;
    }
    peaks.push_back(peak);
    s.bin_count[bin] += 1;
  }
  s.mean = mean_of(all);
  s.std = stddev_of(all);
  s.mean_peak = mean_of(peaks);
  s.max_peak = *std::max_element(peaks.begin(), peaks.end());
  s.p99 = percentile_of(all, 99.0);
  for (int b = 0; b < 10; ++b)
    s.bin_mean[b] = bin_n[b] ? bin_sum[b] / static_cast<double>(bin_n[b]) : 0.0;
  return s;
}

std::vector<CaseErrors> collect_errors(Model& model, const LoadedSplit& split,
                                       const std::vector<int>* vertex_subset) {
  const int N = model.config().n_vertices;
  const int batch = 8;
  std::vector<CaseErrors> cases;
  for (std::size_t start = 0; start < split.images.size(); start += batch) {
    const std::size_t end = std::min(split.images.size(), start + batch);
    std::vector<const ProjImage*> imgs;
    std::vector<double> angles;
    for (std::size_t i = start; i < end; ++i) {
      imgs.push_back(&split.images[i]);
      angles.push_back(split.images[i].angle_deg);
    }
    Tensor pred = model.forward(batch_tensor(imgs), angles);
    for (std::size_t i = start; i < end; ++i) {
      CaseErrors c;
      c.angle_deg = split.images[i].angle_deg;
      const NodalField& gt = split.ground_truth[i];
      const std::size_t off = (i - start) * static_cast<std::size_t>(N) * 3;
      auto node_error = [&](int n) {
        const Vec3 p{pred.data()[off + 3 * n], pred.data()[off + 3 * n + 1],
                     pred.data()[off + 3 * n + 2]};
        return (p - gt[n]).norm();
      };
      if (vertex_subset) {
        for (int n : *vertex_subset) c.node_errors.push_back(node_error(n));
      } else {
        for (int n = 0; n < N; ++n) c.node_errors.push_back(node_error(n));
      }
      cases.push_back(std::move(c));
    }
  }
  return cases;
}

}  // namespace

std::string ErrorStats::table() const {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << "mean (std) [mm]   : " << mean << " (" << std << ")\n"
     << "mean peak [mm]    : " << mean_peak << "\n"
     << "max peak [mm]     : " << max_peak << "\n"
     << "99th pct [mm]     : " << p99 << "\n"
     << "angle-bin means   :";
  for (int b = 0; b < 10; ++b) os << " " << bin_mean[b];
  os << "\n";
  return os.str();
}

std::string ErrorStats::csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "mean,std,mean_peak,max_peak,p99";
  for (int b = 0; b < 10; ++b) os << ",bin" << b << "_mean,bin" << b << "_count";
  os << "\n"
     << mean << "," << std << "," << mean_peak << "," << max_peak << "," << p99;
  for (int b = 0; b < 10; ++b) os << "," << bin_mean[b] << "," << bin_count[b];
  os << "\n";
  return os.str();
}

LoadedSplit load_split(const DatasetManifest& manifest,
                       const std::string& split) {
  LoadedSplit out;
  std::vector<std::pair<int, NodalField>> gt_cache;
  for (const auto& img : manifest.images) {
    if (img.split != split) continue;
    out.images.push_back(
        read_proj_image((fs::path(manifest.root) / img.path).string()));
    out.images.back().angle_deg = img.angle_deg;
    auto it = std::find_if(gt_cache.begin(), gt_cache.end(),
                           [&](const auto& p) { return p.first == img.state_id; });
    if (it == gt_cache.end()) {
      const StateRecord& st = manifest.state(img.state_id);
      gt_cache.emplace_back(
          img.state_id,
          read_nodal_field((fs::path(manifest.root) / st.gt_path).string()));
      it = std::prev(gt_cache.end());
    }
    out.ground_truth.push_back(it->second);
    out.state_ids.push_back(img.state_id);
  }
  if (out.images.empty())
    throw InvalidArgument("load_split: no images in split: " + split);
  return out;
}

TrainResult train_model(Model& model, const DatasetManifest& manifest,
                        const ScheduleConfig& schedule, std::uint64_t seed,
                        const std::string& checkpoint_path,
                        const std::string& log_path, bool verbose) {
  schedule.validate();
  const LoadedSplit train = load_split(manifest, "train");
  const LoadedSplit val = load_split(manifest, "val");
  const double lambda = model.config().lambda;
  const Adjacency& adj = model.adjacency();

  std::ofstream log(log_path);
  if (!log) throw IoError("cannot open training log: " + log_path);
  log << "epoch,train_loss,val_loss,lr\n";
  log.precision(17);

  auto split_loss = [&](const LoadedSplit& split, bool update, int epoch,
                        double lr) {
    double total = 0.0;
    std::vector<std::size_t> order(split.images.size());
    std::iota(order.begin(), order.end(), 0);
    if (update) {
      RngStream shuffle_rng(seed, "epoch-shuffle",
                            static_cast<std::uint64_t>(epoch));
      std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    }
    const std::size_t batch = static_cast<std::size_t>(schedule.batch_size);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<const ProjImage*> imgs;
      std::vector<const NodalField*> gts;
      std::vector<double> angles;
      for (std::size_t i = start; i < end; ++i) {
        imgs.push_back(&split.images[order[i]]);
        gts.push_back(&split.ground_truth[order[i]]);
        angles.push_back(split.images[order[i]].angle_deg);
      }
      const int B = static_cast<int>(imgs.size());
      Tensor pred = model.forward(batch_tensor(imgs), angles);
      Tensor loss = scale(loss_total(pred, batch_ground_truth(gts),
                                     model.template_batch(B), adj, lambda),
                          1.0 / B);
      const double value = loss.item();
      if (!std::isfinite(value))
        throw NonFiniteLoss("training loss became non-finite at step " +
                            std::to_string(model.params().step()));
      total += value * B;
      if (update) {
        backward(loss);
        adam_step(model.params(), lr, schedule.weight_decay,
                  schedule.beta1, schedule.beta2);
      }
    }
    return total / static_cast<double>(split.images.size());
  };

  TrainResult result;
  result.checkpoint_path = checkpoint_path;
  result.log_path = log_path;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  ScheduleConfig live = schedule;
  int stagnant = 0, stagnant_lr = 0;

  for (int epoch = 1; epoch <= schedule.epoch_cap; ++epoch) {
    const double train_loss = split_loss(train, /*update=*/true, epoch, live.lr);
    const double val_loss = split_loss(val, /*update=*/false, epoch, 0.0);
    result.epochs_run = epoch;
    log << epoch << "," << train_loss << "," << val_loss << "," << live.lr
        << "\n";
    log.flush();
    if (verbose)
      std::cout << "epoch " << epoch << "  train " << train_loss << "  val "
                << val_loss << "  lr " << live.lr << std::endl;

    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      stagnant = 0;
      stagnant_lr = 0;
      model.save(checkpoint_path);
    } else {
      ++stagnant;
      ++stagnant_lr;
      if (stagnant_lr >= schedule.lr_patience) {
        live.lr *= schedule.lr_factor;
        stagnant_lr = 0;
      }
      if (stagnant >= schedule.patience) break;
    }
  }
  model.load(checkpoint_path);
  return result;
}

ErrorStats evaluate_model(Model& model, const DatasetManifest& manifest,
                          const std::string& split) {
  const LoadedSplit data = load_split(manifest, split);
  return pool_stats(collect_errors(model, data, nullptr));
}

ErrorStats evaluate_template_baseline(const DatasetManifest& manifest,
                                      const std::string& split) {
  const LoadedSplit data = load_split(manifest, split);
  const TetMesh mesh =
      read_mesh((fs::path(manifest.root) / manifest.mesh_path).string());
  std::vector<CaseErrors> cases;
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    CaseErrors c;
    c.angle_deg = data.images[i].angle_deg;
    for (int n = 0; n < mesh.num_vertices(); ++n)
      c.node_errors.push_back(
          (mesh.vertices[n] - data.ground_truth[i][n]).norm());
    cases.push_back(std::move(c));
  }
  return pool_stats(cases);
}

ErrorStats surface_errors(Model& model, const DatasetManifest& manifest,
                          const std::string& split) {
  const LoadedSplit data = load_split(manifest, split);
  const TetMesh mesh =
      read_mesh((fs::path(manifest.root) / manifest.mesh_path).string());
  const std::vector<int> surface = surface_vertex_indices(mesh);
  return pool_stats(collect_errors(model, data, &surface));
}

std::string MiResult::table() const {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << "images            : " << mi_reference.size() << "\n"
     << "MI reference      : " << mean_reference << " (" << std_reference
     << ")\n"
     << "MI deformed       : " << mean_deformed << " (" << std_deformed
     << ")\n";
  os.precision(6);
  os << "p (def > ref)     : " << p_value << "\n";
  return os.str();
}

MiResult mi_assessment(Model& model, const DatasetManifest& manifest,
                       const ProjectionGeometry& geometry, int max_images,
                       int tps_control_points) {
  const Volume3D reference =
      read_volume((fs::path(manifest.root) / manifest.volume_path).string());
  const TetMesh mesh =
      read_mesh((fs::path(manifest.root) / manifest.mesh_path).string());
  GridSpec grid{reference.dims, reference.spacing, reference.origin};

  const int N = mesh.num_vertices();
  const int stride = std::max(1, N / std::max(5, tps_control_points));
  std::vector<int> control;
  for (int n = 0; n < N; n += stride) control.push_back(n);

  // Both branches run the same path; they differ only in the supplied vertex
  // positions (predicted vs template).
  auto branch_mi = [&](const NodalField& positions, const ProjImage& input,
                       const ProjectionGeometry& geom) {
    std::vector<Vec3> src, dst;
    for (int n : control) {
      src.push_back(positions[n]);
      dst.push_back(mesh.vertices[n]);
    }
    const TpsTransform inverse = tps_fit(src, dst, 1e-9);
    const Volume3D warped = tps_warp_volume(reference, inverse);
    const ProjImage drr = hist_equalize(siddon_drr(warped, geom));
    const Volume3D mask_vol = rasterize_mask(mesh, positions, grid);
    const ProjImage mask = mask_drr(mask_vol, geom);
    return mutual_information(drr, input, mask);
  };

  NodalField template_positions;
  template_positions.values = mesh.vertices;

  MiResult result;
  const LoadedSplit test = load_split(manifest, "test");
  const std::size_t count =
      max_images > 0
          ? std::min<std::size_t>(test.images.size(), max_images)
          : test.images.size();
  for (std::size_t i = 0; i < count; ++i) {
    const ProjImage& input = test.images[i];
    const ProjectionGeometry geom = geometry.with_angle(input.angle_deg);
    const NodalField predicted = model.predict(input);
    result.mi_deformed.push_back(branch_mi(predicted, input, geom));
    result.mi_reference.push_back(branch_mi(template_positions, input, geom));
  }
  result.mean_reference = mean_of(result.mi_reference);
  result.mean_deformed = mean_of(result.mi_deformed);
  result.std_reference = stddev_of(result.mi_reference);
  result.std_deformed = stddev_of(result.mi_deformed);
  std::vector<double> diff(result.mi_deformed.size());
  for (std::size_t i = 0; i < diff.size(); ++i)
    diff[i] = result.mi_deformed[i] - result.mi_reference[i];
  result.p_value = paired_t_pvalue_greater(diff);
  return result;
}

ProjImage overlay_prediction(Model& model, const ProjImage& image,
                             const DatasetManifest& manifest,
                             std::vector<Contour>* contours) {
  const TetMesh mesh =
      read_mesh((fs::path(manifest.root) / manifest.mesh_path).string());
  const Volume3D reference =
      read_volume((fs::path(manifest.root) / manifest.volume_path).string());
  GridSpec grid{reference.dims, reference.spacing, reference.origin};

  const NodalField predicted = model.predict(image);
  const Volume3D mask_vol = rasterize_mask(mesh, predicted, grid);
  const ProjImage mask =
      mask_drr(mask_vol, image.geometry.with_angle(image.angle_deg));
  const auto traced = silhouette_contour(mask);
  if (contours)
    contours->insert(contours->end(), traced.begin(), traced.end());
  return burn_contours(image, traced);
}

ModelConfig apply_variant(const ModelConfig& base, const std::string& variant) {
  ModelConfig c = base;
  if (variant == "full") {
  } else if (variant == "fpn2") {
    c.n_fpns = 2;
  } else if (variant == "fpn1") {
    c.n_fpns = 1;
  } else if (variant == "no_angle") {
    c.use_angle_channel = false;
  } else if (variant == "no_residual") {
    c.use_residual = false;
  } else if (variant == "gcn") {
    c.graph_layer = GraphLayerKind::convolutional;
  } else {
    throw InvalidArgument("unknown ablation variant: " + variant);
  }
  return c;
}

std::vector<AblationRow> run_ablation(const RunConfig& config,
                                      const DatasetManifest& manifest,
                                      const std::vector<std::uint64_t>& seeds,
                                      bool verbose) {
  const TetMesh mesh =
      read_mesh((fs::path(manifest.root) / manifest.mesh_path).string());
  const std::vector<std::string> variants = {"full",     "fpn2",
                                             "fpn1",     "no_angle",
                                             "no_residual", "gcn"};
  const fs::path work = fs::path(manifest.root) / "ablation";
  fs::create_directories(work);

  std::vector<AblationRow> rows;
  for (const auto& variant : variants) {
    AblationRow row;
    row.variant = variant;
    for (std::uint64_t seed : seeds) {
      ModelConfig mc = apply_variant(config.model, variant);
      mc.n_vertices = mesh.num_vertices();
      Model model(mc, mesh);
      RngStream init_rng(seed, "model-init");
      model.init_params(init_rng);
      const std::string tag = variant + "_" + std::to_string(seed);
      if (verbose)
        std::cout << "[ablation] training " << tag << std::endl;
      train_model(model, manifest, config.schedule, seed,
                  (work / (tag + ".ckpt")).string(),
                  (work / (tag + ".csv")).string(), /*verbose=*/false);
      const ErrorStats stats = evaluate_model(model, manifest, "test");
      row.seed_means.push_back(stats.mean);
      if (verbose)
        std::cout << "[ablation] " << tag << " test mean " << stats.mean
                  << std::endl;
    }
    row.mean = mean_of(row.seed_means);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "variant      ";
  if (!rows.empty())
    for (std::size_t s = 0; s < rows[0].seed_means.size(); ++s)
      os << "  seed" << s << "_mean_mm";
  os << "  mean_mm\n";
  os.precision(4);
  os << std::fixed;
  for (const auto& row : rows) {
    os << row.variant;
    for (std::size_t i = row.variant.size(); i < 13; ++i) os << ' ';
    for (double m : row.seed_means) os << "  " << m << "      ";
    os << "  " << row.mean << "\n";
  }
  return os.str();
}

}  // namespace dmn
