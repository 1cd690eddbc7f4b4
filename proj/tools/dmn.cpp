// Command-line front end for the phantom-to-prediction pipeline.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dmn/config.hpp"
#include "dmn/dataset.hpp"
#include "dmn/drr.hpp"
#include "dmn/gradsuite.hpp"
#include "dmn/phantom.hpp"
#include "dmn/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Run configuration file");
  cmd->add_option("--out", args.out_dir, "Output directory");
  cmd->add_option("--seed", args.seed, "Master seed (overrides the config)")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--threads", args.threads, "Worker thread cap")
      ->check(CLI::PositiveNumber);
}

dmn::RunConfig resolve_config(const CommonArgs& args) {
  dmn::RunConfig config = args.config_path.empty()
                              ? dmn::default_run_config()
                              : dmn::load_run_config(args.config_path);
  if (args.seed_set) config.seed = args.seed;
  if (!args.out_dir.empty()) config.out_dir = args.out_dir;
  config.resolve();
  config.validate();
  return config;
}

void write_run_info(const dmn::RunConfig& config, const std::string& command) {
  fs::create_directories(config.out_dir);
  std::ofstream os(fs::path(config.out_dir) / "run-info.txt");
  os << "command " << command << "\n"
     << "version " << kVersion << "\n"
     << "seed " << config.seed << "\n"
     << "config_hash " << std::hex << dmn::config_hash(config) << std::dec
     << "\n\n"
     << dmn::serialize_run_config(config);
}

std::string data_root(const dmn::RunConfig& config) {
  return (fs::path(config.out_dir) / "data").string();
}

dmn::DatasetManifest manifest_for(const dmn::RunConfig& config) {
  return dmn::read_manifest(
      (fs::path(data_root(config)) / "manifest.txt").string());
}

dmn::Model load_model(const dmn::RunConfig& config,
                      const dmn::DatasetManifest& manifest,
                      const std::string& checkpoint) {
  const dmn::TetMesh mesh = dmn::read_mesh(
      (fs::path(manifest.root) / manifest.mesh_path).string());
  dmn::ModelConfig mc = config.model;
  mc.n_vertices = mesh.num_vertices();
  dmn::Model model(mc, mesh);
  model.load(checkpoint);
  return model;
}

int run_gen_phantom(const CommonArgs& args) {
  const dmn::RunConfig config = resolve_config(args);
  write_run_info(config, "gen-phantom");
  fs::create_directories(data_root(config));
  const dmn::Volume3D volume =
      dmn::build_phantom_volume(config.phantom, config.seed);
  const dmn::TetMesh mesh = dmn::build_template_mesh(config.phantom);
  dmn::write_volume((fs::path(data_root(config)) / "phantom.vol").string(),
                    volume);
  dmn::write_mesh((fs::path(data_root(config)) / "template.msh").string(),
                  mesh);
  std::cout << "phantom volume " << volume.dims[0] << "x" << volume.dims[1]
            << "x" << volume.dims[2] << ", template mesh "
            << mesh.num_vertices() << " vertices, " << mesh.tets.size()
            << " tets\n";
  return 0;
}

int run_gen_data(const CommonArgs& args) {
  const dmn::RunConfig config = resolve_config(args);
  write_run_info(config, "gen-data");
  const dmn::DatasetManifest manifest =
      dmn::generate_dataset(config, data_root(config));
  std::cout << "dataset: " << manifest.states.size() << " states, "
            << manifest.images.size() << " images under " << manifest.root
            << "\n";
  return 0;
}

int run_train(const CommonArgs& args) {
  const dmn::RunConfig config = resolve_config(args);
  write_run_info(config, "train");
  const dmn::DatasetManifest manifest = manifest_for(config);
  const dmn::TetMesh mesh = dmn::read_mesh(
      (fs::path(manifest.root) / manifest.mesh_path).string());
  dmn::ModelConfig mc = config.model;
  mc.n_vertices = mesh.num_vertices();
  dmn::Model model(mc, mesh);
  dmn::RngStream init_rng(config.seed, "model-init");
  model.init_params(init_rng);

  fs::create_directories(fs::path(config.out_dir) / "checkpoints");
  fs::create_directories(fs::path(config.out_dir) / "logs");
  const auto result = dmn::train_model(
      model, manifest, config.schedule, config.seed,
      (fs::path(config.out_dir) / "checkpoints" / "model.ckpt").string(),
      (fs::path(config.out_dir) / "logs" / "train.csv").string());
  std::cout << "best validation loss " << result.best_val_loss << " at epoch "
            << result.best_epoch << " (" << result.epochs_run
            << " epochs run)\n";
  return 0;
}

int run_predict(const CommonArgs& args, const std::string& checkpoint,
                const std::string& image_path) {
  const dmn::RunConfig config = resolve_config(args);
  const dmn::DatasetManifest manifest = manifest_for(config);
  dmn::Model model = load_model(config, manifest, checkpoint);
  dmn::ProjImage image = dmn::read_proj_image(image_path);

  const auto t0 = std::chrono::steady_clock::now();
  const dmn::NodalField predicted = model.predict(image);
  const auto t1 = std::chrono::steady_clock::now();
  const double ms =
      std::chrono::duration<double, std::milli>(t1 - t0).count();

  fs::create_directories(fs::path(config.out_dir) / "predictions");
  const std::string out =
      (fs::path(config.out_dir) / "predictions" /
       (fs::path(image_path).stem().string() + ".txt"))
          .string();
  dmn::write_nodal_field(out, predicted);
  std::cout << "predicted " << predicted.size() << " vertex positions in "
            << ms << " ms -> " << out << "\n";
  return 0;
}

int run_evaluate(const CommonArgs& args, const std::string& checkpoint) {
  const dmn::RunConfig config = resolve_config(args);
  write_run_info(config, "evaluate");
  const dmn::DatasetManifest manifest = manifest_for(config);
  dmn::Model model = load_model(config, manifest, checkpoint);

  const dmn::ErrorStats stats = dmn::evaluate_model(model, manifest);
  const dmn::ErrorStats baseline =
      dmn::evaluate_template_baseline(manifest);
  const dmn::ErrorStats surface = dmn::surface_errors(model, manifest);

  fs::create_directories(fs::path(config.out_dir) / "stats");
  const fs::path dir = fs::path(config.out_dir) / "stats";
  std::ofstream(dir / "test_errors.csv") << stats.csv();
  std::ofstream(dir / "template_baseline.csv") << baseline.csv();
  std::ofstream(dir / "surface_errors.csv") << surface.csv();
  std::ofstream(dir / "test_errors.txt")
      << "model prediction errors\n" << stats.table()
      << "\ntemplate baseline (ground-truth displacement)\n"
      << baseline.table() << "\nsurface-vertex errors\n" << surface.table();

  std::cout << "model prediction errors\n"
            << stats.table() << "\ntemplate baseline\n"
            << baseline.table();
  return 0;
}

int run_mi_assess(const CommonArgs& args, const std::string& checkpoint,
                  int max_images) {
  const dmn::RunConfig config = resolve_config(args);
  write_run_info(config, "mi-assess");
  const dmn::DatasetManifest manifest = manifest_for(config);
  dmn::Model model = load_model(config, manifest, checkpoint);
  const dmn::MiResult result =
      dmn::mi_assessment(model, manifest, config.geometry, max_images);
  fs::create_directories(fs::path(config.out_dir) / "stats");
  std::ofstream(fs::path(config.out_dir) / "stats" / "mi_assessment.txt")
      << result.table();
  std::cout << result.table();
  return 0;
}

int run_overlay(const CommonArgs& args, const std::string& checkpoint,
                std::string image_path) {
  const dmn::RunConfig config = resolve_config(args);
  write_run_info(config, "overlay");
  const dmn::DatasetManifest manifest = manifest_for(config);
  dmn::Model model = load_model(config, manifest, checkpoint);
  fs::create_directories(fs::path(config.out_dir) / "overlays");

  std::vector<std::string> inputs;
  if (!image_path.empty()) {
    inputs.push_back(image_path);
  } else {
    for (const auto* rec : manifest.split_images("test"))
      inputs.push_back((fs::path(manifest.root) / rec->path).string());
  }
  for (const auto& path : inputs) {
    dmn::ProjImage image = dmn::read_proj_image(path);
    image.geometry = config.geometry;
    std::vector<dmn::Contour> contours;
    const dmn::ProjImage annotated =
        dmn::overlay_prediction(model, image, manifest, &contours);
    const std::string stem = fs::path(path).stem().string();
    const fs::path out_img =
        fs::path(config.out_dir) / "overlays" / (stem + "_overlay.pgm");
    dmn::write_proj_image(out_img.string(), annotated);
    std::ofstream poly(fs::path(config.out_dir) / "overlays" /
                       (stem + "_contours.txt"));
    poly.precision(17);
    for (const auto& contour : contours) {
      for (const auto& pt : contour) poly << pt[0] << " " << pt[1] << "  ";
      poly << "\n";
    }
  }
  std::cout << "wrote " << inputs.size() << " overlay(s)\n";
  return 0;
}

int run_ablate(const CommonArgs& args) {
  const dmn::RunConfig config = resolve_config(args);
  write_run_info(config, "ablate");
  const dmn::DatasetManifest manifest = manifest_for(config);
  const std::vector<std::uint64_t> seeds = {config.seed, config.seed + 1,
                                            config.seed + 2};
  const auto rows = dmn::run_ablation(config, manifest, seeds);
  const std::string table = dmn::ablation_table(rows);
  fs::create_directories(fs::path(config.out_dir) / "stats");
  std::ofstream(fs::path(config.out_dir) / "stats" / "ablation.txt") << table;
  std::cout << table;
  return 0;
}

int run_gradcheck() {
  const auto entries = dmn::run_gradcheck_suite();
  bool ok = true;
  for (const auto& e : entries) {
    std::cout << e.name << ": max rel error " << e.max_rel_error << "\n";
    ok = ok && e.max_rel_error <= 1e-5;
  }
  std::cout << (ok ? "PASS" : "FAIL") << " (tolerance 1e-5)\n";
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-view volumetric shape recovery pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CommonArgs common;
  std::string checkpoint, image_path;
  int max_images = 0;

  add_common(app.add_subcommand("gen-phantom",
                                "Build the phantom volume and template mesh"),
             common);
  add_common(app.add_subcommand("gen-data", "Generate the full dataset"),
             common);
  add_common(app.add_subcommand("train", "Train the model"), common);

  auto* predict =
      app.add_subcommand("predict", "Predict vertex positions for one image");
  add_common(predict, common);
  predict->add_option("--checkpoint", checkpoint, "Trained checkpoint")
      ->required();
  predict->add_option("--image", image_path, "Input projection image")
      ->required();

  auto* evaluate =
      app.add_subcommand("evaluate", "Test-set error statistics");
  add_common(evaluate, common);
  evaluate->add_option("--checkpoint", checkpoint, "Trained checkpoint")
      ->required();

  auto* mi = app.add_subcommand(
      "mi-assess", "Mutual-information assessment on the test set");
  add_common(mi, common);
  mi->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  mi->add_option("--max-images", max_images,
                 "Cap on assessed images (0 = all)");

  auto* overlay = app.add_subcommand(
      "overlay", "Burn predicted silhouettes into projection images");
  add_common(overlay, common);
  overlay->add_option("--checkpoint", checkpoint, "Trained checkpoint")
      ->required();
  overlay->add_option("--image", image_path,
                      "Single input image (default: all test images)");

  add_common(app.add_subcommand(
                 "ablate", "Train and compare the ablation variants"),
             common);
  app.add_subcommand("gradcheck", "Run the layer gradient-check suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("gen-phantom")) return run_gen_phantom(common);
    if (app.got_subcommand("gen-data")) return run_gen_data(common);
    if (app.got_subcommand("train")) return run_train(common);
    if (app.got_subcommand("predict"))
      return run_predict(common, checkpoint, image_path);
    if (app.got_subcommand("evaluate")) return run_evaluate(common, checkpoint);
    if (app.got_subcommand("mi-assess"))
      return run_mi_assess(common, checkpoint, max_images);
    if (app.got_subcommand("overlay"))
      return run_overlay(common, checkpoint, image_path);
    if (app.got_subcommand("ablate")) return run_ablate(common);
    if (app.got_subcommand("gradcheck")) return run_gradcheck();
  } catch (const dmn::InvalidArgument& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 1;
  } catch (const dmn::UnknownKey& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 1;
  } catch (const dmn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
