#include "dmn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "dmn/drr.hpp"
#include "dmn/image_ops.hpp"
#include "dmn/phantom.hpp"

namespace fs = std::filesystem;

namespace dmn {

std::vector<const ImageRecord*> DatasetManifest::split_images(
    const std::string& split) const {
  std::vector<const ImageRecord*> out;
  for (const auto& img : images)
    if (img.split == split) out.push_back(&img);
  return out;
}

const StateRecord& DatasetManifest::state(int state_id) const {
  auto it = std::find_if(states.begin(), states.end(), [state_id](const auto& s) {
    return s.state_id == state_id;
  });
  if (it == states.end())
    throw InvalidArgument("manifest: no such state: " + std::to_string(state_id));
  return *it;
}

void write_nodal_field(const std::string& path, const NodalField& field) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for write: " + path);
  os.precision(17);
  os << field.size() << "\n";
  for (const auto& v : field.values) os << v.x << " " << v.y << " " << v.z << "\n";
  if (!os) throw IoError("write failed: " + path);
}

NodalField read_nodal_field(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::size_t n = 0;
  is >> n;
  NodalField f;
  f.values.resize(n);
  for (auto& v : f.values) is >> v.x >> v.y >> v.z;
  if (!is) throw IoError("truncated nodal field: " + path);
  return f;
}

ProjImage augment_kv_style(const ProjImage& drr, const AugmentConfig& config,
                           RngStream& rng) {
  ProjImage out = gaussian_blur(drr, config.blur_sigma);
  if (config.noise_level > 0.0) {
    for (double& p : out.pixels) {
      const double sigma = config.noise_level * std::sqrt(std::max(p, 0.0));
      p = std::clamp(p + rng.normal(0.0, config.noise_level * 0.25 + sigma),
                     0.0, 1.0);
    }
  }
  for (double& p : out.pixels)
    p = std::pow(std::clamp(p, 0.0, 1.0), config.contrast_gamma);
  return hist_equalize(out);
}

namespace {

std::string state_tag(int state_id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%04d", state_id);
  return buf;
}

}  // namespace

DatasetManifest generate_dataset(const RunConfig& config,
                                 const std::string& out_root) {
  config.validate();
  fs::create_directories(fs::path(out_root) / "images");
  fs::create_directories(fs::path(out_root) / "gt");

  DatasetManifest manifest;
  manifest.root = out_root;
  manifest.mesh_path = "template.msh";
  manifest.volume_path = "phantom.vol";

  const Volume3D volume = build_phantom_volume(config.phantom, config.seed);
  const TetMesh mesh = build_template_mesh(config.phantom);
  write_volume((fs::path(out_root) / manifest.volume_path).string(), volume);
  write_mesh((fs::path(out_root) / manifest.mesh_path).string(), mesh);

  const auto fields =
      build_motion_set(default_surrogate(), config.motion, config.seed);

  std::vector<int> order(fields.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream split_rng(config.seed, "split");
  std::shuffle(order.begin(), order.end(), split_rng.engine());
  std::vector<std::string> split_of(fields.size(), "unused");
  int cursor = 0;
  for (int i = 0; i < config.dataset.n_train_states; ++i)
    split_of[order[cursor++]] = "train";
  for (int i = 0; i < config.dataset.n_val_states; ++i)
    split_of[order[cursor++]] = "val";
  for (int i = 0; i < config.dataset.n_test_states; ++i)
    split_of[order[cursor++]] = "test";

  const int n_uniform = config.dataset.n_train_angles;
  for (std::size_t s = 0; s < fields.size(); ++s) {
    if (split_of[s] == "unused") continue;
    const DeformationField& field = fields[s];

    StateRecord rec;
    rec.state_id = field.state_id;
    rec.signal_id = field.signal_id;
    rec.phase_id = field.phase_id;
    rec.amplitude = field.amplitude;
    rec.rigid_shift = field.rigid_shift;
    rec.split = split_of[s];
    rec.gt_path = "gt/" + state_tag(field.state_id) + ".txt";

    NodalField gt = sample_field_at_nodes(field.grid, mesh);
    for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += mesh.vertices[i];
    write_nodal_field((fs::path(out_root) / rec.gt_path).string(), gt);
    manifest.states.push_back(rec);

    const Volume3D warped = warp_volume(volume, field);

    std::vector<double> angles;
    if (rec.split == "test") {
      RngStream angle_rng(config.seed, "test-angles",
                          static_cast<std::uint64_t>(field.state_id));
      for (int a = 0; a < config.dataset.n_test_angles; ++a)
        angles.push_back(angle_rng.uniform(0.0, 360.0));
    } else {
      for (int a = 0; a < n_uniform; ++a)
        angles.push_back(360.0 * a / n_uniform);
    }

    for (std::size_t a = 0; a < angles.size(); ++a) {
      const ProjectionGeometry geom = config.geometry.with_angle(angles[a]);
      ProjImage img = siddon_drr(warped, geom);
      RngStream aug_rng(config.seed, "augment",
                        static_cast<std::uint64_t>(field.state_id) * 1000 + a);
      if (config.augment.enabled)
        img = augment_kv_style(img, config.augment, aug_rng);
      else
        img = hist_equalize(img);

      ImageRecord irec;
      irec.state_id = field.state_id;
      irec.angle_deg = angles[a];
      irec.split = rec.split;
      char suffix[32];
      std::snprintf(suffix, sizeof(suffix), "_a%03zu.pgm", a);
      irec.path = "images/" + state_tag(field.state_id) + suffix;
      write_proj_image((fs::path(out_root) / irec.path).string(), img);
      manifest.images.push_back(irec);
    }
  }

  write_manifest((fs::path(out_root) / "manifest.txt").string(), manifest);
  return manifest;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for write: " + path);
  os.precision(17);
  os << "DMNSET 1\n";
  os << "mesh " << manifest.mesh_path << "\n";
  os << "volume " << manifest.volume_path << "\n";
  os << "states " << manifest.states.size() << "\n";
  for (const auto& s : manifest.states)
    os << s.state_id << " " << s.signal_id << " " << s.phase_id << " "
       << s.amplitude << " " << s.rigid_shift.x << " " << s.rigid_shift.y
       << " " << s.rigid_shift.z << " " << s.split << " " << s.gt_path << "\n";
  os << "images " << manifest.images.size() << "\n";
  for (const auto& img : manifest.images)
    os << img.state_id << " " << img.angle_deg << " " << img.split << " "
       << img.path << "\n";
  if (!os) throw IoError("write failed: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::string magic, key;
  int version = 0;
  is >> magic >> version;
  if (magic != "DMNSET" || version != 1)
    throw IoError("not a DMNSET v1 file: " + path);
  DatasetManifest m;
  m.root = fs::path(path).parent_path().string();
  std::size_t n = 0;
  is >> key >> m.mesh_path;
  if (key != "mesh") throw IoError("bad manifest (mesh): " + path);
  is >> key >> m.volume_path;
  if (key != "volume") throw IoError("bad manifest (volume): " + path);
  is >> key >> n;
  if (key != "states") throw IoError("bad manifest (states): " + path);
  m.states.resize(n);
  for (auto& s : m.states)
    is >> s.state_id >> s.signal_id >> s.phase_id >> s.amplitude >>
        s.rigid_shift.x >> s.rigid_shift.y >> s.rigid_shift.z >> s.split >>
        s.gt_path;
  is >> key >> n;
  if (key != "images") throw IoError("bad manifest (images): " + path);
  m.images.resize(n);
  for (auto& img : m.images)
    is >> img.state_id >> img.angle_deg >> img.split >> img.path;
  if (!is) throw IoError("truncated manifest: " + path);
  return m;
}

}  // namespace dmn
