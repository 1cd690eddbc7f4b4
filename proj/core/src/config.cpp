#include "dmn/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dmn/rng.hpp"

namespace dmn {

void ScheduleConfig::validate() const {
  if (lr <= 0.0) throw InvalidArgument("schedule.lr must be > 0");
  if (weight_decay < 0.0)
    throw InvalidArgument("schedule.weight_decay must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw InvalidArgument("schedule betas must lie in [0, 1)");
  if (batch_size < 1) throw InvalidArgument("schedule.batch_size must be >= 1");
  if (epoch_cap < 1) throw InvalidArgument("schedule.epoch_cap must be >= 1");
  if (patience < 1) throw InvalidArgument("schedule.patience must be >= 1");
  if (lr_patience < 1)
    throw InvalidArgument("schedule.lr_patience must be >= 1");
  if (lr_factor <= 0.0 || lr_factor >= 1.0)
    throw InvalidArgument("schedule.lr_factor must lie in (0, 1)");
}

void DatasetConfig::validate() const {
  if (n_train_states < 1 || n_val_states < 1 || n_test_states < 1)
    throw InvalidArgument("dataset split sizes must be >= 1");
  if (n_train_angles < 1 || n_test_angles < 1)
    throw InvalidArgument("dataset angle counts must be >= 1");
}

void AugmentConfig::validate() const {
  if (blur_sigma < 0.0) throw InvalidArgument("augment.blur_sigma must be >= 0");
  if (noise_level < 0.0)
    throw InvalidArgument("augment.noise_level must be >= 0");
  if (contrast_gamma <= 0.0)
    throw InvalidArgument("augment.contrast_gamma must be > 0");
}

void RunConfig::validate() const {
  phantom.validate();
  geometry.validate();
  schedule.validate();
  dataset.validate();
  augment.validate();
  if (motion.n_signals < 1 || motion.n_shift_variants < 1)
    throw InvalidArgument("motion counts must be >= 1");
  if (motion.shift_range < 0.0)
    throw InvalidArgument("motion.shift_range must be >= 0");
  const int total = motion.n_signals * SurrogateSignal::kPhases *
                    motion.n_shift_variants;
  if (dataset.n_train_states + dataset.n_val_states + dataset.n_test_states >
      total)
    throw InvalidArgument("dataset splits exceed the motion-state count");
  if (geometry.detector_pixels[0] != model.image_size ||
      geometry.detector_pixels[1] != model.image_size)
    throw InvalidArgument("geometry.detector_pixels must match model.image_size");
  // n_vertices is resolved from the generated template mesh.
  ModelConfig m = model;
  m.n_vertices = std::max(m.n_vertices, 4);
  m.validate();
}

void RunConfig::resolve() {
  motion.shape.envelope_center = phantom.liver_center;
  motion.grid = phantom.grid();
}

RunConfig default_run_config() {
  RunConfig c;
  c.motion.n_signals = 2;
  c.motion.n_shift_variants = 3;
  c.resolve();
  return c;
}

namespace {

struct KeyTable {
  std::map<std::string, std::function<void(RunConfig&, std::istringstream&)>>
      setters;
  std::map<std::string, std::function<std::string(const RunConfig&)>> getters;

  template <typename Get, typename Set>
  void field(const std::string& key, Get get, Set set) {
    setters[key] = std::move(set);
    getters[key] = [get](const RunConfig& c) {
      std::ostringstream os;
      os.precision(17);
      get(c, os);
      return os.str();
    };
  }
};

void read_bool(std::istringstream& is, bool& out) {
  std::string v;
  is >> v;
  if (v == "true" || v == "1")
    out = true;
  else if (v == "false" || v == "0")
    out = false;
  else
    throw InvalidArgument("expected a boolean, got: " + v);
}

const KeyTable& key_table() {
  static const KeyTable table = [] {
    KeyTable t;
    auto scalar = [&t](const std::string& key, auto member) {
      t.field(
          key,
          [member](const RunConfig& c, std::ostream& os) { os << c.*member; },
          [member](RunConfig& c, std::istringstream& is) { is >> c.*member; });
    };
    auto sub = [&t](const std::string& key, auto section, auto member) {
      t.field(
          key,
          [section, member](const RunConfig& c, std::ostream& os) {
            os << (c.*section).*member;
          },
          [section, member](RunConfig& c, std::istringstream& is) {
            is >> (c.*section).*member;
          });
    };
    auto sub_bool = [&t](const std::string& key, auto section, auto member) {
      t.field(
          key,
          [section, member](const RunConfig& c, std::ostream& os) {
            os << ((c.*section).*member ? "true" : "false");
          },
          [section, member](RunConfig& c, std::istringstream& is) {
            read_bool(is, (c.*section).*member);
          });
    };
    auto sub_vec3 = [&t](const std::string& key, auto section, auto member) {
      t.field(
          key,
          [section, member](const RunConfig& c, std::ostream& os) {
            const Vec3& v = (c.*section).*member;
            os << v.x << " " << v.y << " " << v.z;
          },
          [section, member](RunConfig& c, std::istringstream& is) {
            Vec3& v = (c.*section).*member;
            is >> v.x >> v.y >> v.z;
          });
    };

    scalar("seed", &RunConfig::seed);
    scalar("paths.out", &RunConfig::out_dir);

    t.field(
        "phantom.volume_dims",
        [](const RunConfig& c, std::ostream& os) {
          os << c.phantom.volume_dims[0] << " " << c.phantom.volume_dims[1]
             << " " << c.phantom.volume_dims[2];
        },
        [](RunConfig& c, std::istringstream& is) {
          is >> c.phantom.volume_dims[0] >> c.phantom.volume_dims[1] >>
              c.phantom.volume_dims[2];
        });
    sub_vec3("phantom.voxel_spacing", &RunConfig::phantom,
             &PhantomConfig::voxel_spacing);
    sub_vec3("phantom.body_radii", &RunConfig::phantom,
             &PhantomConfig::body_radii);
    sub("phantom.body_density", &RunConfig::phantom,
        &PhantomConfig::body_density);
    sub_vec3("phantom.liver_center", &RunConfig::phantom,
             &PhantomConfig::liver_center);
    sub_vec3("phantom.liver_radii", &RunConfig::phantom,
             &PhantomConfig::liver_radii);
    sub("phantom.liver_density", &RunConfig::phantom,
        &PhantomConfig::liver_density);
    sub("phantom.texture_amplitude", &RunConfig::phantom,
        &PhantomConfig::texture_amplitude);
    sub("phantom.texture_scale", &RunConfig::phantom,
        &PhantomConfig::texture_scale);
    sub("phantom.n_ribs", &RunConfig::phantom, &PhantomConfig::n_ribs);
    sub("phantom.rib_density", &RunConfig::phantom,
        &PhantomConfig::rib_density);
    sub("phantom.rib_radius", &RunConfig::phantom, &PhantomConfig::rib_radius);
    sub("phantom.target_vertices", &RunConfig::phantom,
        &PhantomConfig::target_vertices);

    sub("motion.n_signals", &RunConfig::motion, &MotionSetConfig::n_signals);
    sub("motion.n_shift_variants", &RunConfig::motion,
        &MotionSetConfig::n_shift_variants);
    sub("motion.shift_range", &RunConfig::motion,
        &MotionSetConfig::shift_range);
    t.field(
        "motion.envelope_sigma",
        [](const RunConfig& c, std::ostream& os) {
          const Vec3& v = c.motion.shape.envelope_sigma;
          os << v.x << " " << v.y << " " << v.z;
        },
        [](RunConfig& c, std::istringstream& is) {
          Vec3& v = c.motion.shape.envelope_sigma;
          is >> v.x >> v.y >> v.z;
        });
    t.field(
        "motion.si_magnitude",
        [](const RunConfig& c, std::ostream& os) {
          os << c.motion.shape.si_magnitude;
        },
        [](RunConfig& c, std::istringstream& is) {
          is >> c.motion.shape.si_magnitude;
        });
    t.field(
        "motion.ap_magnitude",
        [](const RunConfig& c, std::ostream& os) {
          os << c.motion.shape.ap_magnitude;
        },
        [](RunConfig& c, std::istringstream& is) {
          is >> c.motion.shape.ap_magnitude;
        });
    t.field(
        "motion.max_displacement",
        [](const RunConfig& c, std::ostream& os) {
          os << c.motion.shape.max_displacement;
        },
        [](RunConfig& c, std::istringstream& is) {
          is >> c.motion.shape.max_displacement;
        });

    sub("geometry.source_axis_distance", &RunConfig::geometry,
        &ProjectionGeometry::source_axis_distance);
    sub("geometry.source_detector_distance", &RunConfig::geometry,
        &ProjectionGeometry::source_detector_distance);
    t.field(
        "geometry.detector_pixels",
        [](const RunConfig& c, std::ostream& os) {
          os << c.geometry.detector_pixels[0] << " "
             << c.geometry.detector_pixels[1];
        },
        [](RunConfig& c, std::istringstream& is) {
          is >> c.geometry.detector_pixels[0] >> c.geometry.detector_pixels[1];
        });
    sub("geometry.detector_pixel_size", &RunConfig::geometry,
        &ProjectionGeometry::detector_pixel_size);

    sub("model.image_size", &RunConfig::model, &ModelConfig::image_size);
    t.field(
        "model.encoder_channels",
        [](const RunConfig& c, std::ostream& os) {
          os << c.model.encoder_channels[0] << " " << c.model.encoder_channels[1]
             << " " << c.model.encoder_channels[2] << " "
             << c.model.encoder_channels[3];
        },
        [](RunConfig& c, std::istringstream& is) {
          for (auto& ch : c.model.encoder_channels) is >> ch;
        });
    sub("model.fpn_features_per_vertex", &RunConfig::model,
        &ModelConfig::fpn_features_per_vertex);
    sub("model.gnn_hidden", &RunConfig::model, &ModelConfig::gnn_hidden);
    sub("model.gnn_blocks", &RunConfig::model, &ModelConfig::gnn_blocks);
    sub_bool("model.use_residual", &RunConfig::model,
             &ModelConfig::use_residual);
    t.field(
        "model.graph_layer",
        [](const RunConfig& c, std::ostream& os) {
          os << (c.model.graph_layer == GraphLayerKind::attention
                     ? "attention"
                     : "convolutional");
        },
        [](RunConfig& c, std::istringstream& is) {
          std::string v;
          is >> v;
          if (v == "attention")
            c.model.graph_layer = GraphLayerKind::attention;
          else if (v == "convolutional")
            c.model.graph_layer = GraphLayerKind::convolutional;
          else
            throw InvalidArgument("model.graph_layer must be attention or "
                                  "convolutional, got: " + v);
        });
    sub("model.n_fpns", &RunConfig::model, &ModelConfig::n_fpns);
    sub_bool("model.use_angle_channel", &RunConfig::model,
             &ModelConfig::use_angle_channel);
    sub("model.lambda", &RunConfig::model, &ModelConfig::lambda);

    sub("schedule.lr", &RunConfig::schedule, &ScheduleConfig::lr);
    sub("schedule.weight_decay", &RunConfig::schedule,
        &ScheduleConfig::weight_decay);
    sub("schedule.beta1", &RunConfig::schedule, &ScheduleConfig::beta1);
    sub("schedule.beta2", &RunConfig::schedule, &ScheduleConfig::beta2);
    sub("schedule.batch_size", &RunConfig::schedule,
        &ScheduleConfig::batch_size);
    sub("schedule.epoch_cap", &RunConfig::schedule, &ScheduleConfig::epoch_cap);
    sub("schedule.patience", &RunConfig::schedule, &ScheduleConfig::patience);
    sub("schedule.lr_patience", &RunConfig::schedule,
        &ScheduleConfig::lr_patience);
    sub("schedule.lr_factor", &RunConfig::schedule, &ScheduleConfig::lr_factor);

    sub("dataset.n_train_states", &RunConfig::dataset,
        &DatasetConfig::n_train_states);
    sub("dataset.n_val_states", &RunConfig::dataset,
        &DatasetConfig::n_val_states);
    sub("dataset.n_test_states", &RunConfig::dataset,
        &DatasetConfig::n_test_states);
    sub("dataset.n_train_angles", &RunConfig::dataset,
        &DatasetConfig::n_train_angles);
    sub("dataset.n_test_angles", &RunConfig::dataset,
        &DatasetConfig::n_test_angles);

    sub_bool("augment.enabled", &RunConfig::augment, &AugmentConfig::enabled);
    sub("augment.blur_sigma", &RunConfig::augment, &AugmentConfig::blur_sigma);
    sub("augment.noise_level", &RunConfig::augment,
        &AugmentConfig::noise_level);
    sub("augment.contrast_gamma", &RunConfig::augment,
        &AugmentConfig::contrast_gamma);
    return t;
  }();
  return table;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig c = default_run_config();
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("config line " + std::to_string(line_no) +
                            ": expected 'key = value'");
    std::istringstream key_in(line.substr(0, eq));
    std::string key;
    key_in >> key;
    const auto& table = key_table();
    auto it = table.setters.find(key);
    if (it == table.setters.end())
      throw UnknownKey("unknown config key: " + key);
    std::istringstream value_in(line.substr(eq + 1));
    it->second(c, value_in);
    if (value_in.fail())
      throw InvalidArgument("config line " + std::to_string(line_no) +
                            ": malformed value for " + key);
  }
  c.resolve();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_run_config(buf.str());
}

std::string serialize_run_config(const RunConfig& config) {
  std::ostringstream os;
  const auto& table = key_table();
  for (const auto& [key, get] : table.getters)
    os << key << " = " << get(config) << "\n";
  return os.str();
}

std::uint64_t config_hash(const RunConfig& config) {
  return RngStream::fnv1a(serialize_run_config(config));
}

}  // namespace dmn
