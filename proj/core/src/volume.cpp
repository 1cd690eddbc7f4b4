#include "dmn/volume.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dmn {

Volume3D::Volume3D(std::array<int, 3> d, Vec3 sp, Vec3 org, double fill)
    : dims(d), spacing(sp), origin(org) {
  validate();
  data.assign(size(), fill);
}

void Volume3D::validate() const {
  if (dims[0] < 2 || dims[1] < 2 || dims[2] < 2)
    throw InvalidArgument("Volume3D: all dims must be >= 2");
  if (spacing.x <= 0 || spacing.y <= 0 || spacing.z <= 0)
    throw InvalidArgument("Volume3D: spacing must be positive");
  if (!data.empty() && data.size() != size())
    throw InvalidArgument("Volume3D: data length does not match dims");
}

bool Volume3D::same_grid(const Volume3D& o) const {
  return dims == o.dims && spacing.x == o.spacing.x &&
         spacing.y == o.spacing.y && spacing.z == o.spacing.z &&
         origin.x == o.origin.x && origin.y == o.origin.y &&
         origin.z == o.origin.z;
}

namespace {

struct TrilinearWeights {
  int i0, j0, k0;
  double fx, fy, fz;
  bool inside;
};

template <typename GridT>
TrilinearWeights locate(const GridT& g, const Vec3& p) {
  TrilinearWeights w{};
  const double gx = (p.x - g.origin.x) / g.spacing.x;
  const double gy = (p.y - g.origin.y) / g.spacing.y;
  const double gz = (p.z - g.origin.z) / g.spacing.z;
  w.inside = gx >= 0.0 && gy >= 0.0 && gz >= 0.0 && gx <= g.dims[0] - 1 &&
             gy <= g.dims[1] - 1 && gz <= g.dims[2] - 1;
  w.i0 = std::min(static_cast<int>(std::floor(gx)), g.dims[0] - 2);
  w.j0 = std::min(static_cast<int>(std::floor(gy)), g.dims[1] - 2);
  w.k0 = std::min(static_cast<int>(std::floor(gz)), g.dims[2] - 2);
  w.i0 = std::max(w.i0, 0);
  w.j0 = std::max(w.j0, 0);
  w.k0 = std::max(w.k0, 0);
  w.fx = gx - w.i0;
  w.fy = gy - w.j0;
  w.fz = gz - w.k0;
  return w;
}

// The two-weight form reproduces the endpoints exactly (f = 0 or 1 yields
// the corner value bitwise), so sampling at a grid point is the identity.
double lerp1(double a, double b, double f) { return (1.0 - f) * a + f * b; }

double lerp8(double c000, double c100, double c010, double c110, double c001,
             double c101, double c011, double c111, double fx, double fy,
             double fz) {
  const double c00 = lerp1(c000, c100, fx);
  const double c10 = lerp1(c010, c110, fx);
  const double c01 = lerp1(c001, c101, fx);
  const double c11 = lerp1(c011, c111, fx);
  const double c0 = lerp1(c00, c10, fy);
  const double c1 = lerp1(c01, c11, fy);
  return lerp1(c0, c1, fz);
}

}  // namespace

double Volume3D::sample(const Vec3& p, double outside) const {
  const auto w = locate(*this, p);
  if (!w.inside) return outside;
  return lerp8(at(w.i0, w.j0, w.k0), at(w.i0 + 1, w.j0, w.k0),
               at(w.i0, w.j0 + 1, w.k0), at(w.i0 + 1, w.j0 + 1, w.k0),
               at(w.i0, w.j0, w.k0 + 1), at(w.i0 + 1, w.j0, w.k0 + 1),
               at(w.i0, w.j0 + 1, w.k0 + 1), at(w.i0 + 1, w.j0 + 1, w.k0 + 1),
               w.fx, w.fy, w.fz);
}

VectorGrid::VectorGrid(std::array<int, 3> d, Vec3 sp, Vec3 org)
    : dims(d), spacing(sp), origin(org) {
  if (dims[0] < 2 || dims[1] < 2 || dims[2] < 2)
    throw InvalidArgument("VectorGrid: all dims must be >= 2");
  if (spacing.x <= 0 || spacing.y <= 0 || spacing.z <= 0)
    throw InvalidArgument("VectorGrid: spacing must be positive");
  data.assign(3 * voxels(), 0.0);
}

bool VectorGrid::contains(const Vec3& p) const {
  const Vec3 lo = min_corner(), hi = max_corner();
  return p.x >= lo.x && p.y >= lo.y && p.z >= lo.z && p.x <= hi.x &&
         p.y <= hi.y && p.z <= hi.z;
}

Vec3 VectorGrid::sample(const Vec3& p) const {
  const auto w = locate(*this, p);
  if (!w.inside) {
    std::ostringstream os;
    os << "VectorGrid::sample: point (" << p.x << ", " << p.y << ", " << p.z
       << ") outside grid domain";
    throw OutOfDomain(os.str());
  }
  Vec3 out;
  for (int c = 0; c < 3; ++c) {
    out[c] = lerp8(at(c, w.i0, w.j0, w.k0), at(c, w.i0 + 1, w.j0, w.k0),
                   at(c, w.i0, w.j0 + 1, w.k0), at(c, w.i0 + 1, w.j0 + 1, w.k0),
                   at(c, w.i0, w.j0, w.k0 + 1), at(c, w.i0 + 1, w.j0, w.k0 + 1),
                   at(c, w.i0, w.j0 + 1, w.k0 + 1),
                   at(c, w.i0 + 1, w.j0 + 1, w.k0 + 1), w.fx, w.fy, w.fz);
  }
  return out;
}

Vec3 VectorGrid::sample_clamped(const Vec3& p) const {
  const Vec3 lo = min_corner(), hi = max_corner();
  Vec3 q{std::clamp(p.x, lo.x, hi.x), std::clamp(p.y, lo.y, hi.y),
         std::clamp(p.z, lo.z, hi.z)};
  return sample(q);
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_header(std::ostream& os, const std::array<int, 3>& dims,
                  const Vec3& spacing, const Vec3& origin, int channels) {
  os << "DMNVOL 1\n";
  os << "dims " << dims[0] << " " << dims[1] << " " << dims[2] << "\n";
  os << "spacing " << fmt_double(spacing.x) << " " << fmt_double(spacing.y)
     << " " << fmt_double(spacing.z) << "\n";
  os << "origin " << fmt_double(origin.x) << " " << fmt_double(origin.y) << " "
     << fmt_double(origin.z) << "\n";
  os << "dtype f64\n";
  os << "channels " << channels << "\n";
}

void read_header(std::istream& is, const std::string& path,
                 std::array<int, 3>& dims, Vec3& spacing, Vec3& origin,
                 int& channels) {
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "DMNVOL" || version != 1)
    throw IoError("not a DMNVOL v1 file: " + path);
  std::string key, dtype;
  is >> key >> dims[0] >> dims[1] >> dims[2];
  if (key != "dims") throw IoError("bad volume header (dims): " + path);
  is >> key >> spacing.x >> spacing.y >> spacing.z;
  if (key != "spacing") throw IoError("bad volume header (spacing): " + path);
  is >> key >> origin.x >> origin.y >> origin.z;
  if (key != "origin") throw IoError("bad volume header (origin): " + path);
  is >> key >> dtype;
  if (key != "dtype" || dtype != "f64")
    throw IoError("bad volume header (dtype): " + path);
  is >> key >> channels;
  if (key != "channels") throw IoError("bad volume header (channels): " + path);
  is.get();  // consume the newline before the payload
  if (!is) throw IoError("truncated volume header: " + path);
}

void write_payload(std::ostream& os, const std::vector<double>& data) {
  static_assert(sizeof(double) == 8);
  os.write(reinterpret_cast<const char*>(data.data()),
           static_cast<std::streamsize>(data.size() * sizeof(double)));
}

void read_payload(std::istream& is, const std::string& path,
                  std::vector<double>& data) {
  is.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (is.gcount() != static_cast<std::streamsize>(data.size() * sizeof(double)))
    throw IoError("truncated volume payload: " + path);
}

}  // namespace

void write_volume(const std::string& path, const Volume3D& v) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  write_header(os, v.dims, v.spacing, v.origin, 1);
  write_payload(os, v.data);
  if (!os) throw IoError("write failed: " + path);
}

Volume3D read_volume(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  Volume3D v;
  int channels = 0;
  read_header(is, path, v.dims, v.spacing, v.origin, channels);
  if (channels != 1) throw IoError("expected 1-channel volume: " + path);
  v.validate();
  v.data.resize(v.size());
  read_payload(is, path, v.data);
  return v;
}

void write_vector_grid(const std::string& path, const VectorGrid& g) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  write_header(os, g.dims, g.spacing, g.origin, 3);
  write_payload(os, g.data);
  if (!os) throw IoError("write failed: " + path);
}

VectorGrid read_vector_grid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::array<int, 3> dims;
  Vec3 spacing, origin;
  int channels = 0;
  read_header(is, path, dims, spacing, origin, channels);
  if (channels != 3) throw IoError("expected 3-channel grid: " + path);
  VectorGrid g(dims, spacing, origin);
  read_payload(is, path, g.data);
  return g;
}

}  // namespace dmn
