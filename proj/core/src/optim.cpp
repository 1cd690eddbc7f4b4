#include "dmn/optim.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace dmn {

Tensor& ParamStore::create(const std::string& name, std::vector<int> shape) {
  if (map_.count(name))
    throw InvalidArgument("ParamStore::create: duplicate parameter " + name);
  Entry e;
  e.tensor = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  e.m.assign(e.tensor.numel(), 0.0);
  e.v.assign(e.tensor.numel(), 0.0);
  order_.push_back(name);
  return map_.emplace(name, std::move(e)).first->second.tensor;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = map_.find(name);
  if (it == map_.end()) throw UnknownParameter("no such parameter: " + name);
  return it->second.tensor;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = map_.find(name);
  if (it == map_.end()) throw UnknownParameter("no such parameter: " + name);
  return it->second.tensor;
}

bool ParamStore::contains(const std::string& name) const {
  return map_.count(name) != 0;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = map_.find(name);
  if (it == map_.end()) throw UnknownParameter("no such parameter: " + name);
  return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = map_.find(name);
  if (it == map_.end()) throw UnknownParameter("no such parameter: " + name);
  return it->second;
}

std::size_t ParamStore::total_parameters() const {
  std::size_t n = 0;
  for (const auto& name : order_) n += map_.at(name).tensor.numel();
  return n;
}

void adam_step(ParamStore& store, double lr, double weight_decay, double beta1,
               double beta2, double eps) {
  store.step_ += 1;
  const double t = static_cast<double>(store.step_);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (const auto& name : store.order_) {
    auto& e = store.map_.at(name);
    auto& theta = e.tensor.data();
    const auto& grad = e.tensor.grad();
    if (grad.size() != theta.size()) continue;  // untouched by this backward
    double* __restrict th = theta.data();
    const double* __restrict gr = grad.data();
    double* __restrict em = e.m.data();
    double* __restrict ev = e.v.data();
    const std::size_t n = theta.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = gr[i] + weight_decay * th[i];
      em[i] = beta1 * em[i] + (1.0 - beta1) * g;
      ev[i] = beta2 * ev[i] + (1.0 - beta2) * g * g;
      const double mhat = em[i] / bc1;
      const double vhat = ev[i] / bc2;
      th[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void glorot_init(Tensor& t, RngStream& rng) {
  const auto& shape = t.shape();
  double fan_in = 1.0, fan_out = 1.0;
  if (shape.size() == 2) {
    fan_out = shape[0];
    fan_in = shape[1];
  } else if (shape.size() == 4) {
    const double rf = static_cast<double>(shape[2]) * shape[3];
    fan_out = shape[0] * rf;
    fan_in = shape[1] * rf;
  } else if (shape.size() == 1) {
    fan_in = fan_out = shape[0];
  } else {
    throw InvalidArgument("glorot_init: unsupported tensor rank");
  }
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
}

void write_checkpoint(const std::string& path, const ParamStore& store,
                      const std::map<std::string, std::string>& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os << "DMNCKPT 1\n";
  os << "step " << store.step() << "\n";
  os << "meta " << meta.size() << "\n";
  for (const auto& [k, v] : meta) os << k << " " << v << "\n";
  os << "params " << store.names().size() << "\n";
  static_assert(sizeof(double) == 8);
  for (const auto& name : store.names()) {
    const ParamStore::Entry& e = store.entry(name);
    const Tensor& t = e.tensor;
    os << name << " " << t.shape().size();
    for (int d : t.shape()) os << " " << d;
    os << "\n";
    const auto bytes = static_cast<std::streamsize>(t.numel() * sizeof(double));
    os.write(reinterpret_cast<const char*>(t.data().data()), bytes);
    os.write(reinterpret_cast<const char*>(e.m.data()), bytes);
    os.write(reinterpret_cast<const char*>(e.v.data()), bytes);
    os << "\n";
  }
  if (!os) throw IoError("checkpoint write failed: " + path);
}

void read_checkpoint(const std::string& path, ParamStore& store,
                     std::map<std::string, std::string>& meta) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::string magic, key;
  int version = 0;
  is >> magic >> version;
  if (magic != "DMNCKPT" || version != 1)
    throw IoError("not a DMNCKPT v1 file: " + path);
  std::int64_t step = 0;
  std::size_t n_meta = 0, n_params = 0;
  is >> key >> step;
  if (key != "step") throw IoError("bad checkpoint header (step): " + path);
  is >> key >> n_meta;
  if (key != "meta") throw IoError("bad checkpoint header (meta): " + path);
  is.ignore();
  meta.clear();
  for (std::size_t i = 0; i < n_meta; ++i) {
    std::string line;
    if (!std::getline(is, line)) throw IoError("truncated metadata: " + path);
    const auto sp = line.find(' ');
    if (sp == std::string::npos)
      throw IoError("malformed metadata line: " + path);
    meta[line.substr(0, sp)] = line.substr(sp + 1);
  }
  is >> key >> n_params;
  if (key != "params") throw IoError("bad checkpoint header (params): " + path);
  store.set_step(step);
  for (std::size_t p = 0; p < n_params; ++p) {
    std::string name;
    std::size_t rank = 0;
    is >> name >> rank;
    std::vector<int> shape(rank);
    for (auto& d : shape) is >> d;
    is.get();  // newline before payload
    if (!is) throw IoError("truncated parameter record: " + path);
    if (!store.contains(name)) store.create(name, shape);
    ParamStore::Entry& e = store.entry(name);
    Tensor& t = e.tensor;
    if (t.shape() != shape)
      throw ShapeMismatch("checkpoint shape mismatch for " + name);
    const auto bytes = static_cast<std::streamsize>(t.numel() * sizeof(double));
    const auto read_block = [&](double* dst) {
      is.read(reinterpret_cast<char*>(dst), bytes);
      if (is.gcount() != bytes)
        throw IoError("truncated parameter payload: " + path);
    };
    read_block(t.data().data());
    e.m.resize(t.numel());
    e.v.resize(t.numel());
    read_block(e.m.data());
    read_block(e.v.data());
    is.get();  // trailing newline
  }
}

}  // namespace dmn
