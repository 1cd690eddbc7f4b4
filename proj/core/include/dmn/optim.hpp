#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "dmn/rng.hpp"
#include "dmn/tensor.hpp"

namespace dmn {

struct UnknownParameter : Error {
  using Error::Error;
};

// Named trainable tensors plus per-parameter Adam moments. One step counter
// is shared by every parameter so bias correction stays consistent.
class ParamStore {
public:
  struct Entry {
    Tensor tensor;
    std::vector<double> m, v;
  };

  Tensor& create(const std::string& name, std::vector<int> shape);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;

  const std::vector<std::string>& names() const { return order_; }
  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }
  std::size_t total_parameters() const;

private:
  friend void adam_step(ParamStore&, double, double, double, double, double);
  std::vector<std::string> order_;
  std::unordered_map<std::string, Entry> map_;
  std::int64_t step_ = 0;
};

// Classic Adam with the weight-decay term folded into the gradient
// (g <- g + wd * theta), then bias-corrected moment updates. Parameters whose
// gradient buffer is empty (not visited by the last backward pass) are
// skipped.
void adam_step(ParamStore& store, double lr, double weight_decay,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)). Rank-2 weights are
// [out, in]; rank-4 convolution kernels are [out_ch, in_ch, kh, kw].
void glorot_init(Tensor& t, RngStream& rng);

// Versioned checkpoint: text header with free-form metadata, then one record
// per parameter (name, shape, raw little-endian float64 payloads for the
// values and both Adam moments). Round-trips bit-exactly, so training can
// resume deterministically.
void write_checkpoint(const std::string& path, const ParamStore& store,
                      const std::map<std::string, std::string>& meta);
void read_checkpoint(const std::string& path, ParamStore& store,
                     std::map<std::string, std::string>& meta);

}  // namespace dmn
