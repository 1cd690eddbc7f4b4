#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dmn {

// All randomness in the project flows from one master seed through named
// streams, so independent pipeline stages (and per-state jobs) draw from
// decorrelated, reproducible sequences.
class RngStream {
public:
  RngStream(std::uint64_t master_seed, std::string_view stream_name)
      : engine_(mix(master_seed ^ fnv1a(stream_name))) {}

  RngStream(std::uint64_t master_seed, std::string_view stream_name,
            std::uint64_t index)
      : engine_(mix(mix(master_seed ^ fnv1a(stream_name)) + index)) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

private:
  std::mt19937_64 engine_;
};

}  // namespace dmn
