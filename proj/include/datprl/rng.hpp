// SPDX-License-Identifier: Apache-2.0

#ifndef DATPRL_RNG_HPP
#define DATPRL_RNG_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace datprl {

/// mt19937_64 with stateless draw helpers. Distributions are constructed per
/// draw so the engine alone carries all state, which keeps save/restore exact.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }
  /// Child seed for an independent stream.
  std::uint64_t split() { return engine_() ^ 0x9E3779B97F4A7C15ULL; }

  std::string serialize() const;
  static Rng deserialize(const std::string &state);

  bool operator==(const Rng &other) const { return engine_ == other.engine_; }

private:
  std::mt19937_64 engine_;
};

} // namespace datprl

#endif // DATPRL_RNG_HPP
