#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "igds/ndnum/tensor.hpp"

namespace igds {

/// Seeded random source. All randomness in the library flows through this
/// type; nothing reads ambient entropy.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent stream keyed by a seed and a path of integers, e.g.
  /// derive(seed, {class_id, ipc}).
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return normal_(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  std::uint64_t next_u64() { return engine_(); }

  nd::Tensor normal_tensor(const nd::Shape& shape);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace igds
