#include "igds/rng.hpp"

#include <vector>

namespace igds {

Rng Rng::derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (std::uint64_t p : path) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t halves[2];
  seq.generate(halves, halves + 2);
  return Rng((static_cast<std::uint64_t>(halves[0]) << 32) | halves[1]);
}

nd::Tensor Rng::normal_tensor(const nd::Shape& shape) {
  nd::Tensor t(shape);
  for (double& v : t.data()) v = normal();
  return t;
}

}  // namespace igds
