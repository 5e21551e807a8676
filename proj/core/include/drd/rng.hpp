#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

#include "drd/types.hpp"

namespace drd::rng {

// SplitMix64 finalizer.
std::uint64_t mix(std::uint64_t x);

// Stable 64-bit tag for a substream name.
std::uint64_t tag(std::string_view name);

// Derives a child seed from a parent seed and a path of keys. Every random
// draw in the library is addressed this way, so results never depend on
// call order, batching or thread scheduling.
std::uint64_t derive(std::uint64_t parent, std::initializer_list<std::uint64_t> path);

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  double gaussian() { return normal_(engine_); }
  Vector gaussian_vector(int dim);
  double uniform() { return uniform_(engine_); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace drd::rng
