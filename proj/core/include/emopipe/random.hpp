#pragma once

#include <cstdint>
#include <random>

namespace emopipe {

// Seeded generator whose derived draws are bit-identical across standard
// libraries. std::mt19937_64 is fully specified by the standard, but the
// <random> distributions are not, so the draws below are computed by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01();

  // Uniform integer on [0, bound); bound must be nonzero. Rejection sampling
  // removes modulo bias.
  std::uint64_t uniform_index(std::uint64_t bound);

  // Standard normal via the Marsaglia polar method.
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace emopipe
