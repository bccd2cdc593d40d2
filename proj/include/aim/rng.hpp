#pragma once

#include <cstdint>

namespace aim {

// Seeded splitmix64 stream. Self-contained so that draws are bit-stable
// across platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev);
  // Gumbel(0,1).
  double gumbel();

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stateless stream derivation: child seed for (master, index).
std::uint64_t split_seed(std::uint64_t master, std::uint64_t index);

}  // namespace aim
