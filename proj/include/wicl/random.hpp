#pragma once

#include <cstdint>
#include <random>

namespace wicl {

// Seeded generator whose output sequence is fixed by the standard
// (mt19937_64) and whose derived draws avoid implementation-defined
// distributions, so sampled subsets are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform integer in [0, n), n >= 1, by rejection sampling.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace wicl
